#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>
#include <utility>

#include "sleepeff/dataset.hpp"
#include "sleepeff/errors.hpp"

namespace sleepeff::dataset {

double compute_efficiency(double minsasleep, double minsawake) {
  if (!std::isfinite(minsasleep) || !std::isfinite(minsawake) || minsasleep < 0.0 ||
      minsawake < 0.0)
    throw Error("sleep minutes must be finite and non-negative");
  if (minsasleep == 0.0 && minsawake == 0.0) throw DegenerateSleepRecord();
  return minsasleep / (minsasleep + minsawake);
}

std::vector<double> MergedTable::targets() const {
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r.target);
  return out;
}

void MergedTable::validate() const {
  std::set<std::pair<std::string, int>> keys;
  for (const auto& r : rows) {
    if (r.features.size() != schema.input_length())
      throw std::invalid_argument("row feature vector length differs from schema input_length");
    if (!(r.target >= 0.0 && r.target <= 1.0))
      throw std::invalid_argument("target outside [0, 1]");
    const int day = std::chrono::sys_days(r.date).time_since_epoch().count();
    if (!keys.emplace(r.participant_id, day).second)
      throw std::invalid_argument("duplicate (participant, date) key " + r.participant_id + " " +
                                  format_date(r.date));
  }
}

RecordSet encode_survey(const RecordSet& records, const FeatureSchema& schema) {
  RecordSet out = records;
  for (std::size_t c = 0; c < out.columns.size(); ++c) {
    auto idx = schema.index_of(out.columns[c]);
    if (!idx || schema.at(*idx).kind != Kind::categorical_ordinal) continue;
    const FeatureDescriptor& f = schema.at(*idx);
    for (auto& rec : out.records) {
      Cell& cell = rec.cells[c];
      if (const auto* label = std::get_if<std::string>(&cell)) {
        auto code = f.code_of(*label);
        if (!code) throw UnknownCategory(f.name, *label);
        cell = static_cast<double>(*code);
      }
    }
  }
  return out;
}

RecordSet decode_survey(const RecordSet& records, const FeatureSchema& schema) {
  RecordSet out = records;
  for (std::size_t c = 0; c < out.columns.size(); ++c) {
    auto idx = schema.index_of(out.columns[c]);
    if (!idx || schema.at(*idx).kind != Kind::categorical_ordinal) continue;
    const FeatureDescriptor& f = schema.at(*idx);
    for (auto& rec : out.records) {
      Cell& cell = rec.cells[c];
      if (const auto* code = std::get_if<double>(&cell)) {
        auto label = f.label_of(static_cast<int>(*code));
        if (!label || *code != std::floor(*code))
          throw UnknownCategory(f.name, std::to_string(*code));
        cell = *label;
      }
    }
  }
  return out;
}

namespace {

using Key = std::pair<std::string, int>;

int day_number(const Date& d) { return std::chrono::sys_days(d).time_since_epoch().count(); }

std::map<Key, const RawRecord*> index_dated(const RecordSet& rs) {
  std::map<Key, const RawRecord*> out;
  for (const auto& rec : rs.records) {
    if (!rec.date) throw ParseError(rec.line, std::string(kDateColumn), "");
    if (!out.emplace(Key{rec.participant_id, day_number(*rec.date)}, &rec).second)
      throw ParseError(rec.line, "participant_id,date",
                       "duplicate key " + rec.participant_id + " " + format_date(*rec.date));
  }
  return out;
}

double numeric_cell(const Cell& cell, const std::string& feature) {
  if (is_missing(cell)) return std::nan("");
  if (const auto* v = std::get_if<double>(&cell)) return *v;
  throw UnknownCategory(feature, std::get<std::string>(cell));
}

}  // namespace

MergeResult merge_by_participant_date(const RecordSet& activity, const RecordSet& sleep,
                                      const RecordSet& survey, const FeatureSchema& schema) {
  const auto act_index = index_dated(activity);
  const auto sleep_index = index_dated(sleep);

  std::map<std::string, const RawRecord*, std::less<>> survey_index;
  for (const auto& rec : survey.records)
    if (!survey_index.emplace(rec.participant_id, &rec).second)
      throw ParseError(rec.line, std::string(kParticipantColumn),
                       "duplicate survey row for " + rec.participant_id);

  // Where each schema feature lives: (from activity?, column index).
  std::vector<std::pair<bool, std::size_t>> where;
  for (const auto& f : schema.features()) {
    const RecordSet& rs = f.source == Source::wearable_activity ? activity : survey;
    auto col = rs.column_index(f.name);
    if (!col) throw SchemaMismatch(f.name, "feature absent from its source table");
    where.emplace_back(f.source == Source::wearable_activity, *col);
  }
  const auto asleep_col = sleep.column_index("minsasleep");
  const auto awake_col = sleep.column_index("minsawake");
  if (!asleep_col) throw SchemaMismatch("minsasleep", "missing column");
  if (!awake_col) throw SchemaMismatch("minsawake", "missing column");

  MergeResult result;
  result.table.schema = schema;
  MergeReport& rep = result.report;
  std::set<std::string> no_survey;

  for (const auto& [key, sleep_rec] : sleep_index)
    if (!act_index.count(key)) ++rep.sleep_without_activity;

  for (const auto& [key, act_rec] : act_index) {
    auto s = sleep_index.find(key);
    if (s == sleep_index.end()) {
      ++rep.activity_without_sleep;
      continue;
    }
    const RawRecord& sleep_rec = *s->second;
    const Cell& asleep = sleep_rec.cells[*asleep_col];
    const Cell& awake = sleep_rec.cells[*awake_col];
    if (is_missing(asleep) || is_missing(awake)) {
      ++rep.missing_sleep;
      continue;
    }
    double target = 0.0;
    try {
      target = compute_efficiency(std::get<double>(asleep), std::get<double>(awake));
    } catch (const DegenerateSleepRecord&) {
      ++rep.degenerate_sleep;
      continue;
    } catch (const Error& e) {
      throw ParseError(sleep_rec.line, "minsasleep,minsawake", e.what());
    }

    auto sv = survey_index.find(key.first);
    if (sv == survey_index.end()) {
      ++rep.rows_without_survey;
      no_survey.insert(key.first);
      continue;
    }

    MergedRow row;
    row.participant_id = key.first;
    row.date = *act_rec->date;
    row.target = target;
    row.features.reserve(where.size());
    for (std::size_t i = 0; i < where.size(); ++i) {
      const RawRecord& src = where[i].first ? *act_rec : *sv->second;
      row.features.push_back(numeric_cell(src.cells[where[i].second], schema.at(i).name));
    }
    result.table.rows.push_back(std::move(row));
  }
  rep.participants_without_survey = no_survey.size();
  rep.merged_rows = result.table.rows.size();
  if (result.table.rows.empty()) throw EmptyJoin();
  return result;
}

FilterResult filter_complete(const MergedTable& table) {
  std::set<std::string> incomplete;
  for (const auto& row : table.rows)
    for (double v : row.features)
      if (std::isnan(v)) {
        incomplete.insert(row.participant_id);
        break;
      }

  FilterResult result;
  result.table.schema = table.schema;
  for (const auto& row : table.rows) {
    if (incomplete.count(row.participant_id))
      ++result.report.rows_dropped;
    else
      result.table.rows.push_back(row);
  }
  result.report.participants_dropped.assign(incomplete.begin(), incomplete.end());
  if (result.table.rows.empty()) throw EmptyResult();
  return result;
}

FeatureStats fit_feature_stats(const MergedTable& train) {
  if (train.empty()) throw EmptyInput("standardize: training table has no rows");
  const std::size_t p = train.schema.input_length();
  const double n = static_cast<double>(train.size());
  FeatureStats stats;
  stats.mean.assign(p, 0.0);
  stats.sd.assign(p, 0.0);
  for (std::size_t j = 0; j < p; ++j) {
    const double first = train.rows.front().features[j];
    bool constant = true;
    double sum = 0.0;
    for (const auto& row : train.rows) {
      sum += row.features[j];
      constant = constant && row.features[j] == first;
    }
    if (constant) {
      stats.mean[j] = first;
      continue;
    }
    const double mean = sum / n;
    double ss = 0.0;
    for (const auto& row : train.rows) {
      const double d = row.features[j] - mean;
      ss += d * d;
    }
    stats.mean[j] = mean;
    stats.sd[j] = std::sqrt(ss / n);
  }
  return stats;
}

void FeatureStats::apply(MergedTable& table) const {
  if (table.schema.input_length() != mean.size())
    throw ShapeError("feature statistics do not match the table's feature count");
  for (auto& row : table.rows)
    for (std::size_t j = 0; j < mean.size(); ++j) {
      row.features[j] -= mean[j];
      if (sd[j] > 0.0) row.features[j] /= sd[j];
    }
}

StandardizeResult standardize(const MergedTable& train, const MergedTable& apply_to) {
  StandardizeResult result{train, apply_to, fit_feature_stats(train)};
  result.stats.apply(result.train);
  result.stats.apply(result.applied);
  return result;
}

namespace {

MergedTable take_rows(const MergedTable& table, const std::vector<std::size_t>& indices) {
  MergedTable out;
  out.schema = table.schema;
  out.rows.reserve(indices.size());
  for (std::size_t i : indices) out.rows.push_back(table.rows[i]);
  return out;
}

std::size_t test_count(double fraction, std::size_t n) {
  auto k = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(k, 1, n - 1);
}

}  // namespace

SplitResult split(const MergedTable& table, double test_fraction, std::uint64_t seed,
                  bool by_participant) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw InvalidFraction(test_fraction);
  if (table.size() < 2) throw EmptyInput("split needs at least 2 rows");

  std::mt19937_64 rng(seed);
  std::vector<char> is_test(table.size(), 0);
  if (by_participant) {
    std::vector<std::string> participants;
    for (const auto& row : table.rows) participants.push_back(row.participant_id);
    std::sort(participants.begin(), participants.end());
    participants.erase(std::unique(participants.begin(), participants.end()), participants.end());
    if (participants.size() < 2) throw EmptyInput("participant-level split needs 2 participants");
    std::shuffle(participants.begin(), participants.end(), rng);
    const std::size_t k = test_count(test_fraction, participants.size());
    std::set<std::string> test_set(participants.begin(), participants.begin() + k);
    for (std::size_t i = 0; i < table.size(); ++i)
      is_test[i] = test_set.count(table.rows[i].participant_id) ? 1 : 0;
  } else {
    std::vector<std::size_t> order(table.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t k = test_count(test_fraction, table.size());
    for (std::size_t i = 0; i < k; ++i) is_test[order[i]] = 1;
  }

  SplitResult result;
  for (std::size_t i = 0; i < table.size(); ++i)
    (is_test[i] ? result.test_indices : result.train_indices).push_back(i);
  result.train = take_rows(table, result.train_indices);
  result.test = take_rows(table, result.test_indices);
  return result;
}

MergedTable select_features(const MergedTable& table, std::span<const std::size_t> indices) {
  MergedTable out;
  out.schema = table.schema.select(indices);
  out.rows.reserve(table.size());
  for (const auto& row : table.rows) {
    MergedRow r{row.participant_id, row.date, {}, row.target};
    r.features.reserve(indices.size());
    for (std::size_t i : indices) r.features.push_back(row.features[i]);
    out.rows.push_back(std::move(r));
  }
  return out;
}

}  // namespace sleepeff::dataset
