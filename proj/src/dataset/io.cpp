#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "csv.hpp"
#include "sleepeff/dataset.hpp"
#include "sleepeff/errors.hpp"
#include "sleepeff/fingerprint.hpp"

namespace sleepeff::dataset {

namespace detail {

std::vector<std::string> split_csv_line(std::string_view line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"' && cur.empty()) {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) throw ParseError(line_no, "<row>", std::string(line));
  fields.push_back(std::move(cur));
  return fields;
}

bool read_line(std::istream& in, std::string& line) {
  if (!std::getline(in, line)) return false;
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return true;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t')) s.remove_suffix(1);
  return s;
}

bool is_missing_token(std::string_view s) {
  s = trim(s);
  return s.empty() || s == "NA";
}

std::optional<double> parse_number(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double value = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) return std::nullopt;
  return value;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "NA";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace detail

using namespace detail;

const std::vector<std::string>& sleep_passthrough_columns() {
  static const std::vector<std::string> cols{"timetobed", "timeoutofbed", "bedtimedur",
                                             "minstofallasleep", "minsafterwakeup"};
  return cols;
}

std::optional<std::size_t> RecordSet::column_index(std::string_view name) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == name) return i;
  return std::nullopt;
}

namespace {

enum class ColumnType { numeric, label, text };

struct ExpectedColumn {
  std::string name;
  ColumnType type;
  bool required;
};

std::vector<ExpectedColumn> expected_columns(const FeatureSchema& schema, TableKind kind) {
  std::vector<ExpectedColumn> cols;
  if (kind == TableKind::sleep) {
    cols.push_back({"minsasleep", ColumnType::numeric, true});
    cols.push_back({"minsawake", ColumnType::numeric, true});
    for (const auto& name : sleep_passthrough_columns()) cols.push_back({name, ColumnType::text, false});
    return cols;
  }
  const Source want = kind == TableKind::activity ? Source::wearable_activity : Source::survey;
  for (const auto& f : schema.features()) {
    if (f.source != want) continue;
    cols.push_back({f.name, f.kind == Kind::numeric ? ColumnType::numeric : ColumnType::label, true});
  }
  return cols;
}

}  // namespace

RecordSet parse_table(std::istream& in, const FeatureSchema& schema, TableKind kind) {
  const bool dated = kind != TableKind::survey;
  std::string line;
  if (!read_line(in, line)) throw SchemaMismatch(std::string(kParticipantColumn), "empty file");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  std::vector<std::string> header = split_csv_line(line, 1);
  for (auto& h : header) h = std::string(trim(h));

  std::map<std::string, std::size_t, std::less<>> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!position.emplace(header[i], i).second)
      throw SchemaMismatch(header[i], "duplicate column");
  }

  auto key_position = [&](std::string_view name) {
    auto it = position.find(name);
    if (it == position.end()) throw SchemaMismatch(std::string(name), "missing column");
    return it->second;
  };
  const std::size_t pid_pos = key_position(kParticipantColumn);
  const std::size_t date_pos = dated ? key_position(kDateColumn) : 0;

  RecordSet rs;
  rs.kind = kind;
  std::vector<ExpectedColumn> expected = expected_columns(schema, kind);
  std::vector<std::size_t> source_pos;
  std::vector<ColumnType> types;
  for (const auto& col : expected) {
    auto it = position.find(col.name);
    if (it == position.end()) {
      if (col.required) throw SchemaMismatch(col.name, "missing column");
      continue;
    }
    rs.columns.push_back(col.name);
    source_pos.push_back(it->second);
    types.push_back(col.type);
  }
  for (const auto& h : header) {
    if (h == kParticipantColumn || (dated && h == kDateColumn)) continue;
    bool known = false;
    for (const auto& c : rs.columns) known = known || c == h;
    if (!known) throw SchemaMismatch(h, "unknown column");
  }

  std::size_t line_no = 1;
  while (read_line(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_csv_line(line, line_no);
    if (fields.size() != header.size()) throw ParseError(line_no, "<row>", line);

    RawRecord rec;
    rec.line = line_no;
    rec.participant_id = std::string(trim(fields[pid_pos]));
    if (is_missing_token(rec.participant_id))
      throw ParseError(line_no, std::string(kParticipantColumn), fields[pid_pos]);
    if (dated) {
      rec.date = parse_date(trim(fields[date_pos]));
      if (!rec.date) throw ParseError(line_no, std::string(kDateColumn), fields[date_pos]);
    }
    rec.cells.reserve(rs.columns.size());
    for (std::size_t c = 0; c < rs.columns.size(); ++c) {
      const std::string& raw = fields[source_pos[c]];
      if (is_missing_token(raw)) {
        rec.cells.emplace_back(std::monostate{});
        continue;
      }
      switch (types[c]) {
        case ColumnType::numeric:
          if (auto v = parse_number(raw)) {
            rec.cells.emplace_back(*v);
          } else {
            rec.cells.emplace_back(std::monostate{});
            rs.unparsed.push_back({line_no, rs.columns[c], raw});
          }
          break;
        case ColumnType::label:
        case ColumnType::text:
          rec.cells.emplace_back(std::string(trim(raw)));
          break;
      }
    }
    rs.records.push_back(std::move(rec));
  }
  return rs;
}

RecordSet load_table(const std::filesystem::path& path, const FeatureSchema& schema,
                     TableKind kind) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_table(in, schema, kind);
}

void write_merged_csv(const MergedTable& table, std::ostream& out) {
  out << kParticipantColumn << ',' << kDateColumn;
  for (const auto& f : table.schema.features()) out << ',' << f.name;
  out << ',' << kTargetColumn << '\n';
  for (const auto& row : table.rows) {
    out << row.participant_id << ',' << format_date(row.date);
    for (double v : row.features) out << ',' << format_number(v);
    out << ',' << format_number(row.target) << '\n';
  }
}

void save_merged_csv(const MergedTable& table, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  write_merged_csv(table, out);
  if (!out) throw IoError("write failed for " + path.string());
}

MergedTable read_merged_csv(std::istream& in, const FeatureSchema& schema) {
  std::string line;
  if (!read_line(in, line)) throw SchemaMismatch(std::string(kParticipantColumn), "empty file");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  std::vector<std::string> header = split_csv_line(line, 1);
  for (auto& h : header) h = std::string(trim(h));

  std::map<std::string, std::size_t, std::less<>> position;
  for (std::size_t i = 0; i < header.size(); ++i)
    if (!position.emplace(header[i], i).second) throw SchemaMismatch(header[i], "duplicate column");
  auto require = [&](std::string_view name) {
    auto it = position.find(name);
    if (it == position.end()) throw SchemaMismatch(std::string(name), "missing column");
    return it->second;
  };
  const std::size_t pid_pos = require(kParticipantColumn);
  const std::size_t date_pos = require(kDateColumn);
  const std::size_t target_pos = require(kTargetColumn);
  std::vector<std::size_t> feature_pos;
  for (const auto& f : schema.features()) feature_pos.push_back(require(f.name));
  if (header.size() != schema.input_length() + 3) {
    for (const auto& h : header)
      if (h != kParticipantColumn && h != kDateColumn && h != kTargetColumn && !schema.index_of(h))
        throw SchemaMismatch(h, "unknown column");
  }

  MergedTable table;
  table.schema = schema;
  std::size_t line_no = 1;
  while (read_line(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    std::vector<std::string> fields = split_csv_line(line, line_no);
    if (fields.size() != header.size()) throw ParseError(line_no, "<row>", line);
    MergedRow row;
    row.participant_id = std::string(trim(fields[pid_pos]));
    if (is_missing_token(row.participant_id))
      throw ParseError(line_no, std::string(kParticipantColumn), fields[pid_pos]);
    auto date = parse_date(trim(fields[date_pos]));
    if (!date) throw ParseError(line_no, std::string(kDateColumn), fields[date_pos]);
    row.date = *date;
    row.features.reserve(feature_pos.size());
    for (std::size_t i = 0; i < feature_pos.size(); ++i) {
      const std::string& raw = fields[feature_pos[i]];
      if (is_missing_token(raw)) {
        row.features.push_back(std::nan(""));
        continue;
      }
      auto v = parse_number(raw);
      // Categorical columns hold codes here; a label means the file was not encoded.
      if (!v) throw ParseError(line_no, schema.at(i).name, raw);
      if (schema.at(i).kind == Kind::categorical_ordinal) {
        const double code = *v;
        if (code != std::floor(code) || !schema.at(i).label_of(static_cast<int>(code)))
          throw UnknownCategory(schema.at(i).name, raw);
      }
      row.features.push_back(*v);
    }
    auto target = parse_number(fields[target_pos]);
    if (!target || *target < 0.0 || *target > 1.0)
      throw ParseError(line_no, std::string(kTargetColumn), fields[target_pos]);
    row.target = *target;
    table.rows.push_back(std::move(row));
  }
  table.validate();
  return table;
}

MergedTable load_merged_csv(const std::filesystem::path& path, const FeatureSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return read_merged_csv(in, schema);
}

std::uint64_t dataset_fingerprint(const MergedTable& table) {
  std::ostringstream out;
  write_merged_csv(table, out);
  return fnv1a64(out.str());
}

PreprocessResult preprocess(const std::filesystem::path& activity,
                            const std::filesystem::path& sleep,
                            const std::filesystem::path& survey, const FeatureSchema& schema) {
  RecordSet act = load_table(activity, schema, TableKind::activity);
  RecordSet slp = load_table(sleep, schema, TableKind::sleep);
  RecordSet srv = load_table(survey, schema, TableKind::survey);
  const std::size_t unparsed = act.unparsed.size() + slp.unparsed.size() + srv.unparsed.size();
  // Activity tables may carry categorical columns too; the encoding is by schema name.
  MergeResult merged = merge_by_participant_date(encode_survey(act, schema), slp,
                                                 encode_survey(srv, schema), schema);
  FilterResult filtered = filter_complete(merged.table);
  return {std::move(filtered.table), merged.report, std::move(filtered.report), unparsed};
}

}  // namespace sleepeff::dataset
