#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <stdexcept>

#include "sleepeff/dataset.hpp"
#include "sleepeff/errors.hpp"
#include "sleepeff/fingerprint.hpp"

namespace sleepeff {

std::string to_hex(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
  return buf;
}

}  // namespace sleepeff

namespace sleepeff::dataset {

namespace {

const char* source_name(Source s) {
  return s == Source::wearable_activity ? "wearable_activity" : "survey";
}

const char* kind_name(Kind k) { return k == Kind::numeric ? "numeric" : "categorical_ordinal"; }

Source parse_source(const std::string& s) {
  if (s == "wearable_activity") return Source::wearable_activity;
  if (s == "survey") return Source::survey;
  throw InvalidConfig("unknown feature source '" + s + "'");
}

Kind parse_kind(const std::string& s) {
  if (s == "numeric") return Kind::numeric;
  if (s == "categorical_ordinal") return Kind::categorical_ordinal;
  throw InvalidConfig("unknown feature kind '" + s + "'");
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') return std::nullopt;
  auto digits = [&](std::size_t from, std::size_t n, int& out) {
    out = 0;
    for (std::size_t i = from; i < from + n; ++i) {
      if (text[i] < '0' || text[i] > '9') return false;
      out = out * 10 + (text[i] - '0');
    }
    return true;
  };
  int y = 0, m = 0, d = 0;
  if (!digits(0, 4, y) || !digits(5, 2, m) || !digits(8, 2, d)) return std::nullopt;
  Date date{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
            std::chrono::day{static_cast<unsigned>(d)}};
  if (!date.ok()) return std::nullopt;
  return date;
}

std::string format_date(const Date& date) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(date.year()),
                static_cast<unsigned>(date.month()), static_cast<unsigned>(date.day()));
  return buf;
}

std::optional<int> FeatureDescriptor::code_of(std::string_view label) const {
  for (const auto& e : encoding)
    if (e.label == label) return e.code;
  return std::nullopt;
}

std::optional<std::string> FeatureDescriptor::label_of(int code) const {
  for (const auto& e : encoding)
    if (e.code == code) return e.label;
  return std::nullopt;
}

FeatureSchema::FeatureSchema(std::vector<FeatureDescriptor> features)
    : features_(std::move(features)) {
  if (features_.empty()) throw InvalidConfig("feature schema is empty");
  std::set<std::string, std::less<>> names;
  for (const auto& f : features_) {
    if (f.name.empty()) throw InvalidConfig("feature with empty name");
    if (f.name == kParticipantColumn || f.name == kDateColumn || f.name == kTargetColumn)
      throw InvalidConfig("feature name '" + f.name + "' is reserved");
    if (!names.insert(f.name).second) throw InvalidConfig("duplicate feature name '" + f.name + "'");
    if (f.kind == Kind::categorical_ordinal) {
      if (f.encoding.empty())
        throw InvalidConfig("categorical feature '" + f.name + "' has no encoding");
      std::set<std::string> labels;
      std::set<int> codes;
      for (const auto& e : f.encoding) {
        if (!labels.insert(e.label).second || !codes.insert(e.code).second)
          throw InvalidConfig("encoding of '" + f.name + "' is not injective");
      }
    } else if (!f.encoding.empty()) {
      throw InvalidConfig("numeric feature '" + f.name + "' carries an encoding");
    }
  }
}

std::optional<std::size_t> FeatureSchema::index_of(std::string_view name) const {
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (features_[i].name == name) return i;
  return std::nullopt;
}

std::vector<std::size_t> FeatureSchema::indices_of(Source source) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < features_.size(); ++i)
    if (features_[i].source == source) out.push_back(i);
  return out;
}

FeatureSchema FeatureSchema::select(std::span<const std::size_t> indices) const {
  std::vector<FeatureDescriptor> picked;
  picked.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= features_.size()) throw std::out_of_range("feature index out of range");
    picked.push_back(features_[i]);
  }
  return FeatureSchema(std::move(picked));
}

nlohmann::json FeatureSchema::to_json() const {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& f : features_) {
    nlohmann::json item{{"name", f.name}, {"source", source_name(f.source)}, {"kind", kind_name(f.kind)}};
    if (f.kind == Kind::categorical_ordinal) {
      nlohmann::json enc = nlohmann::json::array();
      for (const auto& e : f.encoding) enc.push_back({{"label", e.label}, {"code", e.code}});
      item["encoding"] = std::move(enc);
    }
    features.push_back(std::move(item));
  }
  return {{"input_length", features_.size()}, {"features", std::move(features)}};
}

FeatureSchema FeatureSchema::from_json(const nlohmann::json& doc) {
  try {
    std::vector<FeatureDescriptor> features;
    for (const auto& item : doc.at("features")) {
      for (const auto& [key, _] : item.items())
        if (key != "name" && key != "source" && key != "kind" && key != "encoding")
          throw InvalidConfig("unknown key '" + key + "' in feature descriptor");
      FeatureDescriptor f;
      f.name = item.at("name").get<std::string>();
      f.source = parse_source(item.at("source").get<std::string>());
      f.kind = parse_kind(item.at("kind").get<std::string>());
      if (item.contains("encoding")) {
        for (const auto& e : item.at("encoding"))
          f.encoding.push_back({e.at("label").get<std::string>(), e.at("code").get<int>()});
      }
      features.push_back(std::move(f));
    }
    FeatureSchema schema(std::move(features));
    if (doc.contains("input_length") &&
        doc.at("input_length").get<std::size_t>() != schema.input_length())
      throw InvalidConfig("input_length does not match the number of features");
    return schema;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig(std::string("malformed schema document: ") + e.what());
  }
}

FeatureSchema FeatureSchema::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open schema file " + path.string());
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidConfig("schema file " + path.string() + " is not valid JSON: " + e.what());
  }
  return from_json(doc);
}

void FeatureSchema::save(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write schema file " + path.string());
  out << to_json().dump(2) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

std::string FeatureSchema::canonical() const { return to_json().dump(); }

std::uint64_t FeatureSchema::fingerprint() const { return fnv1a64(canonical()); }

FeatureSchema nethealth_schema() {
  std::vector<FeatureDescriptor> f;
  auto activity = [&](const char* name) {
    f.push_back({name, Source::wearable_activity, Kind::numeric, {}});
  };
  auto survey = [&](const char* name) { f.push_back({name, Source::survey, Kind::numeric, {}}); };
  auto categorical = [&](const char* name, std::vector<const char*> labels) {
    FeatureDescriptor d{name, Source::survey, Kind::categorical_ordinal, {}};
    int code = 0;
    for (const char* l : labels) d.encoding.push_back({l, code++});
    f.push_back(std::move(d));
  };

  for (const char* name :
       {"complypercent", "meanrate", "sdrate", "steps", "floors", "sedentaryminutes",
        "lightlyactiveminutes", "fairlyactiveminutes", "veryactiveminutes", "lowrangemins",
        "fatburnmins", "cardiomins", "peakmins", "lowrangecal", "fatburncal", "cardiocal",
        "peakcal"})
    activity(name);

  // Bad habits
  for (const char* name : {"usetobacco_1", "usebeer_1", "usewine_1", "usedrugs_1",
                           "usedrugs_prescr_1", "usecaffine_1"})
    survey(name);
  // Personality inventory
  for (const char* name : {"Extraversion_1", "Agreeableness_1", "Conscientiousness_1",
                           "Neuroticism_1", "Openness_1"})
    survey(name);
  // Education
  categorical("hs_1", {"public", "private_religious", "private_secular", "home_school"});
  categorical("hssex_1", {"coed", "single_sex"});
  for (const char* name : {"hsgrade_1", "apexams_1", "degreeintent_1", "hrswork_1"}) survey(name);
  categorical("ndfirst_1", {"no", "yes"});
  // Exercise
  for (const char* name : {"hsclubrc_1", "exercise_1", "clubsports_1", "varsitysports_1",
                           "swimming_1", "Dieting_1", "PhysicalDisability_1"})
    survey(name);
  // Health
  for (const char* name : {"SelfEsteem_1", "Trust_1", "SRQE_Ext_1", "SRQE_Introj_1",
                           "SRQE_Ident_1", "SelfEff_exercise_scale_1", "SelfEff_diet_scale_1",
                           "selfreg_scale_1"})
    survey(name);
  // Mental health
  survey("STAITraitTotal_1");
  survey("CESDOverall_1");
  survey("BAIsum_1");
  categorical("STAITraitGroup_1", {"low", "high"});
  categorical("CESDGroup_1", {"not_depressed", "depressed"});
  categorical("BAIgroup_1", {"low", "moderate", "severe"});
  survey("majorevent_1");
  // Origin
  categorical("momdec_1", {"no", "yes"});
  categorical("momusa_1", {"no", "yes"});
  categorical("daddec_1", {"no", "yes"});
  categorical("dadusa_1", {"no", "yes"});
  categorical("parentstatus_1", {"together", "apart"});
  for (const char* name : {"dadage_1", "momage_1", "numsib_1", "birthorder_1", "parentincome_1",
                           "parenteduc_1", "momrace_1", "dadrace_1", "momrelig_1", "dadrelig_1",
                           "yourelig_1"})
    survey(name);
  // Loneliness
  for (const char* name : {"selsa_rom_1", "selsa_fam_1", "selsa_soc_1"}) survey(name);
  // Sex
  categorical("gender_1", {"female", "male"});
  // Sleep instruments
  survey("PSQI_duration_1");
  survey("PSQIGlobal_1");
  categorical("PSQIGroup_1", {"good", "poor"});
  survey("MEQTotal_1");
  categorical("MEQGroup_1", {"definite_evening", "moderate_evening", "neither",
                             "moderate_morning", "definite_morning"});
  // Second-semester repeats
  for (const char* name : {"Extraversion_2", "Agreeableness_2", "Conscientiousness_2",
                           "Neuroticism_2", "Openness_2", "SelfEsteem_2", "STAITraitTotal_2",
                           "CESDOverall_2", "BAIsum_2", "PSQIGlobal_2", "MEQTotal_2"})
    survey(name);

  return FeatureSchema(std::move(f));
}

}  // namespace sleepeff::dataset
