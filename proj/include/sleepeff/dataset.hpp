#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace sleepeff::dataset {

using Date = std::chrono::year_month_day;

// Strict YYYY-MM-DD.
std::optional<Date> parse_date(std::string_view text);
std::string format_date(const Date& date);

enum class Source { wearable_activity, survey };
enum class Kind { numeric, categorical_ordinal };

struct CategoryCode {
  std::string label;
  int code = 0;

  bool operator==(const CategoryCode&) const = default;
};

struct FeatureDescriptor {
  std::string name;
  Source source = Source::survey;
  Kind kind = Kind::numeric;
  // Ordered label -> code map. Non-empty iff kind == categorical_ordinal.
  std::vector<CategoryCode> encoding;

  std::optional<int> code_of(std::string_view label) const;
  std::optional<std::string> label_of(int code) const;

  bool operator==(const FeatureDescriptor&) const = default;
};

// Ordered feature list defining the model input vector. Index i always means
// the same column; the JSON schema file is the single source of that order.
class FeatureSchema {
 public:
  FeatureSchema() = default;
  explicit FeatureSchema(std::vector<FeatureDescriptor> features);

  const std::vector<FeatureDescriptor>& features() const noexcept { return features_; }
  std::size_t input_length() const noexcept { return features_.size(); }
  const FeatureDescriptor& at(std::size_t i) const { return features_.at(i); }
  std::optional<std::size_t> index_of(std::string_view name) const;
  std::vector<std::size_t> indices_of(Source source) const;

  // Sub-schema keeping the given feature indices in the order given.
  FeatureSchema select(std::span<const std::size_t> indices) const;

  nlohmann::json to_json() const;
  static FeatureSchema from_json(const nlohmann::json& doc);
  static FeatureSchema load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

  // Compact JSON dump with sorted keys; input of the schema fingerprint.
  std::string canonical() const;
  std::uint64_t fingerprint() const;

  bool operator==(const FeatureSchema&) const = default;

 private:
  std::vector<FeatureDescriptor> features_;
};

// 93-feature preset: 17 wearable activity measures followed by 76 survey
// items (first-semester instruments plus second-semester repeats).
FeatureSchema nethealth_schema();

// ---------------------------------------------------------------------------
// Raw tables

enum class TableKind { activity, sleep, survey };

// std::monostate marks a missing cell.
using Cell = std::variant<std::monostate, double, std::string>;

inline bool is_missing(const Cell& c) noexcept { return std::holds_alternative<std::monostate>(c); }

struct RawRecord {
  std::size_t line = 0;  // 1-based line in the source file (header is line 1)
  std::string participant_id;
  std::optional<Date> date;  // absent for survey tables
  std::vector<Cell> cells;   // aligned with RecordSet::columns
};

// A cell that could not be parsed and was turned into a missing marker.
struct CellIssue {
  std::size_t line = 0;
  std::string column;
  std::string content;
};

struct RecordSet {
  TableKind kind = TableKind::activity;
  std::vector<std::string> columns;  // value columns, excluding the key columns
  std::vector<RawRecord> records;
  std::vector<CellIssue> unparsed;

  std::optional<std::size_t> column_index(std::string_view name) const;
};

inline constexpr std::string_view kParticipantColumn = "participant_id";
inline constexpr std::string_view kDateColumn = "date";
inline constexpr std::string_view kTargetColumn = "efficiency";

// Sleep columns carried through but never used as features.
const std::vector<std::string>& sleep_passthrough_columns();

// Columns are matched by name, order-insensitively. Activity/survey tables
// must carry exactly the schema features of that source; sleep tables need
// minsasleep and minsawake and may carry the pass-through columns.
RecordSet load_table(const std::filesystem::path& path, const FeatureSchema& schema,
                     TableKind kind);
RecordSet parse_table(std::istream& in, const FeatureSchema& schema, TableKind kind);

// Replaces categorical labels by their integer codes.
RecordSet encode_survey(const RecordSet& records, const FeatureSchema& schema);
// Inverse of encode_survey.
RecordSet decode_survey(const RecordSet& records, const FeatureSchema& schema);

double compute_efficiency(double minsasleep, double minsawake);

// ---------------------------------------------------------------------------
// Merged table

struct MergedRow {
  std::string participant_id;
  Date date;
  std::vector<double> features;  // NaN marks a missing value
  double target = 0.0;
};

struct MergedTable {
  FeatureSchema schema;
  std::vector<MergedRow> rows;

  std::size_t size() const noexcept { return rows.size(); }
  bool empty() const noexcept { return rows.empty(); }
  std::vector<double> targets() const;
  // Throws std::invalid_argument if an invariant is violated.
  void validate() const;
};

struct MergeReport {
  std::size_t merged_rows = 0;
  std::size_t activity_without_sleep = 0;
  std::size_t sleep_without_activity = 0;
  std::size_t rows_without_survey = 0;
  std::size_t participants_without_survey = 0;
  std::size_t degenerate_sleep = 0;
  std::size_t missing_sleep = 0;
};

struct MergeResult {
  MergedTable table;
  MergeReport report;
};

// Inner join of activity and sleep on (participant, date); survey columns are
// broadcast per participant. Output is sorted by (participant, date).
MergeResult merge_by_participant_date(const RecordSet& activity, const RecordSet& sleep,
                                      const RecordSet& survey, const FeatureSchema& schema);

struct FilterReport {
  std::vector<std::string> participants_dropped;
  std::size_t rows_dropped = 0;
};

struct FilterResult {
  MergedTable table;
  FilterReport report;
};

// Drops every participant with any missing feature value.
FilterResult filter_complete(const MergedTable& table);

struct FeatureStats {
  std::vector<double> mean;
  std::vector<double> sd;  // population sd

  void apply(MergedTable& table) const;
};

FeatureStats fit_feature_stats(const MergedTable& train);

struct StandardizeResult {
  MergedTable train;
  MergedTable applied;
  FeatureStats stats;
};

StandardizeResult standardize(const MergedTable& train, const MergedTable& apply_to);

struct SplitResult {
  MergedTable train;
  MergedTable test;
  std::vector<std::size_t> train_indices;  // ascending row indices into the source table
  std::vector<std::size_t> test_indices;
};

// Uniform row-level split; with by_participant set, whole participants are
// assigned to one side instead.
SplitResult split(const MergedTable& table, double test_fraction, std::uint64_t seed,
                  bool by_participant = false);

MergedTable select_features(const MergedTable& table, std::span<const std::size_t> indices);

// Merged CSV: participant_id,date,<schema features...>,efficiency.
void write_merged_csv(const MergedTable& table, std::ostream& out);
void save_merged_csv(const MergedTable& table, const std::filesystem::path& path);
MergedTable read_merged_csv(std::istream& in, const FeatureSchema& schema);
MergedTable load_merged_csv(const std::filesystem::path& path, const FeatureSchema& schema);
std::uint64_t dataset_fingerprint(const MergedTable& table);

struct PreprocessResult {
  MergedTable table;
  MergeReport merge;
  FilterReport filter;
  std::size_t unparsed_cells = 0;
};

// load x3 -> encode_survey -> merge -> filter_complete.
PreprocessResult preprocess(const std::filesystem::path& activity,
                            const std::filesystem::path& sleep,
                            const std::filesystem::path& survey, const FeatureSchema& schema);

}  // namespace sleepeff::dataset
