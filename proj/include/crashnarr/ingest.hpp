#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crashnarr/label.hpp"
#include "crashnarr/taxonomy.hpp"

namespace crashnarr {

inline constexpr int kMinCaseYear = 2017;
inline constexpr int kMaxCaseYear = 2023;

struct CrashRecord {
  std::string case_id;
  int year = 0;
  std::string summary;
  std::optional<int> mancoll;
};

struct VehicleRecord {
  std::string case_id;
  int vehicle_index = 0;  // 1-based, V1, V2, ...
  std::optional<std::string> crashconf;
  std::optional<LabelToken> crashtype;
};

struct Case {
  CrashRecord crash;
  std::vector<VehicleRecord> vehicles;
};

struct IngestIssue {
  std::string table;
  std::size_t row = 0;  // 1-based data row
  std::string reason;   // JoinOrphan, InvalidRecord
  std::string detail;
};

struct CaseSet {
  std::vector<Case> cases;
  std::vector<IngestIssue> issues;
};

/// Column names of the CRASH and GV extracts. Defaults follow CISS.
struct ColumnMapping {
  std::string crash_table = "CRASH.csv";
  std::string vehicle_table = "GV.csv";
  char delimiter = ',';
  std::string case_id = "CASEID";
  std::string year = "CASEYEAR";
  std::string summary = "SUMMARY";
  std::string mancoll = "MANCOLL";
  std::string vehicle_index = "VEHNO";
  std::string crashconf = "CRASHCONF";
  std::string crashtype = "CRASHTYPE";

  static ColumnMapping from_json(const nlohmann::json& doc);
};

ColumnMapping load_column_mapping(const std::filesystem::path& path);

/// Joins CRASH and GV into cases. Orphan vehicle rows and invalid crash rows
/// are reported in `CaseSet::issues`; with `strict` they raise instead.
CaseSet load_case_set(const std::filesystem::path& dir, const ColumnMapping& mapping = {},
                      bool strict = false);

struct LabeledExample {
  std::string case_id;
  Task task = Task::Mancoll;
  int year = 0;
  std::string summary;
  std::optional<int> vehicle_index;     // CRASHTYPE only
  std::optional<std::string> crashconf;  // CRASHTYPE only
  LabelToken gold;
  int vehicle_count = 1;

  /// Stable identifier: the case id, suffixed with "/V<n>" for per-vehicle examples.
  std::string id() const;
  bool operator==(const LabeledExample&) const = default;
};

/// Throws InvalidRecord when the task-conditional fields or the gold label are
/// inconsistent with the task's label space.
void validate_example(const LabeledExample& ex, const Taxonomy& taxonomy);

struct Reject {
  std::string example_id;
  std::string reason;  // PartitionMismatch, InvalidGold, MissingLabel, UnknownConfiguration
  std::string detail;
};

struct BuildResult {
  std::vector<LabeledExample> examples;
  std::vector<Reject> rejects;
};

BuildResult build_examples(const CaseSet& cases, Task task, const Taxonomy& taxonomy);

struct Split {
  std::vector<LabeledExample> train;
  std::vector<LabeledExample> test;
  std::vector<LabeledExample> dev;  // optional carve-out from the train year
  std::size_t excluded = 0;        // examples from neither year
};

/// Train on one year, test on another. `dev_count` examples are moved from the
/// train side into `dev` using a seeded draw.
Split split_by_year(const std::vector<LabeledExample>& examples, int train_year, int test_year,
                    std::size_t dev_count = 0, std::uint64_t seed = 0);

inline constexpr std::array<const char*, 4> kVehicleBucketNames = {"=1", "=2", "=3", ">3"};

/// Buckets by vehicle count: =1, =2, =3, >3.
std::array<std::vector<LabeledExample>, 4> group_by_vehicle_count(
    const std::vector<LabeledExample>& examples);

std::size_t vehicle_bucket(int vehicle_count);

// Canonical example file: line-delimited JSON, first line a metadata record.
nlohmann::json example_to_json(const LabeledExample& ex);
LabeledExample example_from_json(const nlohmann::json& rec);

void write_examples(const std::filesystem::path& path, const std::vector<LabeledExample>& examples,
                    const nlohmann::json& meta = nlohmann::json::object());
std::vector<LabeledExample> read_examples(const std::filesystem::path& path,
                                          nlohmann::json* meta = nullptr);
void write_rejects(const std::filesystem::path& path, const std::vector<Reject>& rejects);

}  // namespace crashnarr
