#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "crashnarr/label.hpp"

namespace crashnarr {

struct MancollCategory {
  int id = 0;
  std::string name;
  std::string definition;
  bool excludable = false;

  LabelToken token() const { return LabelToken(std::to_string(id)); }
  bool operator==(const MancollCategory&) const = default;
};

struct CrashCategory {
  std::string id;
  std::string name;
  bool operator==(const CrashCategory&) const = default;
};

struct CrashTypeCode {
  LabelToken code;
  std::string description;
  std::string parent_configuration;
  bool operator==(const CrashTypeCode&) const = default;
};

struct CrashConfiguration {
  std::string id;
  std::string name;
  std::string parent_category;
  std::string clarification_rules;
  /// Candidate crash-type codes in file order.
  std::vector<CrashTypeCode> candidate_types;
  bool operator==(const CrashConfiguration&) const = default;
};

inline constexpr int kTaxonomySchemaVersion = 1;
inline constexpr std::size_t kMaxCandidateSetSize = 14;
inline constexpr std::size_t kConfigurationCount = 13;
inline constexpr std::size_t kMancollCategoryCount = 7;

/// Immutable three-level label hierarchy plus the flat MANCOLL space.
class Taxonomy {
 public:
  static Taxonomy from_json(const nlohmann::json& doc);
  nlohmann::json to_json() const;

  const std::string& version() const { return version_; }
  const std::string& source_note() const { return source_note_; }
  bool counts_including_code_98() const { return counts_including_98_; }
  int declared_code_count() const { return declared_code_count_; }

  const std::vector<MancollCategory>& mancoll() const { return mancoll_; }
  const std::vector<CrashCategory>& categories() const { return categories_; }
  const std::vector<CrashConfiguration>& configurations() const {
    return configurations_;
  }

  /// Tokens of the MANCOLL label space in id order.
  std::vector<LabelToken> mancoll_tokens() const;
  /// Tokens of MANCOLL categories flagged excludable (the Unknown class).
  std::vector<LabelToken> excludable_mancoll_tokens() const;

  const CrashConfiguration& configuration(const std::string& conf) const;
  const std::vector<CrashTypeCode>& candidate_set_for(const std::string& conf) const;
  bool has_configuration(const std::string& conf) const;

  /// Every crash-type code in configuration order.
  std::vector<CrashTypeCode> all_crash_types() const;
  std::optional<CrashTypeCode> find_crash_type(const LabelToken& code) const;

  bool operator==(const Taxonomy&) const = default;

 private:
  std::string version_;
  std::string source_note_;
  bool counts_including_98_ = true;
  int declared_code_count_ = 0;
  std::vector<MancollCategory> mancoll_;
  std::vector<CrashCategory> categories_;
  std::vector<CrashConfiguration> configurations_;
  std::map<std::string, std::size_t> conf_index_;
};

Taxonomy load_taxonomy(const std::filesystem::path& path);
void save_taxonomy(const Taxonomy& taxonomy, const std::filesystem::path& path);

/// Location of the taxonomy shipped with the project.
std::filesystem::path default_taxonomy_path();

/// Root of the shipped asset tree (templates, taxonomy, baselines).
std::filesystem::path default_asset_dir();

}  // namespace crashnarr
