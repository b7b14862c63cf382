#include "crashnarr/taxonomy.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "crashnarr/error.hpp"

#ifndef CRASHNARR_ASSET_DIR
#define CRASHNARR_ASSET_DIR "assets"
#endif

namespace crashnarr {
namespace {

using nlohmann::json;

[[noreturn]] void malformed(const std::string& what) {
  throw Error(Errc::MalformedTaxonomy, "malformed taxonomy: " + what);
}

const json& require(const json& obj, const char* key) {
  if (!obj.is_object() || !obj.contains(key)) {
    malformed(std::string("missing field '") + key + "'");
  }
  return obj.at(key);
}

std::string require_string(const json& obj, const char* key) {
  const json& v = require(obj, key);
  if (!v.is_string()) malformed(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

bool is_short_token(const std::string& s) {
  if (s.empty() || s.size() > 2) return false;
  return std::all_of(s.begin(), s.end(),
                     [](unsigned char c) { return std::isalnum(c) != 0; });
}

}  // namespace

Taxonomy Taxonomy::from_json(const json& doc) {
  if (!doc.is_object()) malformed("top level must be an object");
  const json& schema = require(doc, "schema_version");
  if (!schema.is_number_integer() || schema.get<int>() != kTaxonomySchemaVersion) {
    malformed("unsupported schema_version");
  }

  Taxonomy tax;
  tax.version_ = require_string(doc, "taxonomy_version");
  tax.source_note_ = doc.value("source_note", "");
  const json& flag = require(doc, "counts_including_code_98");
  if (!flag.is_boolean()) malformed("counts_including_code_98 must be boolean");
  tax.counts_including_98_ = flag.get<bool>();
  const json& declared = require(doc, "declared_code_count");
  if (!declared.is_number_integer()) malformed("declared_code_count must be an integer");
  tax.declared_code_count_ = declared.get<int>();

  // MANCOLL space
  const json& mancoll = require(doc, "mancoll");
  if (!mancoll.is_array()) malformed("mancoll must be an array");
  for (const json& row : mancoll) {
    MancollCategory cat;
    const json& id = require(row, "id");
    if (!id.is_number_integer()) malformed("mancoll id must be an integer");
    cat.id = id.get<int>();
    cat.name = require_string(row, "name");
    cat.definition = row.value("definition", "");
    cat.excludable = row.value("excludable", false);
    tax.mancoll_.push_back(std::move(cat));
  }
  std::set<int> ids;
  for (const auto& c : tax.mancoll_) ids.insert(c.id);
  if (ids != std::set<int>{0, 1, 2, 4, 5, 6, 9} || tax.mancoll_.size() != kMancollCategoryCount) {
    malformed("mancoll ids must be exactly {0,1,2,4,5,6,9}");
  }
  for (const auto& c : tax.mancoll_) {
    if (c.excludable != (c.id == 9)) malformed("only mancoll id 9 may be flagged excludable");
  }
  std::sort(tax.mancoll_.begin(), tax.mancoll_.end(),
            [](const auto& a, const auto& b) { return a.id < b.id; });

  // Crash categories
  const json& cats = require(doc, "crash_categories");
  if (!cats.is_array()) malformed("crash_categories must be an array");
  std::set<std::string> cat_ids;
  for (const json& row : cats) {
    CrashCategory cat{require_string(row, "id"), require_string(row, "name")};
    if (!cat_ids.insert(cat.id).second) malformed("duplicate crash category " + cat.id);
    tax.categories_.push_back(std::move(cat));
  }

  // Configurations
  const json& confs = require(doc, "configurations");
  if (!confs.is_array()) malformed("configurations must be an array");
  for (const json& row : confs) {
    CrashConfiguration conf;
    conf.id = require_string(row, "id");
    conf.name = row.value("name", "");
    conf.parent_category = require_string(row, "category");
    conf.clarification_rules = row.value("clarification_rules", "");
    if (!cat_ids.count(conf.parent_category)) {
      malformed("configuration " + conf.id + " names unknown category " + conf.parent_category);
    }
    if (tax.conf_index_.count(conf.id)) malformed("duplicate configuration " + conf.id);
    tax.conf_index_[conf.id] = tax.configurations_.size();
    tax.configurations_.push_back(std::move(conf));
  }
  if (tax.configurations_.size() != kConfigurationCount) {
    malformed("expected 13 configurations, found " + std::to_string(tax.configurations_.size()));
  }

  // Crash types, in file order
  const json& types = require(doc, "crash_types");
  if (!types.is_array()) malformed("crash_types must be an array");
  std::map<std::string, std::string> owner;
  std::size_t code_count = 0;
  for (const json& row : types) {
    CrashTypeCode code;
    code.code = LabelToken(require_string(row, "code"));
    code.description = require_string(row, "description");
    code.parent_configuration = require_string(row, "configuration");
    if (!is_short_token(code.code.str())) {
      malformed("crash type code '" + code.code.str() + "' is not a short label token");
    }
    auto it = tax.conf_index_.find(code.parent_configuration);
    if (it == tax.conf_index_.end()) {
      malformed("crash type " + code.code.str() + " names unknown configuration " +
                code.parent_configuration);
    }
    auto [pos, inserted] = owner.emplace(code.code.str(), code.parent_configuration);
    if (!inserted) {
      throw Error(Errc::PartitionViolation,
                  "crash type " + code.code.str() + " appears under configurations " +
                      pos->second + " and " + code.parent_configuration);
    }
    tax.configurations_[it->second].candidate_types.push_back(std::move(code));
    ++code_count;
  }

  for (const auto& conf : tax.configurations_) {
    if (conf.candidate_types.empty()) {
      throw Error(Errc::PartitionViolation, "configuration " + conf.id + " has no candidate types");
    }
    if (conf.candidate_types.size() > kMaxCandidateSetSize) {
      throw Error(Errc::OversizeCandidateSet,
                  "configuration " + conf.id + " has " +
                      std::to_string(conf.candidate_types.size()) + " candidate types (max 14)");
    }
  }

  if (!owner.count("98")) {
    throw Error(Errc::PartitionViolation, "code 98 (third or subsequent vehicles) is missing");
  }
  const std::size_t expected =
      tax.counts_including_98_ ? code_count : code_count - 1;
  if (static_cast<std::size_t>(tax.declared_code_count_) != expected) {
    throw Error(Errc::PartitionViolation,
                "declared_code_count " + std::to_string(tax.declared_code_count_) +
                    " does not match the " + std::to_string(expected) +
                    " codes covered by the candidate sets");
  }
  return tax;
}

json Taxonomy::to_json() const {
  json doc;
  doc["schema_version"] = kTaxonomySchemaVersion;
  doc["taxonomy_version"] = version_;
  doc["source_note"] = source_note_;
  doc["counts_including_code_98"] = counts_including_98_;
  doc["declared_code_count"] = declared_code_count_;
  doc["mancoll"] = json::array();
  for (const auto& c : mancoll_) {
    doc["mancoll"].push_back({{"id", c.id},
                              {"name", c.name},
                              {"definition", c.definition},
                              {"excludable", c.excludable}});
  }
  doc["crash_categories"] = json::array();
  for (const auto& c : categories_) {
    doc["crash_categories"].push_back({{"id", c.id}, {"name", c.name}});
  }
  doc["configurations"] = json::array();
  doc["crash_types"] = json::array();
  for (const auto& conf : configurations_) {
    doc["configurations"].push_back({{"id", conf.id},
                                     {"name", conf.name},
                                     {"category", conf.parent_category},
                                     {"clarification_rules", conf.clarification_rules}});
    for (const auto& t : conf.candidate_types) {
      doc["crash_types"].push_back({{"code", t.code.str()},
                                    {"description", t.description},
                                    {"configuration", t.parent_configuration}});
    }
  }
  return doc;
}

std::vector<LabelToken> Taxonomy::mancoll_tokens() const {
  std::vector<LabelToken> out;
  for (const auto& c : mancoll_) out.push_back(c.token());
  return out;
}

std::vector<LabelToken> Taxonomy::excludable_mancoll_tokens() const {
  std::vector<LabelToken> out;
  for (const auto& c : mancoll_) {
    if (c.excludable) out.push_back(c.token());
  }
  return out;
}

bool Taxonomy::has_configuration(const std::string& conf) const {
  return conf_index_.count(conf) != 0;
}

const CrashConfiguration& Taxonomy::configuration(const std::string& conf) const {
  auto it = conf_index_.find(conf);
  if (it == conf_index_.end()) {
    throw Error(Errc::UnknownConfiguration, "unknown crash configuration '" + conf + "'");
  }
  return configurations_[it->second];
}

const std::vector<CrashTypeCode>& Taxonomy::candidate_set_for(const std::string& conf) const {
  return configuration(conf).candidate_types;
}

std::vector<CrashTypeCode> Taxonomy::all_crash_types() const {
  std::vector<CrashTypeCode> out;
  for (const auto& conf : configurations_) {
    out.insert(out.end(), conf.candidate_types.begin(), conf.candidate_types.end());
  }
  return out;
}

std::optional<CrashTypeCode> Taxonomy::find_crash_type(const LabelToken& code) const {
  for (const auto& conf : configurations_) {
    for (const auto& t : conf.candidate_types) {
      if (t.code == code) return t;
    }
  }
  return std::nullopt;
}

Taxonomy load_taxonomy(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(Errc::MalformedTaxonomy, "cannot open taxonomy file " + path.string());
  }
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    malformed(std::string("not valid JSON: ") + e.what());
  }
  return Taxonomy::from_json(doc);
}

void save_taxonomy(const Taxonomy& taxonomy, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << taxonomy.to_json().dump(2) << '\n';
}

std::filesystem::path default_asset_dir() {
  if (const char* env = std::getenv("CRASHNARR_ASSETS"); env && *env) {
    return std::filesystem::path(env);
  }
  return std::filesystem::path(CRASHNARR_ASSET_DIR);
}

std::filesystem::path default_taxonomy_path() {
  return default_asset_dir() / "taxonomy" / "ciss_crashtype_v1.json";
}

}  // namespace crashnarr
