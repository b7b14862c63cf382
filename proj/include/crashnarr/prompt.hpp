#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "crashnarr/label.hpp"
#include "crashnarr/taxonomy.hpp"

namespace crashnarr {

/// Text with named `{slot}` placeholders; `{{` and `}}` render literal braces.
class PromptTemplate {
 public:
  PromptTemplate() = default;
  PromptTemplate(std::string text, std::string version);

  const std::string& text() const { return text_; }
  const std::string& version() const { return version_; }
  const std::vector<std::string>& slot_names() const { return slots_; }

  /// Throws TemplateError if a slot used by the template is not supplied.
  std::string render(const std::map<std::string, std::string>& values) const;

 private:
  std::string text_;
  std::string version_;
  std::vector<std::string> slots_;
};

struct TemplateSet {
  PromptTemplate mancoll;
  PromptTemplate crashtype;

  /// Reads `manifest.json` and the template files it names.
  static TemplateSet load(const std::filesystem::path& dir);
  static TemplateSet load_default();

  /// Combined provenance string embedded into reports.
  std::string version() const { return mancoll.version() + "+" + crashtype.version(); }
};

struct Prompt {
  Task task = Task::Mancoll;
  std::string text;
  std::vector<LabelToken> allowed_tokens;
  /// Filled slot values: summary, and for CRASHTYPE vehicle_index and conf.
  std::map<std::string, std::string> slots;
  std::string template_version;
};

struct RawOutput {
  std::string text;
  std::string backend_id;
  double latency_ms = 0.0;
};

Prompt build_mancoll_prompt(const std::string& summary, const Taxonomy& taxonomy,
                            const TemplateSet& templates);
Prompt build_crashtype_prompt(const std::string& summary, int vehicle_index,
                              const std::string& conf, const Taxonomy& taxonomy,
                              const TemplateSet& templates);

/// Options block for one configuration, rendered in candidate-set order.
std::string render_crash_type_options(const CrashConfiguration& conf);

/// "V2" for vehicle index 2.
std::string vehicle_label(int vehicle_index);

struct LabelParse {
  std::optional<LabelToken> token;
  std::string offending;  // the raw text when parsing failed

  bool ok() const { return token.has_value(); }
};

/// Accepts a response that is exactly one allowed token once surrounding
/// whitespace, quotes and punctuation are stripped. Case-sensitive.
LabelParse parse_label(const RawOutput& raw, const std::vector<LabelToken>& allowed);
LabelParse parse_label(const std::string& text, const std::vector<LabelToken>& allowed);

}  // namespace crashnarr
