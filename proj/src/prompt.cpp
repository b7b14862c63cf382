#include "crashnarr/prompt.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "crashnarr/error.hpp"
#include "crashnarr/jsonl.hpp"

namespace crashnarr {
namespace {

[[noreturn]] void template_error(const std::string& what) {
  throw Error(Errc::TemplateError, what);
}

std::string trim_ws(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

// Walks the template; calls on_text for literal runs and on_slot for names.
template <typename OnText, typename OnSlot>
void scan(const std::string& text, OnText on_text, OnSlot on_slot) {
  std::size_t i = 0;
  while (i < text.size()) {
    const char c = text[i];
    if (c == '{') {
      if (i + 1 < text.size() && text[i + 1] == '{') {
        on_text("{");
        i += 2;
        continue;
      }
      const auto close = text.find('}', i + 1);
      if (close == std::string::npos) template_error("unclosed slot at offset " + std::to_string(i));
      const std::string name = text.substr(i + 1, close - i - 1);
      if (name.empty() || name.find_first_not_of("abcdefghijklmnopqrstuvwxyz_0123456789") !=
                              std::string::npos) {
        template_error("bad slot name '" + name + "'");
      }
      on_slot(name);
      i = close + 1;
    } else if (c == '}') {
      if (i + 1 < text.size() && text[i + 1] == '}') {
        on_text("}");
        i += 2;
        continue;
      }
      template_error("stray '}' at offset " + std::to_string(i));
    } else {
      const auto next = text.find_first_of("{}", i);
      const auto end = next == std::string::npos ? text.size() : next;
      on_text(std::string_view(text).substr(i, end - i));
      i = end;
    }
  }
}

}  // namespace

PromptTemplate::PromptTemplate(std::string text, std::string version)
    : text_(std::move(text)), version_(std::move(version)) {
  scan(
      text_, [](std::string_view) {},
      [this](const std::string& name) {
        if (std::find(slots_.begin(), slots_.end(), name) == slots_.end()) slots_.push_back(name);
      });
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& values) const {
  std::string out;
  out.reserve(text_.size() + 256);
  scan(
      text_, [&](std::string_view s) { out.append(s); },
      [&](const std::string& name) {
        auto it = values.find(name);
        if (it == values.end()) template_error("slot '" + name + "' has no value");
        out.append(it->second);
      });
  return out;
}

TemplateSet TemplateSet::load(const std::filesystem::path& dir) {
  const auto manifest_path = dir / "manifest.json";
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    template_error("bad template manifest " + manifest_path.string() + ": " + e.what());
  }
  auto load_one = [&](const char* key) {
    if (!manifest.contains(key)) template_error(std::string("manifest lacks '") + key + "'");
    const auto& entry = manifest[key];
    const auto file = entry.at("file").get<std::string>();
    return PromptTemplate(read_text(dir / file), entry.at("version").get<std::string>());
  };
  TemplateSet set;
  set.mancoll = load_one("mancoll");
  set.crashtype = load_one("crashtype");
  return set;
}

TemplateSet TemplateSet::load_default() { return load(default_asset_dir() / "templates"); }

std::string vehicle_label(int vehicle_index) { return "V" + std::to_string(vehicle_index); }

Prompt build_mancoll_prompt(const std::string& summary, const Taxonomy& taxonomy,
                            const TemplateSet& templates) {
  const std::string text = trim_ws(summary);
  if (text.empty()) throw Error(Errc::EmptySummary, "summary is empty");
  Prompt p;
  p.task = Task::Mancoll;
  p.slots = {{"summary", text}};
  p.text = templates.mancoll.render(p.slots);
  p.allowed_tokens = taxonomy.mancoll_tokens();
  p.template_version = templates.mancoll.version();
  return p;
}

std::string render_crash_type_options(const CrashConfiguration& conf) {
  std::ostringstream out;
  out << "{\n";
  for (std::size_t i = 0; i < conf.candidate_types.size(); ++i) {
    const auto& t = conf.candidate_types[i];
    out << "  " << t.code.str() << ": \"" << t.description << '"';
    if (i + 1 < conf.candidate_types.size()) out << ',';
    out << '\n';
  }
  out << '}';
  if (!conf.clarification_rules.empty()) {
    out << "\nNotes for this configuration: " << conf.clarification_rules;
  }
  return out.str();
}

Prompt build_crashtype_prompt(const std::string& summary, int vehicle_index,
                              const std::string& conf, const Taxonomy& taxonomy,
                              const TemplateSet& templates) {
  const auto& configuration = taxonomy.configuration(conf);
  const std::string text = trim_ws(summary);
  if (text.empty()) throw Error(Errc::EmptySummary, "summary is empty");
  if (vehicle_index < 1) {
    throw Error(Errc::InvalidRecord, "vehicle index must be >= 1");
  }
  Prompt p;
  p.task = Task::CrashType;
  p.slots = {{"summary", text},
             {"vehicle_summary", text},
             {"vehicle_index", vehicle_label(vehicle_index)},
             {"conf", conf},
             {"crash_type_options", render_crash_type_options(configuration)}};
  p.text = templates.crashtype.render(p.slots);
  for (const auto& t : configuration.candidate_types) p.allowed_tokens.push_back(t.code);
  p.template_version = templates.crashtype.version();
  return p;
}

LabelParse parse_label(const std::string& text, const std::vector<LabelToken>& allowed) {
  static constexpr std::string_view kStrip = " \t\r\n\"'`.,;:!?()[]{}<>*";
  const auto first = text.find_first_not_of(kStrip);
  LabelParse result;
  if (first == std::string::npos) {
    result.offending = text;
    return result;
  }
  const auto last = text.find_last_not_of(kStrip);
  const std::string core = text.substr(first, last - first + 1);
  for (const auto& token : allowed) {
    if (token.str() == core) {
      result.token = token;
      return result;
    }
  }
  result.offending = text;
  return result;
}

LabelParse parse_label(const RawOutput& raw, const std::vector<LabelToken>& allowed) {
  return parse_label(raw.text, allowed);
}

}  // namespace crashnarr
