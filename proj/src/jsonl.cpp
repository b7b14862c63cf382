#include "crashnarr/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "crashnarr/error.hpp"

namespace crashnarr {

JsonlFile read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  JsonlFile file;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json rec;
    try {
      rec = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw Error(Errc::IoError, path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    if (rec.is_object() && rec.value("kind", "") == "meta") {
      file.meta = std::move(rec);
      file.meta.erase("kind");
      continue;
    }
    file.records.push_back(std::move(rec));
  }
  return file;
}

void write_jsonl(const std::filesystem::path& path, const nlohmann::json& meta,
                 const std::vector<nlohmann::json>& records) {
  std::ostringstream out;
  nlohmann::json head = {{"kind", "meta"}};
  for (const auto& [k, v] : meta.items()) head[k] = v;
  out << head.dump() << '\n';
  for (const auto& rec : records) out << rec.dump() << '\n';
  write_text(path, out.str());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoError, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::IoError, "short write to " + path.string());
}

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoError, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

}  // namespace crashnarr
