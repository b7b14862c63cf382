#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace crashnarr {

/// Line-delimited JSON artifact. The first line may be a metadata record
/// (`{"kind":"meta",...}`) carrying version stamps and seeds.
struct JsonlFile {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<nlohmann::json> records;
};

JsonlFile read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const nlohmann::json& meta,
                 const std::vector<nlohmann::json>& records);

/// Writes `text` to `path`, raising IoError on failure.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace crashnarr
