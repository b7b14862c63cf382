#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

namespace crashnarr {

/// A delimited table with a header row. Quoted fields follow RFC 4180
/// (doubled quotes, embedded delimiters and newlines).
struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const;
};

Table parse_delimited(std::istream& in, char delimiter = ',');
Table read_delimited(const std::filesystem::path& path, char delimiter = ',');

/// Quotes a field when it contains the delimiter, a quote or a line break.
std::string quote_field(const std::string& field, char delimiter = ',');

}  // namespace crashnarr
