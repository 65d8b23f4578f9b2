#pragma once

#include <string>
#include <vector>

namespace vcce {

// Minimal RFC 4180-style CSV. Quote-aware because PTB-XL metadata stores the
// scp_codes dictionary as quoted text containing commas.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  // Index of a column by name, -1 when absent.
  int column(const std::string& name) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv_file(const std::string& path);

std::string csv_escape(const std::string& field);
std::string join_csv_row(const std::vector<std::string>& fields);

}  // namespace vcce
