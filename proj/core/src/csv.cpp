#include "vcce/csv.hpp"

#include "vcce/errors.hpp"
#include "vcce/text.hpp"

namespace vcce {

int CsvTable::column(const std::string& name) const {
  for (size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return static_cast<int>(i);
  }
  return -1;
}

namespace {

std::vector<std::string> parse_line(const std::string& text, size_t& pos) {
  std::vector<std::string> fields;
  std::string cur;
  bool in_quotes = false;
  while (pos < text.size()) {
    const char c = text[pos];
    if (in_quotes) {
      if (c == '"') {
        if (pos + 1 < text.size() && text[pos + 1] == '"') {
          cur += '"';
          ++pos;
        } else {
          in_quotes = false;
        }
      } else {
        cur += c;
      }
    } else if (c == '"') {
      in_quotes = true;
    } else if (c == ',') {
      fields.push_back(cur);
      cur.clear();
    } else if (c == '\n') {
      ++pos;
      fields.push_back(cur);
      return fields;
    } else if (c != '\r') {
      cur += c;
    }
    ++pos;
  }
  fields.push_back(cur);
  return fields;
}

}  // namespace

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  size_t pos = 0;
  if (text.empty()) return t;
  t.header = parse_line(text, pos);
  while (pos < text.size()) {
    auto row = parse_line(text, pos);
    if (row.size() == 1 && row[0].empty()) continue;  // trailing blank line
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable read_csv_file(const std::string& path) { return parse_csv(read_text_file(path)); }

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n\r") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += '"';
  return out;
}

std::string join_csv_row(const std::vector<std::string>& fields) {
  std::string out;
  for (size_t i = 0; i < fields.size(); ++i) {
    if (i) out += ',';
    out += csv_escape(fields[i]);
  }
  out += '\n';
  return out;
}

}  // namespace vcce
