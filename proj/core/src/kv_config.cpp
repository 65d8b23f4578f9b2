#include "vcce/kv_config.hpp"

#include "vcce/errors.hpp"
#include "vcce/text.hpp"

namespace vcce {

KvConfig KvConfig::parse(const std::string& text) {
  KvConfig cfg;
  std::string section;
  int line_no = 0;
  for (const auto& raw : split(text, '\n')) {
    ++line_no;
    std::string line = trim(raw);
    if (line.empty() || line[0] == '#') continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ParseError("config line " + std::to_string(line_no) + ": unterminated section header");
      }
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ParseError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    std::string key = trim(line.substr(0, eq));
    if (key.empty()) {
      throw ParseError("config line " + std::to_string(line_no) + ": empty key");
    }
    if (!section.empty()) key = section + "." + key;
    cfg.values_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

KvConfig KvConfig::from_file(const std::string& path) { return parse(read_text_file(path)); }

std::string KvConfig::get(const std::string& key, const std::string& fallback) const {
  auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

double KvConfig::get_double(const std::string& key, double fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  auto v = parse_double(it->second);
  if (!v) throw ParseError("config key '" + key + "': not a number: " + it->second);
  return *v;
}

long long KvConfig::get_int(const std::string& key, long long fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  auto v = parse_int(it->second);
  if (!v) throw ParseError("config key '" + key + "': not an integer: " + it->second);
  return *v;
}

bool KvConfig::get_bool(const std::string& key, bool fallback) const {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string v = it->second;
  if (v == "true" || v == "on" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "off" || v == "0" || v == "no") return false;
  throw ParseError("config key '" + key + "': not a boolean: " + v);
}

std::vector<std::string> KvConfig::get_list(const std::string& key) const {
  std::vector<std::string> out;
  auto it = values_.find(key);
  if (it == values_.end()) return out;
  for (auto& item : split(it->second, ',')) {
    const std::string v = trim(item);
    if (!v.empty()) out.push_back(v);
  }
  return out;
}

std::string KvConfig::dump() const {
  // Preamble keys first so they cannot be swallowed by a section on re-parse.
  std::string out;
  for (const auto& [key, value] : values_) {
    if (key.find('.') == std::string::npos) out += key + " = " + value + "\n";
  }
  std::string section;
  for (const auto& [key, value] : values_) {
    const auto dot = key.find('.');
    if (dot == std::string::npos) continue;
    const std::string sec = key.substr(0, dot);
    if (sec != section) {
      if (!out.empty()) out += '\n';
      out += "[" + sec + "]\n";
      section = sec;
    }
    out += key.substr(dot + 1) + " = " + value + "\n";
  }
  return out;
}

}  // namespace vcce
