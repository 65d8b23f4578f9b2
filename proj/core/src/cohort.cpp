#include "vcce/cohort.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include <nlohmann/json.hpp>

#include "vcce/csv.hpp"
#include "vcce/errors.hpp"
#include "vcce/kv_config.hpp"
#include "vcce/rng.hpp"
#include "vcce/text.hpp"

namespace vcce::io {

using nlohmann::json;

std::map<std::string, double> parse_scp_codes(const std::string& text) {
  // Accepts {'NORM': 100.0, 'SR': 0.0}, {"IMI":100}, or bare NORM:100 pairs.
  std::map<std::string, double> out;
  size_t i = 0;
  const size_t n = text.size();
  auto skip_ws = [&] {
    while (i < n && (std::isspace(static_cast<unsigned char>(text[i])) || text[i] == '{' || text[i] == '}' ||
                     text[i] == ','))
      ++i;
  };
  while (true) {
    skip_ws();
    if (i >= n) break;
    std::string key;
    if (text[i] == '\'' || text[i] == '"') {
      const char q = text[i++];
      while (i < n && text[i] != q) key += text[i++];
      if (i < n) ++i;
    } else {
      while (i < n && (std::isalnum(static_cast<unsigned char>(text[i])) || text[i] == '_')) key += text[i++];
    }
    skip_ws();
    if (key.empty()) break;
    if (i >= n || text[i] != ':') {
      throw ParseError("scp_codes: expected ':' after key '" + key + "' in \"" + text + "\"");
    }
    ++i;
    skip_ws();
    size_t start = i;
    while (i < n && (std::isdigit(static_cast<unsigned char>(text[i])) || text[i] == '.' || text[i] == '-' ||
                     text[i] == '+' || text[i] == 'e' || text[i] == 'E'))
      ++i;
    const auto v = parse_double(text.substr(start, i - start));
    if (!v) throw ParseError("scp_codes: unparseable likelihood for key '" + key + "' in \"" + text + "\"");
    out[key] = *v;
  }
  return out;
}

CohortManifest load_manifest(const std::string& path) {
  const CsvTable t = read_csv_file(path);
  int id_col = t.column("record_id");
  if (id_col < 0) id_col = t.column("ecg_id");
  const int patient_col = t.column("patient_id");
  const int scp_col = t.column("scp_codes");
  int path_col = t.column("path");
  if (path_col < 0) path_col = t.column("filename_lr");
  if (path_col < 0) path_col = t.column("filename");
  if (id_col < 0 || patient_col < 0 || scp_col < 0) {
    throw ParseError(path + ": manifest needs record_id/ecg_id, patient_id and scp_codes columns");
  }
  CohortManifest m;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() < t.header.size()) {
      throw ParseError(path + ": row " + std::to_string(r + 2) + " has too few cells");
    }
    ManifestRow mr;
    mr.record_id = trim(row[id_col]);
    mr.patient_id = trim(row[patient_col]);
    // PTB-XL patient ids are floats ("15709.0"); strip a trailing ".0".
    if (mr.patient_id.size() > 2 && mr.patient_id.ends_with(".0")) {
      mr.patient_id.resize(mr.patient_id.size() - 2);
    }
    mr.path = path_col >= 0 ? trim(row[path_col]) : mr.record_id;
    mr.scp_codes = parse_scp_codes(row[scp_col]);
    m.rows.push_back(std::move(mr));
  }
  return m;
}

FilterRules FilterRules::defaults() {
  FilterRules r;
  r.drop_codes = {"STTC", "PMI", "INJAS", "INJAL", "INJIN", "INJLA", "INJIL"};
  r.mi_priority = {"IMI", "ASMI", "ILMI", "AMI", "ALMI", "LMI", "IPLMI", "IPMI", "MI"};
  return r;
}

FilterRules FilterRules::from_file(const std::string& path) {
  const KvConfig cfg = KvConfig::from_file(path);
  FilterRules r;
  r.norm_code = cfg.get("norm_code", r.norm_code);
  r.keep_likelihood = cfg.get_double("keep_likelihood", r.keep_likelihood);
  r.drop_codes = cfg.get_list("drop_codes");
  r.mi_priority = cfg.get_list("mi_priority");
  if (r.mi_priority.empty()) throw ParseError(path + ": mi_priority list is empty");
  return r;
}

std::string FilterRules::dump() const {
  KvConfig cfg;
  cfg.set("norm_code", norm_code);
  cfg.set("keep_likelihood", format_double(keep_likelihood));
  std::string drops, prio;
  for (size_t i = 0; i < drop_codes.size(); ++i) drops += (i ? ", " : "") + drop_codes[i];
  for (size_t i = 0; i < mi_priority.size(); ++i) prio += (i ? ", " : "") + mi_priority[i];
  cfg.set("drop_codes", drops);
  cfg.set("mi_priority", prio);
  return cfg.dump();
}

Cohort filter_cohort(const CohortManifest& manifest, const FilterRules& rules) {
  Cohort cohort;
  for (const auto& row : manifest.rows) {
    bool dropped = false;
    for (const auto& code : rules.drop_codes) {
      if (row.scp_codes.count(code)) {
        dropped = true;
        break;
      }
    }
    if (dropped) continue;

    const bool is_norm = [&] {
      auto it = row.scp_codes.find(rules.norm_code);
      return it != row.scp_codes.end() && it->second == rules.keep_likelihood;
    }();
    std::string mi_code;
    for (const auto& code : rules.mi_priority) {  // priority order resolves overlaps
      auto it = row.scp_codes.find(code);
      if (it != row.scp_codes.end() && it->second == rules.keep_likelihood) {
        mi_code = code;
        break;
      }
    }
    const bool is_mi = !mi_code.empty();
    if (is_norm == is_mi) continue;  // neither, or contradictory labels

    CohortRecord rec;
    rec.record_id = row.record_id;
    rec.patient_id = row.patient_id;
    rec.path = row.path;
    if (is_norm) {
      rec.label = {DiagnosisClass::kNorm, rules.norm_code};
    } else {
      rec.label = {DiagnosisClass::kMi, mi_code};
    }
    cohort.records.push_back(std::move(rec));
  }
  if (cohort.records.empty()) throw PreconditionError("cohort empty after filtering");
  return cohort;
}

SplitCounts balanced_split(Cohort& cohort, uint64_t seed, double train_fraction) {
  // Patients whose records resolve to both classes cannot be assigned a
  // class-pure side; they are removed before balancing.
  std::map<std::string, std::set<DiagnosisClass>> patient_classes;
  for (const auto& rec : cohort.records) patient_classes[rec.patient_id].insert(rec.label.cls);

  std::vector<std::string> norm_patients, mi_patients;
  for (const auto& [pid, classes] : patient_classes) {
    if (classes.size() != 1) continue;
    (*classes.begin() == DiagnosisClass::kNorm ? norm_patients : mi_patients).push_back(pid);
  }
  if (norm_patients.empty() || mi_patients.empty()) {
    throw PreconditionError("balanced_split: need patients of both classes");
  }

  Rng rng(seed);
  Rng norm_rng = rng.fork(1);
  Rng mi_rng = rng.fork(2);
  norm_rng.shuffle(norm_patients);  // already sorted via the map walk above
  mi_rng.shuffle(mi_patients);

  const size_t per_class = std::min(norm_patients.size(), mi_patients.size());
  norm_patients.resize(per_class);
  mi_patients.resize(per_class);
  const auto n_train = static_cast<size_t>(static_cast<double>(per_class) * train_fraction);

  std::map<std::string, std::string> assignment;
  for (auto* group : {&norm_patients, &mi_patients}) {
    for (size_t i = 0; i < group->size(); ++i) {
      assignment[(*group)[i]] = i < n_train ? "train" : "test";
    }
  }

  std::vector<CohortRecord> kept;
  for (auto& rec : cohort.records) {
    auto it = assignment.find(rec.patient_id);
    if (it == assignment.end()) continue;
    rec.split = it->second;
    kept.push_back(std::move(rec));
  }
  cohort.records = std::move(kept);
  return {static_cast<int64_t>(n_train), static_cast<int64_t>(per_class - n_train)};
}

std::string cohort_to_jsonl(const Cohort& cohort) {
  std::string out;
  for (const auto& rec : cohort.records) {
    json j;
    j["record_id"] = rec.record_id;
    j["patient_id"] = rec.patient_id;
    j["label"] = to_string(rec.label.cls);
    j["split"] = rec.split;
    out += j.dump();
    out += '\n';
  }
  return out;
}

Cohort cohort_from_jsonl(const std::string& text) {
  Cohort cohort;
  int line_no = 0;
  for (const auto& line : split(text, '\n')) {
    ++line_no;
    if (trim(line).empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError("cohort jsonl line " + std::to_string(line_no) + ": invalid JSON");
    CohortRecord rec;
    rec.record_id = j.at("record_id").get<std::string>();
    rec.patient_id = j.at("patient_id").get<std::string>();
    const auto label = j.at("label").get<std::string>();
    rec.label.cls = label == "NORM" ? DiagnosisClass::kNorm : DiagnosisClass::kMi;
    rec.label.subtype = label;
    rec.split = j.at("split").get<std::string>();
    cohort.records.push_back(std::move(rec));
  }
  return cohort;
}

}  // namespace vcce::io
