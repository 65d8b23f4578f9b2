#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vcce/ecg.hpp"

namespace vcce::io {

struct ManifestRow {
  std::string record_id;
  std::string patient_id;
  std::string path;  // record file, relative to the records directory
  std::map<std::string, double> scp_codes;  // code -> likelihood percent
};

struct CohortManifest {
  std::vector<ManifestRow> rows;
};

// Reads the reduced PTB-XL metadata schema: a CSV with record id, patient id,
// scp_codes (serialized dictionary text) and an optional filename column.
CohortManifest load_manifest(const std::string& path);

// Tolerant `'KEY': value` scanner for the serialized scp_codes dictionary.
std::map<std::string, double> parse_scp_codes(const std::string& text);

struct FilterRules {
  std::string norm_code = "NORM";
  double keep_likelihood = 100.0;
  // Any presence of these codes excludes the record, regardless of likelihood.
  std::vector<std::string> drop_codes;
  // MI codes in priority order, most localized first; overlaps resolve to the
  // earliest entry.
  std::vector<std::string> mi_priority;

  static FilterRules defaults();
  static FilterRules from_file(const std::string& path);
  std::string dump() const;
};

struct CohortRecord {
  std::string record_id;
  std::string patient_id;
  std::string path;
  RecordLabel label;
  std::string split;  // empty until balanced_split assigns "train"/"test"
};

struct Cohort {
  std::vector<CohortRecord> records;
};

// Applies the inclusion/exclusion rules. Every surviving record has exactly
// one resolved label. Throws when the result would be empty.
Cohort filter_cohort(const CohortManifest& manifest, const FilterRules& rules);

struct SplitCounts {
  int64_t train_patients_per_class = 0;
  int64_t test_patients_per_class = 0;
};

// Undersamples the majority class to equal patient counts, then splits
// patient-level 80/20 per class. Deterministic for a given seed; no patient
// appears on both sides.
SplitCounts balanced_split(Cohort& cohort, uint64_t seed, double train_fraction = 0.8);

// JSON-lines serialization, one object per record
// {record_id, patient_id, label, split}.
std::string cohort_to_jsonl(const Cohort& cohort);
Cohort cohort_from_jsonl(const std::string& text);

}  // namespace vcce::io
