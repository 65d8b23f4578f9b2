#pragma once

#include <array>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "vcce/ecg.hpp"
#include "vcce/feature_names.hpp"

namespace vcce::feat {

// Missing values travel as NaN; zeros are legitimate amplitudes.
inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

// The 14 time-dependent features of one beat, in temporal_kind_names order,
// seconds except RR_Rate and QTc. Fiducials come from the reference lead;
// any term touching an undetected fiducial yields NaN.
std::array<double, kNumTemporal> extract_temporal(const LeadFiducials& reference, int64_t rr_prev_samples,
                                                  int64_t rr_next_samples, double fs);

// The 15 amplitude features of one beat on one lead, in amplitude_kind_names
// order, millivolts. ST_mean/ST_std cover samples in [R_offset, T_onset).
std::array<double, kNumAmplitude> extract_amplitudes(const std::vector<double>& lead_signal,
                                                     const LeadFiducials& fiducials);

struct BeatProvenance {
  std::string record_id;
  int beat_index = 0;
};

struct FeatureMatrix {
  std::vector<std::string> names;   // fixed 194-column registry order
  std::vector<double> values;       // row-major, n_rows x names.size()
  std::vector<int> labels;          // 0 = NORM, 1 = MI
  std::vector<std::string> splits;  // "train"/"test" per row
  std::vector<BeatProvenance> provenance;

  size_t n_rows() const { return provenance.size(); }
  size_t n_cols() const { return names.size(); }
  double* row(size_t r) { return values.data() + r * n_cols(); }
  const double* row(size_t r) const { return values.data() + r * n_cols(); }
};

struct RecordFeatureInput {
  std::string record_id;
  const EcgRecord* denoised = nullptr;
  const FiducialSet* fiducials = nullptr;
  std::vector<int64_t> r_peaks;
  int label = 0;
  std::string split = "train";
};

// One row per retained beat, 194 columns in registry order.
FeatureMatrix build_feature_matrix(const std::vector<RecordFeatureInput>& records);

// Per-column means over finite training cells ("train" split rows; all rows
// when no split labels are present). Columns with no finite value get 0.
std::vector<double> imputation_means(const FeatureMatrix& m);
void impute(FeatureMatrix& m, const std::vector<double>& means);

// CSV persistence: record_id,beat,label,split,<194 names>. Values are written
// as shortest round-trip decimals, NaN as the empty cell, so write/read/write
// is byte-identical.
std::string feature_matrix_to_csv(const FeatureMatrix& m);
FeatureMatrix feature_matrix_from_csv(const std::string& text);

}  // namespace vcce::feat
