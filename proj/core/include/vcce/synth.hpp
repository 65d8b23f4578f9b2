#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "vcce/ecg.hpp"

namespace vcce::synth {

// One gaussian wave component, placed relative to the beat's R instant.
struct WaveComponent {
  double center_ms = 0.0;
  double width_ms = 10.0;     // gaussian sigma
  double amplitude_mv = 0.0;  // 0 disables the wave (fiducials undetected)
};

enum WaveIndex { kWaveP = 0, kWaveQ, kWaveR, kWaveS, kWaveT, kNumWaves };

// Gaussians instead of a dynamical ECG model: closed-form fiducials make the
// record its own oracle. Peaks sit at the centers, onsets/offsets at
// center +/- 2.5 sigma.
struct BeatTemplate {
  std::array<std::array<WaveComponent, kNumWaves>, kNumLeads> leads;
  std::vector<double> rr_ms = {1000.0};  // cycled schedule of RR intervals
  double noise_mv = 0.0;                 // white gaussian noise sigma

  void validate(double fs) const;  // centers ordered, widths resolvable at fs
};

// A 12-lead template with plausible relative amplitudes. MI variants invert
// the II/aVF T waves so the classes separate on II_T.
BeatTemplate standard_template(DiagnosisClass cls = DiagnosisClass::kNorm);

struct SynthRecord {
  EcgRecord record;
  FiducialSet ground_truth;       // interior beats only, analytic indices
  std::vector<int64_t> r_peaks;   // every beat, including the boundary ones
};

// Noise is seeded; the analytic fiducials do not depend on the noise seed.
SynthRecord synthesize(const BeatTemplate& tpl, int n_beats, double fs, uint64_t seed);

// Clean template value at one sample instant (the oracle half of the pair).
double template_value(const BeatTemplate& tpl, const std::vector<double>& r_times_s, int lead, double t_s);

// R anchor instants for `n_beats` beats under the template's RR schedule.
std::vector<double> beat_anchors(const BeatTemplate& tpl, int n_beats);

struct CohortParams {
  int records_per_class = 12;
  int beats_per_record = 10;
  double fs = 100.0;
  double noise_mv = 0.0;
  double amplitude_jitter = 0.15;  // relative, per wave, per record
  uint64_t seed = 7;
};

// Writes a self-contained synthetic cohort: per-record CSV + .meta pairs and
// a PTB-XL style manifest.csv, under `dir`. Returns the manifest path.
std::string write_synth_cohort(const std::string& dir, const CohortParams& params);

}  // namespace vcce::synth
