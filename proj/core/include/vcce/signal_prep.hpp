#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcce/ecg.hpp"

namespace vcce::sig {

// Every tunable of the preprocessing chain lives here and round-trips through
// a key-value file, because the delineation method is heuristic: real records
// need adjustment without recompiling.
struct SignalConfig {
  // [denoise]
  double highpass_hz = 0.5;
  double lowpass_hz = 40.0;
  double median_window_s = 0.6;

  // [rpeak]
  double integration_window_ms = 150.0;
  double refractory_ms = 200.0;
  double refine_ms = 50.0;
  double threshold_fraction = 0.25;
  double noise_percentile = 25.0;
  double signal_percentile = 98.0;

  // [delineate]
  double q_window_ms = 80.0;
  double s_window_ms = 80.0;
  double qrs_scan_ms = 120.0;
  double p_search_min_ms = 100.0;
  double p_search_max_ms = 300.0;
  double p_edge_scan_ms = 120.0;
  double t_search_min_ms = 120.0;
  double t_search_max_ms = 450.0;
  double t_rr_fraction = 0.7;
  double r_refine_ms = 40.0;
  // Near-baseline stop for edge scans, relative to the wave's peak amplitude.
  // exp(-2.5^2/2): on a gaussian flank this lands at 2.5 sigma from the peak.
  double edge_ratio = 0.043936933623407485;

  static SignalConfig defaults() { return {}; }
  static SignalConfig from_file(const std::string& path);
  std::string dump() const;
};

// Zero-phase band-pass (two passes of a 4th-order recursive filter, one
// forward and one backward) after subtracting a moving-median baseline.
// Throws when fs is too low for the upper band edge.
EcgRecord denoise(const EcgRecord& record, const SignalConfig& cfg = SignalConfig::defaults());

std::vector<double> denoise_channel(const std::vector<double>& x, double fs, const SignalConfig& cfg);

// Energy-based QRS detection (derivative, squaring, moving-window integration,
// adaptive threshold with a refractory period), refined to the local
// absolute maximum of `refine_on` (normally the raw reference lead).
// Returns strictly increasing indices with pairwise gaps >= refractory.
std::vector<int64_t> detect_r_peaks(const std::vector<double>& detect_on, double fs,
                                    const std::vector<double>& refine_on,
                                    const SignalConfig& cfg = SignalConfig::defaults());

// Reference lead choice: lead II, or the lead with maximal RMS when lead II
// yields no peaks. Returns {lead index, peaks}.
std::pair<int, std::vector<int64_t>> detect_reference_r_peaks(const EcgRecord& denoised,
                                                              const EcgRecord& raw,
                                                              const SignalConfig& cfg = SignalConfig::defaults());

// Per-lead fiducial delineation in windows anchored on the shared R peaks.
// Boundary beats (first and last R) carry no fiducials. Any fiducial whose
// search fails is left undetected; downstream features treat it as missing.
FiducialSet delineate(const EcgRecord& denoised, const std::vector<int64_t>& r_peaks, int reference_lead,
                      const SignalConfig& cfg = SignalConfig::defaults());

// One window per retained beat, spanning midpoint-to-midpoint between
// adjacent R peaks. Throws when fewer than 3 peaks remain.
std::vector<BeatWindow> segment_beats(const FiducialSet& fiducials, const std::vector<int64_t>& r_peaks);

}  // namespace vcce::sig
