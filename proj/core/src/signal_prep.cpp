#include "vcce/signal_prep.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "vcce/errors.hpp"
#include "vcce/kv_config.hpp"
#include "vcce/stats.hpp"
#include "vcce/text.hpp"

namespace vcce::sig {

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;  // normalized, a0 == 1

  void apply_in_place(std::vector<double>& x) const {
    double x1 = 0, x2 = 0, y1 = 0, y2 = 0;
    for (double& v : x) {
      const double x0 = v;
      const double y0 = b0 * x0 + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
      x2 = x1;
      x1 = x0;
      y2 = y1;
      y1 = y0;
      v = y0;
    }
  }
};

// RBJ cookbook designs with Butterworth Q.
Biquad butter_lowpass(double f, double fs) {
  const double w0 = 2.0 * std::numbers::pi * f / fs;
  const double alpha = std::sin(w0) / std::numbers::sqrt2;
  const double c = std::cos(w0);
  const double a0 = 1 + alpha;
  return {(1 - c) / 2 / a0, (1 - c) / a0, (1 - c) / 2 / a0, -2 * c / a0, (1 - alpha) / a0};
}

Biquad butter_highpass(double f, double fs) {
  const double w0 = 2.0 * std::numbers::pi * f / fs;
  const double alpha = std::sin(w0) / std::numbers::sqrt2;
  const double c = std::cos(w0);
  const double a0 = 1 + alpha;
  return {(1 + c) / 2 / a0, -(1 + c) / a0, (1 + c) / 2 / a0, -2 * c / a0, (1 - alpha) / a0};
}

// Forward-backward pass over the cascade with odd-reflection padding, so the
// result is zero-phase and edge transients stay out of the record.
std::vector<double> filtfilt(const std::vector<double>& x, const std::vector<Biquad>& cascade, double fs) {
  const size_t n = x.size();
  if (n < 2) return x;
  const size_t pad = std::min(n - 1, static_cast<size_t>(std::lround(2.0 * fs)));
  std::vector<double> ext;
  ext.reserve(n + 2 * pad);
  for (size_t i = pad; i >= 1; --i) ext.push_back(2 * x[0] - x[i]);
  ext.insert(ext.end(), x.begin(), x.end());
  for (size_t i = 1; i <= pad; ++i) ext.push_back(2 * x[n - 1] - x[n - 1 - i]);

  for (const auto& bq : cascade) bq.apply_in_place(ext);
  std::reverse(ext.begin(), ext.end());
  for (const auto& bq : cascade) bq.apply_in_place(ext);
  std::reverse(ext.begin(), ext.end());

  return std::vector<double>(ext.begin() + static_cast<long>(pad), ext.begin() + static_cast<long>(pad + n));
}

std::vector<double> moving_median(const std::vector<double>& x, size_t window) {
  const size_t n = x.size();
  const size_t half = window / 2;
  std::vector<double> out(n);
  std::vector<double> buf;
  for (size_t i = 0; i < n; ++i) {
    const size_t lo = i >= half ? i - half : 0;
    const size_t hi = std::min(n, i + half + 1);
    buf.assign(x.begin() + static_cast<long>(lo), x.begin() + static_cast<long>(hi));
    const size_t mid = buf.size() / 2;
    std::nth_element(buf.begin(), buf.begin() + static_cast<long>(mid), buf.end());
    double m = buf[mid];
    if (buf.size() % 2 == 0) {
      const double lo_mid = *std::max_element(buf.begin(), buf.begin() + static_cast<long>(mid));
      m = 0.5 * (m + lo_mid);
    }
    out[i] = m;
  }
  return out;
}

}  // namespace

SignalConfig SignalConfig::from_file(const std::string& path) {
  const KvConfig kv = KvConfig::from_file(path);
  SignalConfig c;
  c.highpass_hz = kv.get_double("denoise.highpass_hz", c.highpass_hz);
  c.lowpass_hz = kv.get_double("denoise.lowpass_hz", c.lowpass_hz);
  c.median_window_s = kv.get_double("denoise.median_window_s", c.median_window_s);
  c.integration_window_ms = kv.get_double("rpeak.integration_window_ms", c.integration_window_ms);
  c.refractory_ms = kv.get_double("rpeak.refractory_ms", c.refractory_ms);
  c.refine_ms = kv.get_double("rpeak.refine_ms", c.refine_ms);
  c.threshold_fraction = kv.get_double("rpeak.threshold_fraction", c.threshold_fraction);
  c.noise_percentile = kv.get_double("rpeak.noise_percentile", c.noise_percentile);
  c.signal_percentile = kv.get_double("rpeak.signal_percentile", c.signal_percentile);
  c.q_window_ms = kv.get_double("delineate.q_window_ms", c.q_window_ms);
  c.s_window_ms = kv.get_double("delineate.s_window_ms", c.s_window_ms);
  c.qrs_scan_ms = kv.get_double("delineate.qrs_scan_ms", c.qrs_scan_ms);
  c.p_search_min_ms = kv.get_double("delineate.p_search_min_ms", c.p_search_min_ms);
  c.p_search_max_ms = kv.get_double("delineate.p_search_max_ms", c.p_search_max_ms);
  c.p_edge_scan_ms = kv.get_double("delineate.p_edge_scan_ms", c.p_edge_scan_ms);
  c.t_search_min_ms = kv.get_double("delineate.t_search_min_ms", c.t_search_min_ms);
  c.t_search_max_ms = kv.get_double("delineate.t_search_max_ms", c.t_search_max_ms);
  c.t_rr_fraction = kv.get_double("delineate.t_rr_fraction", c.t_rr_fraction);
  c.r_refine_ms = kv.get_double("delineate.r_refine_ms", c.r_refine_ms);
  c.edge_ratio = kv.get_double("delineate.edge_ratio", c.edge_ratio);
  return c;
}

std::string SignalConfig::dump() const {
  KvConfig kv;
  kv.set("denoise.highpass_hz", format_double(highpass_hz));
  kv.set("denoise.lowpass_hz", format_double(lowpass_hz));
  kv.set("denoise.median_window_s", format_double(median_window_s));
  kv.set("rpeak.integration_window_ms", format_double(integration_window_ms));
  kv.set("rpeak.refractory_ms", format_double(refractory_ms));
  kv.set("rpeak.refine_ms", format_double(refine_ms));
  kv.set("rpeak.threshold_fraction", format_double(threshold_fraction));
  kv.set("rpeak.noise_percentile", format_double(noise_percentile));
  kv.set("rpeak.signal_percentile", format_double(signal_percentile));
  kv.set("delineate.q_window_ms", format_double(q_window_ms));
  kv.set("delineate.s_window_ms", format_double(s_window_ms));
  kv.set("delineate.qrs_scan_ms", format_double(qrs_scan_ms));
  kv.set("delineate.p_search_min_ms", format_double(p_search_min_ms));
  kv.set("delineate.p_search_max_ms", format_double(p_search_max_ms));
  kv.set("delineate.p_edge_scan_ms", format_double(p_edge_scan_ms));
  kv.set("delineate.t_search_min_ms", format_double(t_search_min_ms));
  kv.set("delineate.t_search_max_ms", format_double(t_search_max_ms));
  kv.set("delineate.t_rr_fraction", format_double(t_rr_fraction));
  kv.set("delineate.r_refine_ms", format_double(r_refine_ms));
  kv.set("delineate.edge_ratio", format_double(edge_ratio));
  return kv.dump();
}

std::vector<double> denoise_channel(const std::vector<double>& x, double fs, const SignalConfig& cfg) {
  // Baseline first, then the band-pass.
  size_t win = static_cast<size_t>(std::lround(cfg.median_window_s * fs));
  if (win % 2 == 0) ++win;
  std::vector<double> y(x.size());
  const auto base = moving_median(x, win);
  for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] - base[i];
  const std::vector<Biquad> cascade = {butter_highpass(cfg.highpass_hz, fs), butter_lowpass(cfg.lowpass_hz, fs)};
  return filtfilt(y, cascade, fs);
}

EcgRecord denoise(const EcgRecord& record, const SignalConfig& cfg) {
  const double fs = record.fs();
  if (fs < 2.0 * cfg.lowpass_hz + 1.0) {
    throw PreconditionError("denoise: sampling rate " + format_double(fs) + " Hz too low for the " +
                            format_double(cfg.lowpass_hz) + " Hz band edge");
  }
  EcgRecord out = record;
  for (auto& lead : out.signals) lead = denoise_channel(lead, fs, cfg);
  return out;
}

namespace {

int64_t ms_to_samples(double ms, double fs) { return static_cast<int64_t>(std::lround(ms / 1000.0 * fs)); }

}  // namespace

std::vector<int64_t> detect_r_peaks(const std::vector<double>& detect_on, double fs,
                                    const std::vector<double>& refine_on, const SignalConfig& cfg) {
  const auto n = static_cast<int64_t>(detect_on.size());
  if (n < 3) throw PreconditionError("no beats detected");

  // Derivative -> squaring -> centered moving-window integration.
  std::vector<double> energy(n, 0.0);
  for (int64_t i = 1; i + 1 < n; ++i) {
    const double d = (detect_on[i + 1] - detect_on[i - 1]) / 2.0;
    energy[i] = d * d;
  }
  int64_t iw = ms_to_samples(cfg.integration_window_ms, fs);
  if (iw < 1) iw = 1;
  const int64_t half = iw / 2;
  std::vector<double> integrated(n, 0.0);
  double acc = 0;
  int64_t lo = 0, hi = -1;  // inclusive window [i-half, i+half]
  for (int64_t i = 0; i < n; ++i) {
    const int64_t want_lo = std::max<int64_t>(0, i - half);
    const int64_t want_hi = std::min<int64_t>(n - 1, i + half);
    while (hi < want_hi) acc += energy[++hi];
    while (lo < want_lo) acc -= energy[lo++];
    integrated[i] = acc / static_cast<double>(want_hi - want_lo + 1);
  }

  // Threshold between a noise floor and a signal level estimate. Percentile
  // based, so the decision is invariant to amplitude scaling.
  std::vector<double> sorted(integrated.begin(), integrated.end());
  std::sort(sorted.begin(), sorted.end());
  const double noise = percentile_sorted(sorted, cfg.noise_percentile);
  const double sig = percentile_sorted(sorted, cfg.signal_percentile);
  const double threshold = noise + cfg.threshold_fraction * (sig - noise);

  // Candidate per contiguous above-threshold segment: midpoint of the samples
  // attaining the segment maximum (plateaus resolve to their centre).
  struct Candidate {
    int64_t pos;
    double value;
  };
  std::vector<Candidate> candidates;
  int64_t i = 0;
  while (i < n) {
    if (!(integrated[i] > threshold && integrated[i] > 0.0)) {
      ++i;
      continue;
    }
    int64_t j = i;
    double best = integrated[i];
    int64_t first_best = i, last_best = i;
    while (j < n && integrated[j] > threshold && integrated[j] > 0.0) {
      if (integrated[j] > best) {
        best = integrated[j];
        first_best = last_best = j;
      } else if (integrated[j] == best) {
        last_best = j;
      }
      ++j;
    }
    candidates.push_back({(first_best + last_best) / 2, best});
    i = j;
  }

  const int64_t refractory = ms_to_samples(cfg.refractory_ms, fs);
  std::vector<Candidate> kept;
  for (const auto& c : candidates) {
    if (!kept.empty() && c.pos - kept.back().pos < refractory) {
      if (c.value > kept.back().value) kept.back() = c;
    } else {
      kept.push_back(c);
    }
  }

  // Refine to the local absolute maximum of the refine signal.
  const int64_t rw = ms_to_samples(cfg.refine_ms, fs);
  const auto m = static_cast<int64_t>(refine_on.size());
  std::vector<int64_t> peaks;
  for (const auto& c : kept) {
    const int64_t a = std::max<int64_t>(0, c.pos - rw);
    const int64_t b = std::min(m - 1, c.pos + rw);
    int64_t best = c.pos;
    double best_v = -1.0;
    for (int64_t k = a; k <= b; ++k) {
      const double v = std::abs(refine_on[k]);
      if (v > best_v) {
        best_v = v;
        best = k;
      }
    }
    peaks.push_back(best);
  }

  // Refinement can pull neighbours together; enforce the refractory gap by
  // dropping the weaker of any violating pair.
  std::sort(peaks.begin(), peaks.end());
  peaks.erase(std::unique(peaks.begin(), peaks.end()), peaks.end());
  bool changed = true;
  while (changed && peaks.size() > 1) {
    changed = false;
    for (size_t k = 0; k + 1 < peaks.size(); ++k) {
      if (peaks[k + 1] - peaks[k] < refractory) {
        const size_t drop = std::abs(refine_on[peaks[k]]) >= std::abs(refine_on[peaks[k + 1]]) ? k + 1 : k;
        peaks.erase(peaks.begin() + static_cast<long>(drop));
        changed = true;
        break;
      }
    }
  }

  if (peaks.empty()) throw PreconditionError("no beats detected");
  return peaks;
}

std::pair<int, std::vector<int64_t>> detect_reference_r_peaks(const EcgRecord& denoised, const EcgRecord& raw,
                                                              const SignalConfig& cfg) {
  const int lead_ii = lead_index("II");
  try {
    return {lead_ii, detect_r_peaks(denoised.signals[lead_ii], denoised.fs(), raw.signals[lead_ii], cfg)};
  } catch (const PreconditionError&) {
    // Fall back to the strongest lead.
  }
  int best_lead = -1;
  double best_rms = -1.0;
  for (int l = 0; l < kNumLeads; ++l) {
    if (l == lead_ii) continue;
    const double r = rms(denoised.signals[l]);
    if (r > best_rms) {
      best_rms = r;
      best_lead = l;
    }
  }
  return {best_lead, detect_r_peaks(denoised.signals[best_lead], denoised.fs(), raw.signals[best_lead], cfg)};
}

namespace {

constexpr double kIso = 0.0;  // baseline level after median removal

int sign_of(double v) { return v > 0 ? 1 : (v < 0 ? -1 : 0); }

// Walks outward from `peak` looking for the wave edge: a slope reversal
// (local extremum on the way back to baseline), a baseline crossing, or a
// near-baseline sample relative to the peak amplitude. Returns the edge
// index or nullopt when the scan window is exhausted.
std::optional<int64_t> scan_edge(const std::vector<double>& x, int64_t peak, int64_t limit, int step,
                                 double edge_ratio) {
  const double peak_amp = x[peak] - kIso;
  const int dir = sign_of(peak_amp);
  if (dir == 0) return std::nullopt;
  const double floor_amp = std::abs(peak_amp) * edge_ratio;
  for (int64_t i = peak + step; step > 0 ? i <= limit : i >= limit; i += step) {
    if (dir * (x[i] - x[i - step]) >= 0) return i - step;          // zero slope / reversal
    if (dir * (x[i] - kIso) <= 0) return i;                        // baseline crossing
    if (std::abs(x[i] - kIso) <= floor_amp) return i;              // faded into baseline
  }
  return std::nullopt;
}

// Strict local extremum test. `want_max` selects maxima vs minima.
bool is_local_extremum(const std::vector<double>& x, int64_t i, bool want_max) {
  if (i <= 0 || i + 1 >= static_cast<int64_t>(x.size())) return false;
  if (want_max) return x[i] > x[i - 1] && x[i] > x[i + 1];
  return x[i] < x[i - 1] && x[i] < x[i + 1];
}

// Extremum with the largest |slope| between `from` and `to` defines the
// tangent; its intercept with the isoelectric line is the wave boundary.
std::optional<int64_t> tangent_intercept(const std::vector<double>& x, int64_t t_peak, int64_t from, int64_t to,
                                         bool ascending_limb) {
  if (from >= to) return std::nullopt;
  const int dir = sign_of(x[t_peak] - kIso);
  if (dir == 0) return std::nullopt;
  int64_t steepest = -1;
  double best_slope = 0.0;
  for (int64_t i = std::max<int64_t>(from, 1); i <= to && i + 1 < static_cast<int64_t>(x.size()); ++i) {
    const double s = (x[i + 1] - x[i - 1]) / 2.0;
    // Ascending limb of a positive wave rises (dir*s > 0); descending falls.
    const double oriented = ascending_limb ? dir * s : -dir * s;
    if (oriented > best_slope) {
      best_slope = oriented;
      steepest = i;
    }
  }
  if (steepest < 0 || best_slope == 0.0) return std::nullopt;
  const double slope = (x[steepest + 1] - x[steepest - 1]) / 2.0;
  const double t = static_cast<double>(steepest) + (kIso - x[steepest]) / slope;
  return static_cast<int64_t>(std::lround(t));
}

}  // namespace

FiducialSet delineate(const EcgRecord& denoised, const std::vector<int64_t>& r_peaks, int reference_lead,
                      const SignalConfig& cfg) {
  if (r_peaks.size() < 3) throw PreconditionError("record too short after exclusion");
  const double fs = denoised.fs();
  const auto n = denoised.n_samples();
  const auto ms = [&](double v) { return ms_to_samples(v, fs); };

  FiducialSet set;
  set.reference_lead = reference_lead;

  for (size_t k = 1; k + 1 < r_peaks.size(); ++k) {
    BeatFiducials beat;
    beat.beat_index = static_cast<int>(k - 1);
    beat.r_peak_global = r_peaks[k];
    const int64_t r = r_peaks[k];
    const int64_t wstart = (r_peaks[k - 1] + r) / 2;
    const int64_t wend = std::min<int64_t>(n, (r + r_peaks[k + 1]) / 2);
    const int64_t rr_next = r_peaks[k + 1] - r;

    for (int lead = 0; lead < kNumLeads; ++lead) {
      const auto& x = denoised.signals[lead];
      LeadFiducials f;

      // Per-lead R peak: strongest deflection near the shared anchor.
      int64_t r_lead = r;
      {
        const int64_t a = std::max(wstart, r - ms(cfg.r_refine_ms));
        const int64_t b = std::min(wend - 1, r + ms(cfg.r_refine_ms));
        double best = -1.0;
        for (int64_t i = a; i <= b; ++i) {
          const double v = std::abs(x[i] - kIso);
          if (v > best || (v == best && std::abs(i - r) < std::abs(r_lead - r))) {
            best = v;
            r_lead = i;
          }
        }
      }
      f.set(kRPeak, r_lead);

      // Q and S: deepest strict local minima below baseline beside R.
      std::optional<int64_t> q, s;
      {
        const int64_t a = std::max(wstart, r - ms(cfg.q_window_ms));
        for (int64_t i = a; i < r; ++i) {
          if (x[i] < kIso && is_local_extremum(x, i, false)) {
            if (!q || x[i] <= x[*q]) q = i;
          }
        }
        const int64_t b = std::min(wend - 1, r + ms(cfg.s_window_ms));
        for (int64_t i = r + 1; i <= b; ++i) {
          if (x[i] < kIso && is_local_extremum(x, i, false)) {
            if (!s || x[i] < x[*s]) s = i;
          }
        }
      }
      if (q) f.set(kQPeak, *q);
      if (s) f.set(kSPeak, *s);

      // R onset/offset between R and the neighbouring troughs.
      {
        const int64_t left_limit = q ? *q + 1 : std::max(wstart, r_lead - ms(cfg.qrs_scan_ms));
        auto onset = scan_edge(x, r_lead, left_limit, -1, cfg.edge_ratio);
        if (!onset && q) onset = *q + 1;  // narrow dip: boundary sample after Q
        if (onset) f.set(kROnset, *onset);

        const int64_t right_limit = s ? *s - 1 : std::min(wend - 1, r_lead + ms(cfg.qrs_scan_ms));
        auto offset = scan_edge(x, r_lead, right_limit, +1, cfg.edge_ratio);
        if (!offset && s) offset = *s - 1;
        if (offset) f.set(kROffset, *offset);
      }

      // P wave: positive maximum in its search band.
      {
        const int64_t a = std::max(wstart, r - ms(cfg.p_search_max_ms));
        const int64_t b = std::max(wstart, r - ms(cfg.p_search_min_ms));
        std::optional<int64_t> p;
        for (int64_t i = a; i <= b && i < n; ++i) {
          if (x[i] > kIso && is_local_extremum(x, i, true)) {
            if (!p || x[i] >= x[*p]) p = i;
          }
        }
        if (p) {
          f.set(kPPeak, *p);
          const int64_t scan = ms(cfg.p_edge_scan_ms);
          if (auto on = scan_edge(x, *p, std::max(wstart, *p - scan), -1, cfg.edge_ratio)) f.set(kPOnset, *on);
          const int64_t off_limit = std::min(*p + scan, r - ms(cfg.q_window_ms) - 1);
          if (auto off = scan_edge(x, *p, off_limit, +1, cfg.edge_ratio)) f.set(kPOffset, *off);
        }
      }

      // T wave: largest deflection of either polarity, bounded by RR_next.
      {
        const double t_hi_ms =
            std::min(cfg.t_search_max_ms, cfg.t_rr_fraction * static_cast<double>(rr_next) / fs * 1000.0);
        const int64_t a = std::min(wend - 1, r + ms(cfg.t_search_min_ms));
        const int64_t b = std::min(wend - 1, r + ms(t_hi_ms));
        std::optional<int64_t> t;
        for (int64_t i = a; i <= b; ++i) {
          const bool want_max = x[i] > kIso;
          if (is_local_extremum(x, i, want_max)) {
            if (!t || std::abs(x[i] - kIso) >= std::abs(x[*t] - kIso)) t = i;
          }
        }
        if (t) {
          f.set(kTPeak, *t);
          if (auto on = tangent_intercept(x, *t, a, *t - 1, true)) {
            if (*on >= wstart && *on < *t) f.set(kTOnset, *on);
          }
          if (auto off = tangent_intercept(x, *t, *t + 1, wend - 1, false)) {
            if (*off > *t && *off < wend) f.set(kTOffset, *off);
          }
        }
      }

      // Enforce the temporal ordering invariant around the R anchor: anything
      // out of sequence reverts to undetected.
      {
        int64_t cursor = r_lead;
        for (Fiducial fd : {kROnset, kQPeak, kPOffset, kPPeak, kPOnset}) {
          if (auto v = f.get(fd)) {
            if (*v < cursor) {
              cursor = *v;
            } else {
              f.idx[fd].reset();
            }
          }
        }
        cursor = r_lead;
        for (Fiducial fd : {kROffset, kSPeak, kTOnset, kTPeak, kTOffset}) {
          if (auto v = f.get(fd)) {
            if (*v > cursor) {
              cursor = *v;
            } else {
              f.idx[fd].reset();
            }
          }
        }
      }

      beat.leads[lead] = f;
    }
    set.beats.push_back(std::move(beat));
  }
  return set;
}

std::vector<BeatWindow> segment_beats(const FiducialSet& fiducials, const std::vector<int64_t>& r_peaks) {
  if (r_peaks.size() < 3) throw PreconditionError("record too short after exclusion");
  std::vector<BeatWindow> windows;
  for (size_t k = 1; k + 1 < r_peaks.size(); ++k) {
    BeatWindow w;
    w.beat_index = static_cast<int>(k - 1);
    w.r_peak_global = r_peaks[k];
    w.start = (r_peaks[k - 1] + r_peaks[k]) / 2;
    w.end = (r_peaks[k] + r_peaks[k + 1]) / 2;
    windows.push_back(w);
  }
  if (windows.size() != fiducials.beats.size()) {
    throw PreconditionError("segment_beats: fiducial set does not match the R peak train");
  }
  return windows;
}

}  // namespace vcce::sig
