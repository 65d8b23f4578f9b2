#include "vcce/synth.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "vcce/csv.hpp"
#include "vcce/errors.hpp"
#include "vcce/rng.hpp"
#include "vcce/text.hpp"
#include "vcce/wfdb.hpp"

namespace vcce::synth {

void BeatTemplate::validate(double fs) const {
  for (int lead = 0; lead < kNumLeads; ++lead) {
    const auto& w = leads[lead];
    for (int i = 0; i + 1 < kNumWaves; ++i) {
      if (w[i].amplitude_mv != 0.0 && w[i + 1].amplitude_mv != 0.0 && w[i].center_ms >= w[i + 1].center_ms) {
        throw PreconditionError("BeatTemplate: wave centers out of order on lead " + std::string(kLeadNames[lead]));
      }
    }
    for (const auto& c : w) {
      if (c.width_ms <= 0) throw PreconditionError("BeatTemplate: non-positive wave width");
      if (c.amplitude_mv != 0.0 && c.width_ms / 1000.0 * fs < 2.0) {
        throw PreconditionError("BeatTemplate: sampling rate too low to resolve a " + format_double(c.width_ms) +
                                " ms wave");
      }
    }
  }
  if (rr_ms.empty()) throw PreconditionError("BeatTemplate: empty RR schedule");
}

BeatTemplate standard_template(DiagnosisClass cls) {
  // Lead II morphology; other leads are scaled copies. Widths are sized for
  // 100 Hz captures: every wave keeps >= 2 samples per sigma, and Q/S are deep
  // enough to survive the R flanks as genuine local minima.
  const std::array<WaveComponent, kNumWaves> base = {{
      {-200.0, 24.0, 0.15},  // P
      {-70.0, 20.0, -0.25},  // Q
      {0.0, 24.0, 1.00},     // R
      {70.0, 20.0, -0.35},   // S
      {320.0, 44.0, 0.35},   // T
  }};
  constexpr std::array<double, kNumLeads> scale = {0.60, 1.00, 0.50, 0.35, 0.40, 0.75,
                                                   0.45, 0.60, 0.80, 0.90, 0.85, 0.70};
  BeatTemplate tpl;
  for (int lead = 0; lead < kNumLeads; ++lead) {
    for (int w = 0; w < kNumWaves; ++w) {
      tpl.leads[lead][w] = base[w];
      tpl.leads[lead][w].amplitude_mv *= scale[lead];
    }
  }
  if (cls == DiagnosisClass::kMi) {
    // Inverted T in the inferior leads; deeper S in V3.
    tpl.leads[lead_index("II")][kWaveT].amplitude_mv = -0.15;
    tpl.leads[lead_index("aVF")][kWaveT].amplitude_mv = -0.10;
    tpl.leads[lead_index("III")][kWaveT].amplitude_mv = -0.08;
    tpl.leads[lead_index("V3")][kWaveS].amplitude_mv = -0.45;
  }
  return tpl;
}

std::vector<double> beat_anchors(const BeatTemplate& tpl, int n_beats) {
  std::vector<double> anchors(n_beats);
  double t = 0.4;  // leaves room for the first P wave
  for (int b = 0; b < n_beats; ++b) {
    anchors[b] = t;
    t += tpl.rr_ms[b % tpl.rr_ms.size()] / 1000.0;
  }
  return anchors;
}

double template_value(const BeatTemplate& tpl, const std::vector<double>& r_times_s, int lead, double t_s) {
  double v = 0.0;
  for (const double rt : r_times_s) {
    for (const auto& w : tpl.leads[lead]) {
      if (w.amplitude_mv == 0.0) continue;
      const double dt = t_s - rt - w.center_ms / 1000.0;
      const double sigma = w.width_ms / 1000.0;
      v += w.amplitude_mv * std::exp(-dt * dt / (2.0 * sigma * sigma));
    }
  }
  return v;
}

SynthRecord synthesize(const BeatTemplate& tpl, int n_beats, double fs, uint64_t seed) {
  if (n_beats < 3) throw PreconditionError("synthesize: need at least 3 beats");
  tpl.validate(fs);

  SynthRecord out;
  const auto anchors = beat_anchors(tpl, n_beats);
  const auto n_samples = static_cast<int64_t>(std::lround((anchors.back() + 0.6) * fs));

  out.record.header.record_name = "synth";
  out.record.header.n_signals = kNumLeads;
  out.record.header.sampling_rate = fs;
  out.record.header.n_samples = n_samples;
  for (int i = 0; i < kNumLeads; ++i) {
    SignalSpec spec;
    spec.lead_name = kLeadNames[i];
    spec.gain = 1.0;
    spec.units = "mV";
    out.record.header.signals.push_back(spec);
  }

  Rng rng(seed);
  out.record.signals.assign(kNumLeads, std::vector<double>(n_samples));
  for (int lead = 0; lead < kNumLeads; ++lead) {
    auto& sig = out.record.signals[lead];
    for (int64_t i = 0; i < n_samples; ++i) {
      sig[i] = template_value(tpl, anchors, lead, static_cast<double>(i) / fs);
    }
  }
  if (tpl.noise_mv > 0.0) {
    for (int lead = 0; lead < kNumLeads; ++lead) {
      for (auto& v : out.record.signals[lead]) v += rng.normal(0.0, tpl.noise_mv);
    }
  }

  for (const double a : anchors) out.r_peaks.push_back(static_cast<int64_t>(std::lround(a * fs)));

  // Analytic fiducials for the interior beats.
  out.ground_truth.reference_lead = lead_index("II");
  auto at = [&](double t_s) { return static_cast<int64_t>(std::lround(t_s * fs)); };
  for (int b = 1; b + 1 < n_beats; ++b) {
    BeatFiducials beat;
    beat.beat_index = b - 1;
    beat.r_peak_global = out.r_peaks[b];
    for (int lead = 0; lead < kNumLeads; ++lead) {
      const auto& waves = tpl.leads[lead];
      LeadFiducials f;
      auto place = [&](const WaveComponent& w, Fiducial peak, std::optional<Fiducial> onset,
                       std::optional<Fiducial> offset) {
        if (w.amplitude_mv == 0.0) return;
        const double c = anchors[b] + w.center_ms / 1000.0;
        const double spread = 2.5 * w.width_ms / 1000.0;
        f.set(peak, at(c));
        if (onset) f.set(*onset, at(c - spread));
        if (offset) f.set(*offset, at(c + spread));
      };
      place(waves[kWaveP], kPPeak, kPOnset, kPOffset);
      place(waves[kWaveQ], kQPeak, std::nullopt, std::nullopt);
      place(waves[kWaveR], kRPeak, kROnset, kROffset);
      place(waves[kWaveS], kSPeak, std::nullopt, std::nullopt);
      place(waves[kWaveT], kTPeak, kTOnset, kTOffset);
      beat.leads[lead] = f;
    }
    out.ground_truth.beats.push_back(std::move(beat));
  }
  return out;
}

std::string write_synth_cohort(const std::string& dir, const CohortParams& params) {
  namespace fs = std::filesystem;
  fs::create_directories(fs::path(dir) / "records");

  Rng rng(params.seed);
  std::string manifest = "ecg_id,patient_id,scp_codes,filename\n";
  int next_id = 1;
  for (const DiagnosisClass cls : {DiagnosisClass::kNorm, DiagnosisClass::kMi}) {
    for (int i = 0; i < params.records_per_class; ++i) {
      BeatTemplate tpl = standard_template(cls);
      tpl.noise_mv = params.noise_mv;
      Rng record_rng = rng.fork(static_cast<uint64_t>(next_id));
      for (auto& lead : tpl.leads) {
        for (auto& w : lead) {
          w.amplitude_mv *= 1.0 + params.amplitude_jitter * record_rng.uniform(-1.0, 1.0);
        }
      }
      tpl.rr_ms = {1000.0 * record_rng.uniform(0.85, 1.15)};

      const auto synth = synthesize(tpl, params.beats_per_record, params.fs,
                                    record_rng.next_u64());
      char id[16];
      std::snprintf(id, sizeof(id), "%05d", next_id);
      const std::string rel = "records/" + std::string(id) + ".csv";
      io::write_record_csv((fs::path(dir) / rel).string(), synth.record);

      const std::string code = cls == DiagnosisClass::kNorm ? "NORM" : "IMI";
      manifest += std::string(id) + "," + std::to_string(next_id) + ",\"{'" + code + "': 100.0}\"," + rel + "\n";
      ++next_id;
    }
  }
  const std::string manifest_path = (fs::path(dir) / "manifest.csv").string();
  write_text_file_atomic(manifest_path, manifest);
  return manifest_path;
}

}  // namespace vcce::synth
