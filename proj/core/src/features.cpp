#include "vcce/features.hpp"

#include <cmath>
#include <limits>

#include "vcce/csv.hpp"
#include "vcce/errors.hpp"
#include "vcce/stats.hpp"
#include "vcce/text.hpp"

namespace vcce::feat {

namespace {

// Duration between two fiducials in seconds; NaN if either is undetected.
double span_s(const LeadFiducials& f, Fiducial from, Fiducial to, double fs) {
  const auto a = f.get(from);
  const auto b = f.get(to);
  if (!a || !b) return kMissing;
  return static_cast<double>(*b - *a) / fs;
}

}  // namespace

std::array<double, kNumTemporal> extract_temporal(const LeadFiducials& reference, int64_t rr_prev_samples,
                                                  int64_t rr_next_samples, double fs) {
  std::array<double, kNumTemporal> out;
  out.fill(kMissing);
  const double rr_prev = static_cast<double>(rr_prev_samples) / fs;
  const double rr_next = static_cast<double>(rr_next_samples) / fs;

  out[static_cast<int>(TemporalKind::kRrPrev)] = rr_prev;
  out[static_cast<int>(TemporalKind::kRrNext)] = rr_next;
  if (rr_prev > 0) out[static_cast<int>(TemporalKind::kRrRate)] = rr_next / rr_prev;

  out[static_cast<int>(TemporalKind::kPrInterval)] = span_s(reference, kPOnset, kROnset, fs);
  out[static_cast<int>(TemporalKind::kPrSegment)] = span_s(reference, kPOffset, kROnset, fs);
  out[static_cast<int>(TemporalKind::kQrs)] = span_s(reference, kROnset, kROffset, fs);
  out[static_cast<int>(TemporalKind::kPWave)] = span_s(reference, kPOnset, kPOffset, fs);
  out[static_cast<int>(TemporalKind::kTWave)] = span_s(reference, kTOnset, kTOffset, fs);
  out[static_cast<int>(TemporalKind::kTLeft)] = span_s(reference, kTOnset, kTPeak, fs);

  const double qt = span_s(reference, kROnset, kTOffset, fs);
  out[static_cast<int>(TemporalKind::kQt)] = qt;
  if (!std::isnan(qt) && rr_prev > 0) {
    out[static_cast<int>(TemporalKind::kQtc)] = qt / std::sqrt(rr_prev);  // Bazett, previous interval
  }
  out[static_cast<int>(TemporalKind::kSt)] = span_s(reference, kROffset, kTOnset, fs);
  out[static_cast<int>(TemporalKind::kPt)] = span_s(reference, kPOnset, kTOffset, fs);
  // S_offset is identified with R_offset; see the delineation ordering model.
  out[static_cast<int>(TemporalKind::kPs)] = span_s(reference, kPOnset, kROffset, fs);
  return out;
}

std::array<double, kNumAmplitude> extract_amplitudes(const std::vector<double>& lead_signal,
                                                     const LeadFiducials& fiducials) {
  std::array<double, kNumAmplitude> out;
  out.fill(kMissing);

  auto amp = [&](Fiducial f) -> double {
    const auto i = fiducials.get(f);
    if (!i || *i < 0 || *i >= static_cast<int64_t>(lead_signal.size())) return kMissing;
    return lead_signal[*i];
  };
  const double r = amp(kRPeak);
  const double p = amp(kPPeak);
  const double q = amp(kQPeak);
  const double s = amp(kSPeak);
  const double t = amp(kTPeak);

  out[static_cast<int>(AmplitudeKind::kR)] = r;
  out[static_cast<int>(AmplitudeKind::kP)] = p;
  out[static_cast<int>(AmplitudeKind::kQ)] = q;
  out[static_cast<int>(AmplitudeKind::kS)] = s;
  out[static_cast<int>(AmplitudeKind::kT)] = t;
  out[static_cast<int>(AmplitudeKind::kPq)] = p - q;
  out[static_cast<int>(AmplitudeKind::kQr)] = q - r;
  out[static_cast<int>(AmplitudeKind::kRs)] = r - s;
  out[static_cast<int>(AmplitudeKind::kSt)] = s - t;
  out[static_cast<int>(AmplitudeKind::kPs)] = p - s;
  out[static_cast<int>(AmplitudeKind::kPt)] = p - t;
  out[static_cast<int>(AmplitudeKind::kQs)] = q - s;
  out[static_cast<int>(AmplitudeKind::kQt)] = q - t;

  const auto r_off = fiducials.get(kROffset);
  const auto t_on = fiducials.get(kTOnset);
  if (r_off && t_on && *r_off < *t_on) {
    const std::span<const double> seg(lead_signal.data() + *r_off, static_cast<size_t>(*t_on - *r_off));
    out[static_cast<int>(AmplitudeKind::kStMean)] = mean(seg);
    out[static_cast<int>(AmplitudeKind::kStStd)] = stddev_pop(seg);
  }
  return out;
}

FeatureMatrix build_feature_matrix(const std::vector<RecordFeatureInput>& records) {
  FeatureMatrix m;
  m.names = feature_registry();
  const size_t cols = m.names.size();
  for (const auto& rec : records) {
    const auto& fs = rec.fiducials->beats;
    for (size_t b = 0; b < fs.size(); ++b) {
      const auto& beat = fs[b];
      const size_t peak_pos = static_cast<size_t>(beat.beat_index) + 1;  // retained beats skip the first R
      const int64_t rr_prev = rec.r_peaks[peak_pos] - rec.r_peaks[peak_pos - 1];
      const int64_t rr_next = rec.r_peaks[peak_pos + 1] - rec.r_peaks[peak_pos];

      std::vector<double> row(cols, kMissing);
      const auto temporal = extract_temporal(beat.leads[rec.fiducials->reference_lead], rr_prev, rr_next,
                                             rec.denoised->fs());
      for (int i = 0; i < kNumTemporal; ++i) row[i] = temporal[i];
      for (int lead = 0; lead < kNumLeads; ++lead) {
        const auto amps = extract_amplitudes(rec.denoised->signals[lead], beat.leads[lead]);
        for (int i = 0; i < kNumAmplitude; ++i) row[kNumTemporal + lead * kNumAmplitude + i] = amps[i];
      }
      m.values.insert(m.values.end(), row.begin(), row.end());
      m.labels.push_back(rec.label);
      m.splits.push_back(rec.split);
      m.provenance.push_back({rec.record_id, beat.beat_index});
    }
  }
  return m;
}

std::vector<double> imputation_means(const FeatureMatrix& m) {
  const size_t cols = m.n_cols();
  std::vector<double> sums(cols, 0.0);
  std::vector<size_t> counts(cols, 0);
  bool any_train = false;
  for (const auto& s : m.splits) {
    if (s == "train") {
      any_train = true;
      break;
    }
  }
  for (size_t r = 0; r < m.n_rows(); ++r) {
    if (any_train && m.splits[r] != "train") continue;
    const double* row = m.row(r);
    for (size_t c = 0; c < cols; ++c) {
      if (std::isfinite(row[c])) {
        sums[c] += row[c];
        ++counts[c];
      }
    }
  }
  std::vector<double> means(cols, 0.0);
  for (size_t c = 0; c < cols; ++c) {
    if (counts[c]) means[c] = sums[c] / static_cast<double>(counts[c]);
  }
  return means;
}

void impute(FeatureMatrix& m, const std::vector<double>& means) {
  if (means.size() != m.n_cols()) throw PreconditionError("impute: means length mismatch");
  for (size_t r = 0; r < m.n_rows(); ++r) {
    double* row = m.row(r);
    for (size_t c = 0; c < m.n_cols(); ++c) {
      if (!std::isfinite(row[c])) row[c] = means[c];
    }
  }
}

std::string feature_matrix_to_csv(const FeatureMatrix& m) {
  std::string out = "record_id,beat,label,split";
  for (const auto& n : m.names) {
    out += ',';
    out += n;
  }
  out += '\n';
  for (size_t r = 0; r < m.n_rows(); ++r) {
    out += csv_escape(m.provenance[r].record_id);
    out += ',';
    out += std::to_string(m.provenance[r].beat_index);
    out += ',';
    out += std::to_string(m.labels[r]);
    out += ',';
    out += m.splits[r];
    const double* row = m.row(r);
    for (size_t c = 0; c < m.n_cols(); ++c) {
      out += ',';
      out += format_double(row[c]);
    }
    out += '\n';
  }
  return out;
}

FeatureMatrix feature_matrix_from_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  if (t.header.size() < 5) throw ParseError("feature matrix csv: too few columns");
  FeatureMatrix m;
  m.names.assign(t.header.begin() + 4, t.header.end());
  const size_t cols = m.names.size();
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    if (row.size() != cols + 4) {
      throw ParseError("feature matrix csv row " + std::to_string(r + 2) + ": wrong cell count");
    }
    m.provenance.push_back({row[0], static_cast<int>(parse_int(row[1]).value_or(0))});
    m.labels.push_back(static_cast<int>(parse_int(row[2]).value_or(0)));
    m.splits.push_back(row[3]);
    for (size_t c = 0; c < cols; ++c) {
      const auto& cell = row[4 + c];
      if (cell.empty()) {
        m.values.push_back(kMissing);
      } else {
        const auto v = parse_double(cell);
        if (!v) throw ParseError("feature matrix csv row " + std::to_string(r + 2) + ": bad number '" + cell + "'");
        m.values.push_back(*v);
      }
    }
  }
  return m;
}

}  // namespace vcce::feat
