#include "vcce/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "vcce/csv.hpp"
#include "vcce/ecg.hpp"
#include "vcce/errors.hpp"
#include "vcce/stats.hpp"
#include "vcce/text.hpp"

namespace vcce::metrics {

Prf1 prf1(int64_t tp, int64_t fp, int64_t fn) {
  if (tp < 0 || fp < 0 || fn < 0) throw PreconditionError("prf1: negative counts");
  Prf1 r;
  r.precision = (tp + fp) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  r.recall = (tp + fn) == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  r.f1 = (r.precision + r.recall) == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

double alignment_score(const std::vector<std::string>& important_leads,
                       const std::vector<std::string>& marked_leads, AlignmentMode mode) {
  auto to_set = [](const std::vector<std::string>& leads) {
    std::set<int> s;
    for (const auto& name : leads) {
      const int i = lead_index(name);
      if (i < 0) throw PreconditionError("alignment_score: unknown lead name '" + name + "'");
      s.insert(i);
    }
    return s;
  };
  const auto important = to_set(important_leads);
  const auto marked = to_set(marked_leads);

  double weight_sum = 0.0;
  double aligned = 0.0;
  for (int i = 0; i < kNumLeads; ++i) {
    const bool imp = important.count(i) > 0;
    const bool mk = marked.count(i) > 0;
    const double w = imp ? 3.0 : 1.0;
    weight_sum += w;
    const bool indicator = mode == AlignmentMode::kAgreement ? imp == mk : mk;
    if (indicator) aligned += w;
  }
  return aligned / std::max(weight_sum, 1.0);
}

int vvs(const std::array<int, 5>& waveform_scores) {
  int total = 0;
  for (int s : waveform_scores) {
    if (s < 0 || s > 5) throw PreconditionError("vvs: waveform score out of range 0..5");
    total += s;
  }
  return total;
}

std::map<std::string, double> MetricWeights::default_clinical_weights() {
  return {
      {"II_R", 24},  {"II_T", 24},        {"V4_R", 18},  {"V3_R", 16},  {"aVF_R", 15}, {"V1_S", 15},
      {"aVR_T", 5},  {"V3_ST", 22},       {"aVF_ST_mean", 23}, {"V1_RS", 6},  {"V1_PS", 0},  {"aVF_QS", 0},
      {"V1_QS", 0},  {"V1_ST", 19},       {"RR_Next", 4},      {"V4_PT", 2},  {"V2_Q", 17},  {"V1_T", 5},
      {"V5_T", 20},  {"aVL_RS", 13},      {"V2_T", 24},        {"V3_T", 24},  {"V4_T", 18},  {"V6_T", 19},
  };
}

std::map<std::string, double> MetricWeights::clinical_weights_from_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  const int f = t.column("feature");
  const int s = t.column("score");
  if (f < 0 || s < 0) throw ParseError("clinical weights csv: need feature,score columns");
  std::map<std::string, double> out;
  for (const auto& row : t.rows) {
    const auto v = parse_double(row[s]);
    if (!v) throw ParseError("clinical weights csv: bad score for " + row[f]);
    if (*v < 0 || *v > 24) throw ParseError("clinical weights csv: score out of 0..24 for " + row[f]);
    out[row[f]] = *v;
  }
  return out;
}

std::string MetricWeights::clinical_weights_to_csv(const std::map<std::string, double>& weights) {
  std::string out = "feature,score\n";
  for (const auto& [name, score] : weights) out += name + "," + format_double(score) + "\n";
  return out;
}

namespace {

// Normalized deviation of one counterfactual cell from its original.
double deviation(const cf::CounterfactualSet& set, size_t feature, double cf_value, DeviationMode mode) {
  const double d = std::abs(cf_value - set.query.original[feature]);
  if (mode == DeviationMode::kRaw) return d;
  const auto& r = set.query.ranges[feature];
  const double width = r.hi - r.lo;
  if (width <= 0.0) return 0.0;  // degenerate range: no scale to deviate on
  return d / width;
}

}  // namespace

SparsityResult weighted_sparsity(std::span<const cf::CounterfactualSet> sets,
                                 const std::map<std::string, double>& weights, DeviationMode mode) {
  SparsityResult out;
  for (const auto& set : sets) {
    // Weight normalization over this query's varied features.
    double weight_sum = 0.0;
    std::vector<double> w(set.query.features_to_vary.size());
    for (size_t i = 0; i < set.query.features_to_vary.size(); ++i) {
      const int f = set.query.features_to_vary[i];
      if (f < 0 || f >= static_cast<int>(set.query.original.size())) {
        throw PreconditionError("weighted_sparsity: bad feature index");
      }
      const std::string name = set.query.name_of(f);
      auto it = weights.find(name);
      if (it == weights.end()) throw PreconditionError("weighted_sparsity: no weight for feature '" + name + "'");
      w[i] = it->second;
      weight_sum += std::abs(it->second);
    }
    if (weight_sum <= 0) throw PreconditionError("weighted_sparsity: weights sum to zero");
    for (auto& v : w) v /= weight_sum;

    for (const auto& item : set.items) {
      double s = 0.0;
      for (size_t i = 0; i < set.query.features_to_vary.size(); ++i) {
        const int f = set.query.features_to_vary[i];
        s += std::abs(deviation(set, f, item.values[f], mode) * w[i]);
      }
      out.per_counterfactual.push_back(s);
    }
  }
  out.mean = mean(out.per_counterfactual);
  out.std_dev = stddev_pop(out.per_counterfactual);
  return out;
}

std::string SparsityComparison::paired_line() const {
  char buf[96];
  std::snprintf(buf, sizeof(buf), "clinical %.2f vs model %.2f", clinical.mean, model.mean);
  return buf;
}

namespace {

std::array<double, 5> five_number(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  return {percentile_sorted(v, 0), percentile_sorted(v, 25), percentile_sorted(v, 50), percentile_sorted(v, 75),
          percentile_sorted(v, 100)};
}

}  // namespace

SparsityComparison compare_sparsity(std::span<const cf::CounterfactualSet> sets,
                                    const std::map<std::string, double>& clinical_weights,
                                    const std::map<std::string, double>& model_importances,
                                    const std::vector<std::string>& patient_of_set, DeviationMode mode) {
  SparsityComparison out;
  out.clinical = weighted_sparsity(sets, clinical_weights, mode);
  out.model = weighted_sparsity(sets, model_importances, mode);

  if (!patient_of_set.empty()) {
    if (patient_of_set.size() != sets.size()) {
      throw PreconditionError("compare_sparsity: patient list does not match set count");
    }
    std::map<std::string, std::vector<double>> clinical_scores, model_scores;
    size_t at = 0;
    for (size_t s = 0; s < sets.size(); ++s) {
      for (size_t i = 0; i < sets[s].items.size(); ++i, ++at) {
        clinical_scores[patient_of_set[s]].push_back(out.clinical.per_counterfactual[at]);
        model_scores[patient_of_set[s]].push_back(out.model.per_counterfactual[at]);
      }
    }
    for (auto& [pid, scores] : clinical_scores) out.clinical_by_patient[pid] = five_number(scores);
    for (auto& [pid, scores] : model_scores) out.model_by_patient[pid] = five_number(scores);
  }
  return out;
}

std::vector<ClinicianLabel> clinician_labels_from_csv(const std::string& text) {
  const CsvTable t = parse_csv(text);
  const int rec = t.column("record_id");
  const int tier = t.column("tier");
  const int wrong = t.column("wrong_marks");
  const std::array<int, 5> wf = {t.column("p"), t.column("q"), t.column("r"), t.column("s"), t.column("t")};
  const int leads = t.column("important_leads");
  const int excl = t.column("exclusion");
  if (rec < 0 || tier < 0 || wrong < 0 || leads < 0 || excl < 0 || wf[0] < 0 || wf[1] < 0 || wf[2] < 0 ||
      wf[3] < 0 || wf[4] < 0) {
    throw ParseError("clinician labels csv: missing required columns");
  }
  static const std::set<std::string> tiers = {"low", "moderate", "good"};
  std::vector<ClinicianLabel> out;
  for (size_t r = 0; r < t.rows.size(); ++r) {
    const auto& row = t.rows[r];
    ClinicianLabel l;
    l.record_id = row[rec];
    l.tier = row[tier];
    if (!tiers.count(l.tier)) {
      throw ParseError("clinician labels csv row " + std::to_string(r + 2) + ": tier must be low/moderate/good");
    }
    l.wrong_marks = static_cast<int>(parse_int(row[wrong]).value_or(0));
    for (int i = 0; i < 5; ++i) {
      const auto v = parse_int(row[wf[i]]);
      if (!v) throw ParseError("clinician labels csv row " + std::to_string(r + 2) + ": bad waveform score");
      l.waveform_scores[i] = static_cast<int>(*v);
    }
    for (const auto& lead : split(row[leads], ';')) {
      const auto name = trim(lead);
      if (!name.empty()) l.important_leads.push_back(name);
    }
    l.exclusion = trim(row[excl]);
    out.push_back(std::move(l));
  }
  return out;
}

std::string TierSummary::format() const {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%lld, %.2f ± %.2f", static_cast<long long>(count), vvs_mean, vvs_std);
  return buf;
}

InterpretabilityReport aggregate_interpretability(const std::vector<ClinicianLabel>& labels) {
  std::map<std::string, std::vector<double>> tier_scores, excluded_scores;
  for (const auto& l : labels) {
    const double score = vvs(l.waveform_scores);
    if (!l.exclusion.empty()) {
      excluded_scores[l.exclusion].push_back(score);
    } else {
      tier_scores[l.tier].push_back(score);
    }
  }
  InterpretabilityReport report;
  auto summarize = [](const std::vector<double>& scores) {
    TierSummary s;
    s.count = static_cast<int64_t>(scores.size());
    s.vvs_mean = mean(scores);
    s.vvs_std = stddev_pop(scores);
    return s;
  };
  for (const auto& [tier, scores] : tier_scores) report.by_tier[tier] = summarize(scores);
  for (const auto& [reason, scores] : excluded_scores) report.excluded_by_reason[reason] = summarize(scores);
  return report;
}

McNemarCounts mcnemar_counts(std::span<const int> truth, std::span<const int> pred_a,
                             std::span<const int> pred_b) {
  if (truth.size() != pred_a.size() || truth.size() != pred_b.size()) {
    throw PreconditionError("mcnemar_counts: length mismatch");
  }
  McNemarCounts c;
  for (size_t i = 0; i < truth.size(); ++i) {
    const bool a = pred_a[i] == truth[i];
    const bool b = pred_b[i] == truth[i];
    if (a && b) ++c.both_correct;
    else if (a) ++c.a_only;
    else if (b) ++c.b_only;
    else ++c.both_wrong;
  }
  return c;
}

}  // namespace vcce::metrics
