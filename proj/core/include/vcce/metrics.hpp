#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vcce/counterfactual.hpp"

namespace vcce::metrics {

struct Prf1 {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

// Zero-denominator cases return 0 by convention.
Prf1 prf1(int64_t tp, int64_t fp, int64_t fn);

enum class AlignmentMode { kAgreement, kMarkedOnly };

// Weighted lead agreement between the clinician's important-lead list and the
// leads carrying counterfactual markings. Weights are 3 for important leads,
// 1 otherwise, over all 12 leads; the result lives in [0, 1].
double alignment_score(const std::vector<std::string>& important_leads,
                       const std::vector<std::string>& marked_leads,
                       AlignmentMode mode = AlignmentMode::kAgreement);

// Visualization validity: sum of the five per-waveform scores, each in 0..5.
int vvs(const std::array<int, 5>& waveform_scores);

// Clinical importance weights for the counterfactual feature set plus the
// model's own gain importances, both keyed by feature name.
struct MetricWeights {
  std::map<std::string, double> clinical;  // 0..24 per feature
  std::map<std::string, double> model_importance;

  static std::map<std::string, double> default_clinical_weights();
  static std::map<std::string, double> clinical_weights_from_csv(const std::string& text);
  static std::string clinical_weights_to_csv(const std::map<std::string, double>& weights);
};

enum class DeviationMode { kRangeNormalized, kRaw };

struct SparsityResult {
  double mean = 0.0;
  double std_dev = 0.0;  // population
  std::vector<double> per_counterfactual;
};

// Importance-weighted sparsity over all counterfactuals: deviations from the
// original (range-normalized by default), weights normalized to sum 1 over
// the varied features. Throws when a varied feature lacks a weight or range.
SparsityResult weighted_sparsity(std::span<const cf::CounterfactualSet> sets,
                                 const std::map<std::string, double>& weights,
                                 DeviationMode mode = DeviationMode::kRangeNormalized);

struct SparsityComparison {
  SparsityResult clinical;
  SparsityResult model;
  // Per-patient quartile summaries for box plots: id -> {min,q1,med,q3,max}.
  std::map<std::string, std::array<double, 5>> clinical_by_patient;
  std::map<std::string, std::array<double, 5>> model_by_patient;

  std::string paired_line() const;  // "clinical 0.19 vs model 0.33"
};

SparsityComparison compare_sparsity(std::span<const cf::CounterfactualSet> sets,
                                    const std::map<std::string, double>& clinical_weights,
                                    const std::map<std::string, double>& model_importances,
                                    const std::vector<std::string>& patient_of_set = {},
                                    DeviationMode mode = DeviationMode::kRangeNormalized);

// One clinician-labeled report.
struct ClinicianLabel {
  std::string record_id;
  std::string tier;  // low | moderate | good
  int wrong_marks = 0;
  std::array<int, 5> waveform_scores{};  // P,Q,R,S,T
  std::vector<std::string> important_leads;
  std::string exclusion;  // empty, or a reason such as "artifact" / "VES"
};

std::vector<ClinicianLabel> clinician_labels_from_csv(const std::string& text);

struct TierSummary {
  int64_t count = 0;
  double vvs_mean = 0.0;
  double vvs_std = 0.0;

  std::string format() const;  // "17, 23.29 ± 1.04"
};

struct InterpretabilityReport {
  std::map<std::string, TierSummary> by_tier;
  std::map<std::string, TierSummary> excluded_by_reason;
};

InterpretabilityReport aggregate_interpretability(const std::vector<ClinicianLabel>& labels);

// Paired-prediction disagreement counts (emitted for information only).
struct McNemarCounts {
  int64_t both_correct = 0;
  int64_t a_only = 0;
  int64_t b_only = 0;
  int64_t both_wrong = 0;
};

McNemarCounts mcnemar_counts(std::span<const int> truth, std::span<const int> pred_a, std::span<const int> pred_b);

}  // namespace vcce::metrics
