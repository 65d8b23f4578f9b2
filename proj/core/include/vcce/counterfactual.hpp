#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "vcce/gbdt.hpp"

namespace vcce::cf {

struct FeatureRange {
  double lo = 0.0;
  double hi = 0.0;
  double mad = 1e-6;
};

// [p1, p99] bounds plus the median absolute deviation per feature, from the
// training matrix. Constant columns degenerate to a point range with the MAD
// floored at 1e-6.
std::vector<FeatureRange> derive_ranges(std::span<const double> matrix, size_t n_cols);

struct CounterfactualQuery {
  std::vector<double> original;  // in the model's feature space
  int target_class = 1;
  int k = 3;
  std::vector<int> features_to_vary;      // indices into the model's features
  std::vector<FeatureRange> ranges;       // one per model feature
  std::vector<std::string> feature_names; // one per model feature

  std::string name_of(int feature) const {
    return feature < static_cast<int>(feature_names.size()) ? feature_names[feature]
                                                            : "f" + std::to_string(feature);
  }
};

// Builds a query whose ranges are expanded (when needed) to contain the
// original values, so range containment holds for untouched features too.
CounterfactualQuery make_query(std::vector<double> original, int target_class, int k,
                               std::vector<FeatureRange> ranges, std::vector<int> features_to_vary = {},
                               std::vector<std::string> feature_names = {});

struct SearchParams {
  int population = 120;
  int max_generations = 200;
  int stable_generations = 10;  // stop once k valid and unchanged this long
  double margin = 0.05;         // validity needs p_target >= 0.5 + margin
  double w_proximity = 0.1;
  double w_diversity = 0.2;
  double init_rate = 0.3;       // per-feature chance of a random gene at init
  double crossover_rate = 0.7;
  double mutation_rate = 0.9;
  bool sparsify = true;         // greedy post-pass reverting needless changes
  uint64_t seed = 0;
};

struct CounterfactualItem {
  std::vector<double> values;
  double p_target = 0.0;
  double proximity = 0.0;  // MAD-normalized L1 distance to the original
  int sparsity_count = 0;
  std::map<std::string, std::pair<double, double>> changed;  // name -> (old, new)
};

struct CounterfactualSet {
  CounterfactualQuery query;
  std::vector<CounterfactualItem> items;
};

// Genetic search for k valid, mutually distinct counterfactuals. Throws when
// the original already belongs to the target class, and when no valid
// counterfactual is found within the generation budget (the message carries
// the best probability achieved).
CounterfactualSet generate(const model::GbdtModel& gbdt, const CounterfactualQuery& query,
                           const SearchParams& params);

struct AlterationStats {
  std::vector<std::string> feature_names;
  std::vector<int64_t> change_counts;  // aligned with feature_names
  int64_t total_counterfactuals = 0;
  // (name, count) sorted by count descending, ties by feature order.
  std::vector<std::pair<std::string, int64_t>> ranking;

  std::vector<std::pair<std::string, int64_t>> top(size_t n) const;
};

AlterationStats alteration_stats(std::span<const CounterfactualSet> sets);

struct CorrectlyClassified {
  std::vector<uint32_t> rows;  // row indices the model gets right
  int64_t n_correct = 0;
  int64_t n_total = 0;

  std::string ratio() const;  // "45/50"
};

CorrectlyClassified filter_correct(const model::GbdtModel& gbdt, std::span<const double> matrix, size_t n_cols,
                                   std::span<const int> labels);

}  // namespace vcce::cf
