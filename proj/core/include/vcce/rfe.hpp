#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vcce/gbdt.hpp"

namespace vcce::model {

struct RfeResult {
  // Rank per input feature: survivors get 1; eliminated features rank by
  // elimination order, later elimination = better (lower) rank.
  std::vector<int> ranks;
  // Surviving feature indices, sorted by the final model's gain importance,
  // descending (ties by lower index).
  std::vector<int> survivors;
  std::vector<double> survivor_importance;
};

// Iteratively trains and drops the lowest-importance feature (ties eliminate
// the higher index first) until `keep` remain. `step` > 1 drops several per
// round, which trades fidelity for speed on wide matrices.
RfeResult rfe_rank(std::span<const double> matrix, size_t n_cols, std::span<const int> labels,
                   const TrainParams& params, int keep, const std::vector<std::string>& feature_names,
                   int step = 1);

struct EvalSplit {
  std::vector<uint32_t> train_rows;
  std::vector<uint32_t> test_rows;
};

struct CurvePoint {
  int feature_count = 0;
  double f1 = 0.0;
};

// Trains on the top-k prefixes of `ordered_features` (importance descending)
// and records held-out F1 for k = 1..len.
std::vector<CurvePoint> incremental_curve(std::span<const double> matrix, size_t n_cols,
                                          std::span<const int> labels, const std::vector<int>& ordered_features,
                                          const EvalSplit& split, const TrainParams& params,
                                          const std::vector<std::string>& feature_names);

// Smallest k whose F1 is within `tolerance` of the curve maximum.
int tolerance_minimal_k(const std::vector<CurvePoint>& curve, double tolerance);

// Gathers a column subset into a dense row-major matrix.
std::vector<double> gather_columns(std::span<const double> matrix, size_t n_cols,
                                   const std::vector<int>& features, std::span<const uint32_t> rows);

double f1_score(std::span<const int> truth, std::span<const int> predicted);

}  // namespace vcce::model
