#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace vcce::model {

struct TrainParams {
  int n_trees = 300;
  int max_depth = 4;
  double learning_rate = 0.1;
  double min_child_weight = 1.0;  // hessian mass per child
  double lambda = 1.0;            // L2 on leaf weights
  double subsample = 0.8;         // row fraction per tree
  uint64_t seed = 42;

  void validate() const;
};

struct TreeNode {
  int feature = -1;        // -1 marks a leaf
  double threshold = 0.0;  // value < threshold goes left
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf contribution, learning rate already applied

  bool is_leaf() const { return feature < 0; }
};

struct Tree {
  std::vector<TreeNode> nodes;

  double eval(std::span<const double> x) const;
};

// Binary gradient-boosted trees on logistic loss with exact greedy splits.
struct GbdtModel {
  std::vector<Tree> trees;
  TrainParams params;
  double base_score = 0.0;  // log-odds prior
  std::vector<std::string> feature_names;
  std::vector<double> gain_importance;   // normalized, sums to 1 when any split exists
  std::vector<double> imputation_means;  // optional; NaN inputs use these at predict time

  // Probability of class 1 (MI), clamped strictly inside (0, 1).
  double predict_proba(std::span<const double> x) const;
  int predict_class(std::span<const double> x) const { return predict_proba(x) >= 0.5 ? 1 : 0; }

  std::string to_json() const;
  static GbdtModel from_json(const std::string& text);
};

// matrix is row-major n_rows x n_cols; labels in {0, 1}, both classes present;
// no non-finite cells (impute first). Deterministic for a given seed.
GbdtModel train(std::span<const double> matrix, size_t n_cols, std::span<const int> labels,
                const TrainParams& params, const std::vector<std::string>& feature_names);

}  // namespace vcce::model
