#include "vcce/gbdt.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "vcce/errors.hpp"
#include "vcce/rng.hpp"

namespace vcce::model {

using nlohmann::json;

void TrainParams::validate() const {
  if (n_trees < 0) throw PreconditionError("TrainParams: n_trees must be >= 0");
  if (max_depth < 1) throw PreconditionError("TrainParams: max_depth must be >= 1");
  if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
    throw PreconditionError("TrainParams: learning_rate must be in (0, 1]");
  }
  if (!(subsample > 0.0 && subsample <= 1.0)) throw PreconditionError("TrainParams: subsample must be in (0, 1]");
  if (min_child_weight < 0.0) throw PreconditionError("TrainParams: min_child_weight must be >= 0");
  if (lambda < 0.0) throw PreconditionError("TrainParams: lambda must be >= 0");
}

double Tree::eval(std::span<const double> x) const {
  int at = 0;
  while (!nodes[at].is_leaf()) {
    const auto& n = nodes[at];
    at = x[n.feature] < n.threshold ? n.left : n.right;
  }
  return nodes[at].value;
}

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// Strictly inside (0,1): extreme margins otherwise round to exactly 0 or 1.
double clamp_proba(double p) {
  constexpr double lo = 1e-15;
  if (p < lo) return lo;
  if (p > 1.0 - lo) return 1.0 - lo;
  return p;
}

// Splits place rows with value < t on the left; t must sit in (a, b] so both
// sides stay non-empty even when the midpoint rounds onto a.
double split_threshold(double a, double b) {
  const double m = a / 2 + b / 2;
  return m > a ? m : b;
}

struct SplitChoice {
  double gain = 0.0;
  int feature = -1;
  double threshold = 0.0;

  bool better_than(const SplitChoice& o) const {
    if (gain != o.gain) return gain > o.gain;
    if (feature != o.feature) return feature < o.feature;
    return threshold < o.threshold;
  }
};

}  // namespace

GbdtModel train(std::span<const double> matrix, size_t n_cols, std::span<const int> labels,
                const TrainParams& params, const std::vector<std::string>& feature_names) {
  params.validate();
  const size_t n_rows = labels.size();
  if (n_cols == 0 || n_rows == 0 || matrix.size() != n_rows * n_cols) {
    throw PreconditionError("train: matrix shape mismatch");
  }
  if (!feature_names.empty() && feature_names.size() != n_cols) {
    throw PreconditionError("train: feature name count mismatch");
  }
  size_t positives = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw PreconditionError("train: labels must be 0/1");
    positives += static_cast<size_t>(y);
  }
  if (positives == 0 || positives == n_rows) throw PreconditionError("train: both classes must be present");
  for (double v : matrix) {
    if (!std::isfinite(v)) throw PreconditionError("train: non-finite cell; impute before training");
  }

  GbdtModel model;
  model.params = params;
  model.feature_names = feature_names;
  const double prior = static_cast<double>(positives) / static_cast<double>(n_rows);
  model.base_score = std::log(prior / (1.0 - prior));

  // Column-wise row orders, sorted once by (value, row); node scans below
  // stream these in order, so no per-node sorting is needed.
  std::vector<std::vector<uint32_t>> sorted(n_cols);
  for (size_t c = 0; c < n_cols; ++c) {
    auto& ord = sorted[c];
    ord.resize(n_rows);
    for (size_t r = 0; r < n_rows; ++r) ord[r] = static_cast<uint32_t>(r);
    std::sort(ord.begin(), ord.end(), [&](uint32_t a, uint32_t b) {
      const double va = matrix[a * n_cols + c];
      const double vb = matrix[b * n_cols + c];
      return va != vb ? va < vb : a < b;
    });
  }

  std::vector<double> margin(n_rows, model.base_score);
  std::vector<double> grad(n_rows), hess(n_rows);
  std::vector<double> raw_gain(n_cols, 0.0);
  Rng rng(params.seed);

  // Level-wise growth state.
  std::vector<int> node_of(n_rows);

  for (int t = 0; t < params.n_trees; ++t) {
    for (size_t r = 0; r < n_rows; ++r) {
      const double p = sigmoid(margin[r]);
      grad[r] = p - static_cast<double>(labels[r]);
      hess[r] = p * (1.0 - p);
    }

    // Seeded row subsample, without replacement.
    std::fill(node_of.begin(), node_of.end(), -1);
    if (params.subsample >= 1.0) {
      std::fill(node_of.begin(), node_of.end(), 0);
    } else {
      std::vector<uint32_t> rows(n_rows);
      for (size_t r = 0; r < n_rows; ++r) rows[r] = static_cast<uint32_t>(r);
      rng.shuffle(rows);
      const auto take = std::max<size_t>(1, static_cast<size_t>(std::floor(params.subsample * n_rows)));
      for (size_t i = 0; i < take; ++i) node_of[rows[i]] = 0;
    }

    Tree tree;
    tree.nodes.push_back(TreeNode{});
    std::vector<int> level = {0};

    struct NodeTotal {
      double g = 0, h = 0;
    };

    for (int depth = 0; depth < params.max_depth && !level.empty(); ++depth) {
      // Node totals for this level.
      std::vector<NodeTotal> totals(tree.nodes.size());
      for (size_t r = 0; r < n_rows; ++r) {
        const int u = node_of[r];
        if (u >= 0) {
          totals[u].g += grad[r];
          totals[u].h += hess[r];
        }
      }

      std::vector<SplitChoice> best(tree.nodes.size());
      std::vector<double> left_g(tree.nodes.size()), left_h(tree.nodes.size()), prev_val(tree.nodes.size());
      std::vector<bool> has_prev(tree.nodes.size());

      for (size_t c = 0; c < n_cols; ++c) {
        for (int u : level) {
          left_g[u] = left_h[u] = 0.0;
          has_prev[u] = false;
        }
        for (uint32_t r : sorted[c]) {
          const int u = node_of[r];
          if (u < 0) continue;
          const double v = matrix[r * n_cols + c];
          if (has_prev[u] && v > prev_val[u]) {
            const double gl = left_g[u], hl = left_h[u];
            const double gr = totals[u].g - gl, hr = totals[u].h - hl;
            if (hl >= params.min_child_weight && hr >= params.min_child_weight) {
              const double gain = 0.5 * (gl * gl / (hl + params.lambda) + gr * gr / (hr + params.lambda) -
                                         totals[u].g * totals[u].g / (totals[u].h + params.lambda));
              const SplitChoice cand{gain, static_cast<int>(c), split_threshold(prev_val[u], v)};
              if (cand.gain > 0.0 && cand.better_than(best[u])) best[u] = cand;
            }
          }
          left_g[u] += grad[r];
          left_h[u] += hess[r];
          prev_val[u] = v;
          has_prev[u] = true;
        }
      }

      // Materialize the chosen splits; everything else becomes a leaf.
      std::vector<int> next_level;
      std::vector<bool> split_applied(tree.nodes.size(), false);
      for (int u : level) {
        if (best[u].feature < 0) {
          tree.nodes[u].value = -totals[u].g / (totals[u].h + params.lambda) * params.learning_rate;
          continue;
        }
        raw_gain[best[u].feature] += best[u].gain;
        tree.nodes[u].feature = best[u].feature;
        tree.nodes[u].threshold = best[u].threshold;
        tree.nodes[u].left = static_cast<int>(tree.nodes.size());
        tree.nodes[u].right = static_cast<int>(tree.nodes.size() + 1);
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        next_level.push_back(tree.nodes[u].left);
        next_level.push_back(tree.nodes[u].right);
        split_applied[u] = true;
      }
      if (next_level.empty()) break;

      for (size_t r = 0; r < n_rows; ++r) {
        const int u = node_of[r];
        if (u < 0 || u >= static_cast<int>(split_applied.size()) || !split_applied[u]) continue;
        const auto& nd = tree.nodes[u];
        node_of[r] = matrix[r * n_cols + nd.feature] < nd.threshold ? nd.left : nd.right;
      }
      level = std::move(next_level);

      // Depth limit reached: finalize the last level as leaves.
      if (depth + 1 == params.max_depth) {
        std::vector<NodeTotal> leaf_totals(tree.nodes.size());
        for (size_t r = 0; r < n_rows; ++r) {
          const int u = node_of[r];
          if (u >= 0) {
            leaf_totals[u].g += grad[r];
            leaf_totals[u].h += hess[r];
          }
        }
        for (int u : level) {
          tree.nodes[u].value = -leaf_totals[u].g / (leaf_totals[u].h + params.lambda) * params.learning_rate;
        }
      }
    }

    for (size_t r = 0; r < n_rows; ++r) margin[r] += tree.eval(std::span(matrix.data() + r * n_cols, n_cols));
    model.trees.push_back(std::move(tree));
  }

  double total_gain = 0.0;
  for (double g : raw_gain) total_gain += g;
  model.gain_importance.assign(n_cols, 0.0);
  if (total_gain > 0) {
    for (size_t c = 0; c < n_cols; ++c) model.gain_importance[c] = raw_gain[c] / total_gain;
  }
  return model;
}

double GbdtModel::predict_proba(std::span<const double> x) const {
  const size_t n_cols = gain_importance.size();
  if (x.size() != n_cols) {
    throw PreconditionError("predict: expected " + std::to_string(n_cols) + " features, got " +
                            std::to_string(x.size()));
  }
  std::vector<double> filled;
  std::span<const double> input = x;
  for (size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i])) {
      if (imputation_means.size() != n_cols) {
        throw PreconditionError("predict: non-finite input and no imputation means stored");
      }
      filled.assign(x.begin(), x.end());
      for (size_t j = 0; j < filled.size(); ++j) {
        if (!std::isfinite(filled[j])) filled[j] = imputation_means[j];
      }
      input = filled;
      break;
    }
  }
  double z = base_score;
  for (const auto& tree : trees) z += tree.eval(input);
  return clamp_proba(sigmoid(z));
}

std::string GbdtModel::to_json() const {
  json j;
  j["format"] = "vcce-gbdt-v1";
  j["base_score"] = base_score;
  j["params"] = {{"n_trees", params.n_trees},
                 {"max_depth", params.max_depth},
                 {"learning_rate", params.learning_rate},
                 {"min_child_weight", params.min_child_weight},
                 {"lambda", params.lambda},
                 {"subsample", params.subsample},
                 {"seed", params.seed}};
  j["feature_names"] = feature_names;
  j["gain_importance"] = gain_importance;
  j["imputation_means"] = imputation_means;
  json jtrees = json::array();
  for (const auto& tree : trees) {
    json jt = json::array();
    for (const auto& n : tree.nodes) {
      jt.push_back({{"f", n.feature}, {"t", n.threshold}, {"l", n.left}, {"r", n.right}, {"v", n.value}});
    }
    jtrees.push_back(std::move(jt));
  }
  j["trees"] = std::move(jtrees);
  return j.dump(1);
}

GbdtModel GbdtModel::from_json(const std::string& text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || j.value("format", "") != "vcce-gbdt-v1") {
    throw ParseError("model json: unrecognized format");
  }
  GbdtModel m;
  m.base_score = j.at("base_score").get<double>();
  const auto& p = j.at("params");
  m.params.n_trees = p.at("n_trees").get<int>();
  m.params.max_depth = p.at("max_depth").get<int>();
  m.params.learning_rate = p.at("learning_rate").get<double>();
  m.params.min_child_weight = p.at("min_child_weight").get<double>();
  m.params.lambda = p.at("lambda").get<double>();
  m.params.subsample = p.at("subsample").get<double>();
  m.params.seed = p.at("seed").get<uint64_t>();
  m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
  m.gain_importance = j.at("gain_importance").get<std::vector<double>>();
  m.imputation_means = j.at("imputation_means").get<std::vector<double>>();
  for (const auto& jt : j.at("trees")) {
    Tree tree;
    for (const auto& jn : jt) {
      tree.nodes.push_back(TreeNode{jn.at("f").get<int>(), jn.at("t").get<double>(), jn.at("l").get<int>(),
                                    jn.at("r").get<int>(), jn.at("v").get<double>()});
    }
    m.trees.push_back(std::move(tree));
  }
  return m;
}

}  // namespace vcce::model
