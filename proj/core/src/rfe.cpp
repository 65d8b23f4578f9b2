#include "vcce/rfe.hpp"

#include <algorithm>
#include <numeric>

#include "vcce/errors.hpp"

namespace vcce::model {

std::vector<double> gather_columns(std::span<const double> matrix, size_t n_cols,
                                   const std::vector<int>& features, std::span<const uint32_t> rows) {
  std::vector<double> out;
  out.reserve(rows.size() * features.size());
  for (uint32_t r : rows) {
    const double* row = matrix.data() + static_cast<size_t>(r) * n_cols;
    for (int f : features) out.push_back(row[f]);
  }
  return out;
}

double f1_score(std::span<const int> truth, std::span<const int> predicted) {
  int tp = 0, fp = 0, fn = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (predicted[i] == 1 && truth[i] == 1) ++tp;
    else if (predicted[i] == 1 && truth[i] == 0) ++fp;
    else if (predicted[i] == 0 && truth[i] == 1) ++fn;
  }
  const double denom = 2.0 * tp + fp + fn;
  return denom == 0.0 ? 0.0 : 2.0 * tp / denom;
}

RfeResult rfe_rank(std::span<const double> matrix, size_t n_cols, std::span<const int> labels,
                   const TrainParams& params, int keep, const std::vector<std::string>& feature_names,
                   int step) {
  if (keep <= 0) throw PreconditionError("rfe_rank: keep must be > 0");
  if (static_cast<size_t>(keep) >= n_cols) throw PreconditionError("rfe_rank: keep must be < feature count");
  if (step < 1) throw PreconditionError("rfe_rank: step must be >= 1");

  std::vector<int> active(n_cols);
  std::iota(active.begin(), active.end(), 0);
  std::vector<uint32_t> all_rows(labels.size());
  std::iota(all_rows.begin(), all_rows.end(), 0);

  RfeResult result;
  result.ranks.assign(n_cols, 1);
  int next_rank = static_cast<int>(n_cols) - keep + 1;  // first elimination gets the worst rank

  GbdtModel last_model;
  while (static_cast<int>(active.size()) > keep) {
    std::vector<std::string> sub_names;
    sub_names.reserve(active.size());
    for (int f : active) sub_names.push_back(feature_names.empty() ? std::to_string(f) : feature_names[f]);
    const auto sub = gather_columns(matrix, n_cols, active, all_rows);
    last_model = train(sub, active.size(), labels, params, sub_names);

    const int drops = std::min<int>(step, static_cast<int>(active.size()) - keep);
    for (int d = 0; d < drops; ++d) {
      // Lowest importance goes first; ties eliminate the higher feature index.
      size_t worst = 0;
      for (size_t i = 1; i < active.size(); ++i) {
        const double wi = last_model.gain_importance[i];
        const double ww = last_model.gain_importance[worst];
        if (wi < ww || (wi == ww && active[i] > active[worst])) worst = i;
      }
      result.ranks[active[worst]] = next_rank--;
      active.erase(active.begin() + static_cast<long>(worst));
      last_model.gain_importance.erase(last_model.gain_importance.begin() + static_cast<long>(worst));
    }
  }

  // Final model over the survivors orders them by importance.
  std::vector<std::string> sub_names;
  for (int f : active) sub_names.push_back(feature_names.empty() ? std::to_string(f) : feature_names[f]);
  const auto sub = gather_columns(matrix, n_cols, active, all_rows);
  const GbdtModel final_model = train(sub, active.size(), labels, params, sub_names);

  std::vector<size_t> order(active.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    const double ia = final_model.gain_importance[a];
    const double ib = final_model.gain_importance[b];
    return ia != ib ? ia > ib : active[a] < active[b];
  });
  for (size_t i : order) {
    result.survivors.push_back(active[i]);
    result.survivor_importance.push_back(final_model.gain_importance[i]);
  }
  return result;
}

std::vector<CurvePoint> incremental_curve(std::span<const double> matrix, size_t n_cols,
                                          std::span<const int> labels, const std::vector<int>& ordered_features,
                                          const EvalSplit& split, const TrainParams& params,
                                          const std::vector<std::string>& feature_names) {
  std::vector<CurvePoint> curve;
  std::vector<int> train_labels, test_labels;
  for (uint32_t r : split.train_rows) train_labels.push_back(labels[r]);
  for (uint32_t r : split.test_rows) test_labels.push_back(labels[r]);

  for (size_t k = 1; k <= ordered_features.size(); ++k) {
    const std::vector<int> top(ordered_features.begin(), ordered_features.begin() + static_cast<long>(k));
    std::vector<std::string> sub_names;
    for (int f : top) sub_names.push_back(feature_names.empty() ? std::to_string(f) : feature_names[f]);
    const auto train_sub = gather_columns(matrix, n_cols, top, split.train_rows);
    const auto model = train(train_sub, k, train_labels, params, sub_names);

    const auto test_sub = gather_columns(matrix, n_cols, top, split.test_rows);
    std::vector<int> predicted(split.test_rows.size());
    for (size_t i = 0; i < split.test_rows.size(); ++i) {
      predicted[i] = model.predict_class(std::span(test_sub.data() + i * k, k));
    }
    curve.push_back({static_cast<int>(k), f1_score(test_labels, predicted)});
  }
  return curve;
}

int tolerance_minimal_k(const std::vector<CurvePoint>& curve, double tolerance) {
  double best = 0.0;
  for (const auto& p : curve) best = std::max(best, p.f1);
  for (const auto& p : curve) {
    if (p.f1 >= best - tolerance) return p.feature_count;
  }
  return curve.empty() ? 0 : curve.back().feature_count;
}

}  // namespace vcce::model
