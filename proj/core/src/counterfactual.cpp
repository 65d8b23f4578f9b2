#include "vcce/counterfactual.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vcce/errors.hpp"
#include "vcce/rng.hpp"
#include "vcce/stats.hpp"
#include "vcce/text.hpp"

namespace vcce::cf {

std::vector<FeatureRange> derive_ranges(std::span<const double> matrix, size_t n_cols) {
  if (n_cols == 0 || matrix.size() % n_cols != 0) throw PreconditionError("derive_ranges: matrix shape mismatch");
  const size_t n_rows = matrix.size() / n_cols;
  if (n_rows == 0) throw PreconditionError("derive_ranges: empty matrix");
  std::vector<FeatureRange> ranges(n_cols);
  std::vector<double> col(n_rows);
  for (size_t c = 0; c < n_cols; ++c) {
    for (size_t r = 0; r < n_rows; ++r) col[r] = matrix[r * n_cols + c];
    std::sort(col.begin(), col.end());
    FeatureRange fr;
    fr.lo = percentile_sorted(col, 1.0);
    fr.hi = percentile_sorted(col, 99.0);
    fr.mad = std::max(mad(col), 1e-6);
    ranges[c] = fr;
  }
  return ranges;
}

CounterfactualQuery make_query(std::vector<double> original, int target_class, int k,
                               std::vector<FeatureRange> ranges, std::vector<int> features_to_vary,
                               std::vector<std::string> feature_names) {
  if (original.size() != ranges.size()) throw PreconditionError("make_query: original/ranges length mismatch");
  if (k < 1) throw PreconditionError("make_query: k must be >= 1");
  CounterfactualQuery q;
  for (size_t i = 0; i < ranges.size(); ++i) {
    ranges[i].lo = std::min(ranges[i].lo, original[i]);
    ranges[i].hi = std::max(ranges[i].hi, original[i]);
  }
  q.original = std::move(original);
  q.target_class = target_class;
  q.k = k;
  q.ranges = std::move(ranges);
  q.feature_names = std::move(feature_names);
  if (features_to_vary.empty()) {
    q.features_to_vary.resize(q.original.size());
    std::iota(q.features_to_vary.begin(), q.features_to_vary.end(), 0);
  } else {
    q.features_to_vary = std::move(features_to_vary);
  }
  return q;
}

namespace {

double target_proba(const model::GbdtModel& gbdt, std::span<const double> x, int target) {
  const double p = gbdt.predict_proba(x);
  return target == 1 ? p : 1.0 - p;
}

struct Search {
  const model::GbdtModel& gbdt;
  const CounterfactualQuery& q;
  const SearchParams& p;
  Rng rng;

  std::vector<std::vector<double>> population;
  std::vector<double> p_target;       // per individual
  std::vector<double> fitness;        // lower is better
  std::vector<std::vector<double>> accepted;
  std::vector<double> accepted_prox;
  double best_p_seen = 0.0;

  Search(const model::GbdtModel& g, const CounterfactualQuery& query, const SearchParams& params)
      : gbdt(g), q(query), p(params), rng(params.seed) {}

  double proximity(std::span<const double> x) const {
    double d = 0;
    for (int f : q.features_to_vary) d += std::abs(x[f] - q.original[f]) / q.ranges[f].mad;
    return d;
  }

  bool is_valid(double pt) const { return pt >= 0.5 + p.margin; }

  void mutate(std::vector<double>& x) {
    const int f = q.features_to_vary[rng.index(q.features_to_vary.size())];
    const auto& r = q.ranges[f];
    const double roll = rng.uniform01();
    if (roll < 1.0 / 3.0) {
      x[f] = q.original[f];  // revert: the only move that restores exact sparsity
    } else if (roll < 2.0 / 3.0) {
      x[f] = rng.uniform(r.lo, r.hi);
    } else {
      const double width = r.hi - r.lo;
      x[f] = std::clamp(x[f] + rng.normal(0.0, 0.1 * std::max(width, 1e-12)), r.lo, r.hi);
    }
  }

  void init_population() {
    population.assign(p.population, q.original);
    for (auto& ind : population) {
      bool any = false;
      for (int f : q.features_to_vary) {
        if (rng.bernoulli(p.init_rate)) {
          ind[f] = rng.uniform(q.ranges[f].lo, q.ranges[f].hi);
          any = true;
        }
      }
      if (!any) mutate(ind);
    }
  }

  void evaluate() {
    p_target.resize(population.size());
    fitness.resize(population.size());
    for (size_t i = 0; i < population.size(); ++i) {
      const double pt = target_proba(gbdt, population[i], q.target_class);
      p_target[i] = pt;
      best_p_seen = std::max(best_p_seen, pt);
      const double hinge = std::max(0.0, 0.5 + p.margin - pt);
      const double prox = proximity(population[i]) / static_cast<double>(q.features_to_vary.size());
      double div_term = 0.0;
      if (!accepted.empty()) {
        double min_d = std::numeric_limits<double>::infinity();
        for (const auto& a : accepted) {
          double d = 0;
          for (int f : q.features_to_vary) d += std::abs(population[i][f] - a[f]) / q.ranges[f].mad;
          min_d = std::min(min_d, d / static_cast<double>(q.features_to_vary.size()));
        }
        div_term = -min_d;
      }
      fitness[i] = hinge + p.w_proximity * prox + p.w_diversity * div_term;
    }
  }

  bool identical(std::span<const double> a, std::span<const double> b) const {
    for (int f : q.features_to_vary) {
      if (a[f] != b[f]) return false;
    }
    return true;
  }

  // Keeps the k lowest-proximity valid individuals seen so far, mutually
  // distinct. Returns true when the accepted set changed.
  bool collect_valid() {
    struct Cand {
      size_t idx;
      double prox;
    };
    std::vector<Cand> cands;
    for (size_t i = 0; i < population.size(); ++i) {
      if (is_valid(p_target[i])) cands.push_back({i, proximity(population[i])});
    }
    std::sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) {
      return a.prox != b.prox ? a.prox < b.prox : a.idx < b.idx;
    });
    bool changed = false;
    for (const auto& c : cands) {
      const auto& x = population[c.idx];
      bool dup = false;
      for (const auto& a : accepted) {
        if (identical(x, a)) {
          dup = true;
          break;
        }
      }
      if (dup) continue;
      if (static_cast<int>(accepted.size()) < q.k) {
        accepted.push_back(x);
        accepted_prox.push_back(c.prox);
        changed = true;
      } else {
        size_t worst = 0;
        for (size_t a = 1; a < accepted.size(); ++a) {
          if (accepted_prox[a] > accepted_prox[worst]) worst = a;
        }
        if (c.prox < accepted_prox[worst]) {
          accepted[worst] = x;
          accepted_prox[worst] = c.prox;
          changed = true;
        }
      }
    }
    return changed;
  }

  size_t tournament() {
    size_t best = rng.index(population.size());
    for (int i = 1; i < 3; ++i) {
      const size_t c = rng.index(population.size());
      if (fitness[c] < fitness[best]) best = c;
    }
    return best;
  }

  void next_generation() {
    // Elitism: the 4 fittest individuals survive unchanged.
    std::vector<size_t> order(population.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
      return fitness[a] != fitness[b] ? fitness[a] < fitness[b] : a < b;
    });
    std::vector<std::vector<double>> next;
    next.reserve(population.size());
    for (size_t e = 0; e < std::min<size_t>(4, order.size()); ++e) next.push_back(population[order[e]]);
    while (next.size() < population.size()) {
      std::vector<double> child = population[tournament()];
      if (rng.bernoulli(p.crossover_rate)) {
        const auto& other = population[tournament()];
        for (int f : q.features_to_vary) {
          if (rng.bernoulli(0.5)) child[f] = other[f];
        }
      }
      if (rng.bernoulli(p.mutation_rate)) mutate(child);
      next.push_back(std::move(child));
    }
    population = std::move(next);
  }

  // Reverts changed features (smallest normalized change first) while the
  // result stays valid, distinct from siblings and different from the original.
  void sparsify_accepted() {
    for (size_t a = 0; a < accepted.size(); ++a) {
      auto& x = accepted[a];
      struct Delta {
        int f;
        double size;
      };
      std::vector<Delta> deltas;
      for (int f : q.features_to_vary) {
        if (x[f] != q.original[f]) deltas.push_back({f, std::abs(x[f] - q.original[f]) / q.ranges[f].mad});
      }
      std::sort(deltas.begin(), deltas.end(),
                [](const Delta& l, const Delta& r) { return l.size != r.size ? l.size < r.size : l.f < r.f; });
      for (const auto& d : deltas) {
        if (deltas.size() <= 1) break;
        std::vector<double> trial = x;
        trial[d.f] = q.original[d.f];
        if (identical(trial, q.original)) continue;
        if (!is_valid(target_proba(gbdt, trial, q.target_class))) continue;
        bool dup = false;
        for (size_t b = 0; b < accepted.size(); ++b) {
          if (b != a && identical(trial, accepted[b])) {
            dup = true;
            break;
          }
        }
        if (dup) continue;
        x = std::move(trial);
      }
      accepted_prox[a] = proximity(x);
    }
  }
};

}  // namespace

CounterfactualSet generate(const model::GbdtModel& gbdt, const CounterfactualQuery& query,
                           const SearchParams& params) {
  if (query.k < 1) throw PreconditionError("generate: k must be >= 1");
  if (query.original.size() != query.ranges.size()) {
    throw PreconditionError("generate: original/ranges length mismatch");
  }
  if (query.features_to_vary.empty()) throw PreconditionError("generate: features_to_vary is empty");
  for (int f : query.features_to_vary) {
    if (f < 0 || f >= static_cast<int>(query.original.size())) {
      throw PreconditionError("generate: features_to_vary index out of bounds");
    }
    if (!std::isfinite(query.ranges[f].lo) || !std::isfinite(query.ranges[f].hi) ||
        query.ranges[f].lo > query.ranges[f].hi) {
      throw PreconditionError("generate: invalid range for feature " + std::to_string(f));
    }
  }
  const double p_orig = target_proba(gbdt, query.original, query.target_class);
  if (p_orig >= 0.5) throw PreconditionError("query already classified as target");

  Search search(gbdt, query, params);
  search.init_population();
  int last_change = 0;
  for (int gen = 0; gen < params.max_generations; ++gen) {
    search.evaluate();
    if (search.collect_valid()) last_change = gen;
    if (static_cast<int>(search.accepted.size()) >= query.k && gen - last_change >= params.stable_generations) {
      break;
    }
    search.next_generation();
  }
  if (search.accepted.empty()) {
    throw Error("no valid counterfactual within budget; best p_target=" + format_double(search.best_p_seen));
  }
  if (params.sparsify) search.sparsify_accepted();

  // Deterministic output order: closest first.
  std::vector<size_t> order(search.accepted.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return search.accepted_prox[a] != search.accepted_prox[b] ? search.accepted_prox[a] < search.accepted_prox[b]
                                                              : a < b;
  });

  CounterfactualSet out;
  out.query = query;
  for (size_t i : order) {
    const auto& x = search.accepted[i];
    CounterfactualItem item;
    item.values = x;
    item.p_target = target_proba(gbdt, x, query.target_class);
    item.proximity = search.accepted_prox[i];
    for (size_t f = 0; f < x.size(); ++f) {
      if (x[f] != query.original[f]) {
        std::string name = query.name_of(static_cast<int>(f));
        if (query.feature_names.empty() && f < gbdt.feature_names.size()) name = gbdt.feature_names[f];
        item.changed[name] = {query.original[f], x[f]};
        ++item.sparsity_count;
      }
    }
    out.items.push_back(std::move(item));
  }
  return out;
}

std::vector<std::pair<std::string, int64_t>> AlterationStats::top(size_t n) const {
  std::vector<std::pair<std::string, int64_t>> out;
  for (size_t i = 0; i < ranking.size() && i < n; ++i) out.push_back(ranking[i]);
  return out;
}

AlterationStats alteration_stats(std::span<const CounterfactualSet> sets) {
  AlterationStats stats;
  std::map<std::string, size_t> index;
  auto slot = [&](const std::string& name) {
    auto it = index.find(name);
    if (it != index.end()) return it->second;
    const size_t i = stats.feature_names.size();
    index[name] = i;
    stats.feature_names.push_back(name);
    stats.change_counts.push_back(0);
    return i;
  };
  for (const auto& set : sets) {
    for (const auto& item : set.items) {
      ++stats.total_counterfactuals;
      for (const auto& [name, delta] : item.changed) ++stats.change_counts[slot(name)];
    }
  }
  std::vector<size_t> order(stats.feature_names.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return stats.change_counts[a] != stats.change_counts[b] ? stats.change_counts[a] > stats.change_counts[b]
                                                            : a < b;
  });
  for (size_t i : order) stats.ranking.emplace_back(stats.feature_names[i], stats.change_counts[i]);
  return stats;
}

std::string CorrectlyClassified::ratio() const {
  return std::to_string(n_correct) + "/" + std::to_string(n_total);
}

CorrectlyClassified filter_correct(const model::GbdtModel& gbdt, std::span<const double> matrix, size_t n_cols,
                                   std::span<const int> labels) {
  CorrectlyClassified out;
  out.n_total = static_cast<int64_t>(labels.size());
  for (size_t r = 0; r < labels.size(); ++r) {
    const int pred = gbdt.predict_class(std::span(matrix.data() + r * n_cols, n_cols));
    if (pred == labels[r]) {
      out.rows.push_back(static_cast<uint32_t>(r));
      ++out.n_correct;
    }
  }
  return out;
}

}  // namespace vcce::cf
