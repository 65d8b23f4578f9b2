#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

namespace vcce {

// Linear-interpolated percentile (the numpy convention): rank q*(n-1).
// `sorted` must be ascending and non-empty; q in [0, 100].
inline double percentile_sorted(std::span<const double> sorted, double q) {
  const size_t n = sorted.size();
  if (n == 1) return sorted[0];
  const double rank = q / 100.0 * static_cast<double>(n - 1);
  const auto lo = static_cast<size_t>(rank);
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = rank - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  return percentile_sorted(values, q);
}

inline double mean(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

// Population standard deviation (divide by n).
inline double stddev_pop(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double m = mean(v);
  double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

inline double median(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  if (values.empty()) return 0.0;
  const size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

// Median absolute deviation around the median.
inline double mad(std::span<const double> v) {
  std::vector<double> values(v.begin(), v.end());
  const double m = median(values);
  for (auto& x : values) x = std::abs(x - m);
  return median(std::move(values));
}

inline double rms(std::span<const double> v) {
  double s = 0;
  for (double x : v) s += x * x;
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

}  // namespace vcce
