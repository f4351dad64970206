#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "conceptlab/error.hpp"

namespace conceptlab {

inline double mean(std::span<const double> v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double sample_stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

struct PairedTest {
  double mean_difference = 0.0;
  double t_statistic = 0.0;
  int df = 0;
};

// Paired t statistic of a - b. A zero-variance difference gives +-inf (or 0
// when the mean difference is also 0).
inline PairedTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  require(a.size() == b.size() && a.size() >= 2, "paired test needs two equal samples of size >= 2");
  std::vector<double> d(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
  PairedTest t;
  t.mean_difference = mean(d);
  t.df = static_cast<int>(d.size()) - 1;
  const double se = sample_stddev(d) / std::sqrt(static_cast<double>(d.size()));
  if (se > 0.0)
    t.t_statistic = t.mean_difference / se;
  else
    t.t_statistic = t.mean_difference == 0.0 ? 0.0 : std::copysign(INFINITY, t.mean_difference);
  return t;
}

// One-sided 95% critical value of Student's t.
inline double t_critical_95(int df) {
  static constexpr double table[] = {6.314, 2.920, 2.353, 2.132, 2.015, 1.943, 1.895, 1.860, 1.833, 1.812,
                                     1.796, 1.782, 1.771, 1.761, 1.753, 1.746, 1.740, 1.734, 1.729, 1.725,
                                     1.721, 1.717, 1.714, 1.711, 1.708, 1.706, 1.703, 1.701, 1.699, 1.697};
  require(df >= 1, "t_critical_95: df must be >= 1");
  if (df <= 30) return table[df - 1];
  return 1.645;
}

}  // namespace conceptlab
