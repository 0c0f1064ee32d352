#pragma once

#include <cmath>
#include <functional>
#include <random>

#include "cpquant/loss.hpp"
#include "cpquant/model.hpp"
#include "cpquant/rng.hpp"

namespace testutil {

using cpquant::Dataset;
using cpquant::MatrixXd;
using cpquant::RegressionModel;
using cpquant::VectorXd;

// Central finite differences of a scalar function, independent of the
// library's analytic gradients.
inline VectorXd fd_gradient(const std::function<double(const VectorXd&)>& f,
                            const VectorXd& x, double step = 1e-6) {
  VectorXd g(x.size());
  for (int j = 0; j < x.size(); ++j) {
    VectorXd hi = x, lo = x;
    hi[j] += step;
    lo[j] -= step;
    g[j] = (f(hi) - f(lo)) / (2.0 * step);
  }
  return g;
}

// Mono-molecular data with chosen per-segment parameters; errors supplied by
// the caller (empty = noiseless).
inline Dataset make_mono_data(const std::vector<double>& xs,
                              const std::vector<int>& breaks,
                              const std::vector<VectorXd>& phis,
                              const std::vector<double>& eps = {}) {
  Dataset d;
  const int n = static_cast<int>(xs.size());
  d.x.resize(n, 1);
  d.y.resize(n);
  int seg = 0;
  for (int i = 0; i < n; ++i) {
    while (seg < static_cast<int>(breaks.size()) && i + 1 > breaks[seg]) ++seg;
    const VectorXd& phi = phis[seg];
    d.x(i, 0) = xs[i];
    d.y[i] = phi[0] - std::exp(-phi[1] * xs[i]);
    if (!eps.empty()) d.y[i] += eps[i];
  }
  return d;
}

inline std::vector<double> gaussian_xs(int n, std::uint64_t seed,
                                       double mean = 1.0, double sd = 1.0) {
  // Trusted standard-library sampler, independent of the library RNG.
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(mean, sd);
  std::vector<double> xs(n);
  for (auto& x : xs) x = nd(gen);
  return xs;
}

inline std::vector<double> gaussian_eps(int n, std::uint64_t seed,
                                        double sd = 1.0) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> nd(0.0, sd);
  std::vector<double> e(n);
  for (auto& v : e) v = nd(gen);
  return e;
}

inline VectorXd vec2(double a, double b) {
  VectorXd v(2);
  v << a, b;
  return v;
}

}  // namespace testutil
