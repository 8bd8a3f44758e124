#pragma once

// Shared helpers for the test binaries: finite differences, random scorers
// and small statistics.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "biascorr/diffcore.hpp"

namespace testsupport {

// Central difference of f along every coordinate of w.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> w, double h = 1e-5) {
  std::vector<double> g(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double w0 = w[i];
    w[i] = w0 + h;
    const double fp = f(w);
    w[i] = w0 - h;
    const double fm = f(w);
    w[i] = w0;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

// Elementwise comparison: an entry passes when its absolute error is at most
// abs_floor or its relative error at most rel_tol.
inline bool grad_close(const std::vector<double>& a, const std::vector<double>& b, double rel_tol, double abs_floor,
                       double* worst = nullptr) {
  bool ok = true;
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double abs_err = std::abs(a[i] - b[i]);
    const double rel = abs_err / std::max({std::abs(a[i]), std::abs(b[i]), abs_floor});
    w = std::max(w, rel);
    if (abs_err > abs_floor && rel > rel_tol) ok = false;
  }
  if (worst) *worst = w;
  return ok;
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline biascorr::ScorerSpec random_spec(std::mt19937_64& rng, std::size_t max_params) {
  using namespace biascorr;
  std::uniform_int_distribution<int> kind_d(0, 2);
  std::uniform_int_distribution<int> small(1, 4);
  while (true) {
    ScorerSpec s;
    s.kind = static_cast<ScorerKind>(kind_d(rng));
    s.input_dim = static_cast<std::size_t>(small(rng));
    s.output_dim = static_cast<std::size_t>(small(rng));
    const int layers = std::uniform_int_distribution<int>(0, 2)(rng);
    for (int l = 0; l < layers; ++l) s.hidden_dims.push_back(static_cast<std::size_t>(small(rng)));
    s.activation = rng() % 2 ? Activation::relu : Activation::tanh;
    s.kernel_units = static_cast<std::size_t>(small(rng));
    s.kernel_bandwidth = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
    if (param_count(s) <= max_params) return s;
  }
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace testsupport
