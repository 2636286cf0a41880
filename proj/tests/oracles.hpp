#pragma once
// Reference implementations used as test oracles. Plain loops over doubles,
// deliberately sharing no code with the library.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <random>
#include <vector>

namespace oracle {

inline std::vector<std::vector<double>> distance_matrix(const std::vector<double>& v) {
  std::vector<std::vector<double>> m(v.size(), std::vector<double>(v.size()));
  for (size_t i = 0; i < v.size(); ++i) {
    for (size_t j = 0; j < v.size(); ++j) m[i][j] = v[i] - v[j];
  }
  return m;
}

inline double sgn(double x) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); }

inline double attribute_reg_loss(const std::vector<double>& z, const std::vector<double>& a, double delta) {
  const size_t n = z.size();
  double total = 0.0;
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < n; ++j) total += std::abs(std::tanh(delta * (z[i] - z[j])) - sgn(a[i] - a[j]));
  }
  return total / static_cast<double>(n * n);
}

/// E_q[log q(z) - log p(z)] by sampling z ~ q = N(mu, exp(logvar)).
inline double monte_carlo_kl(const std::vector<double>& mu, const std::vector<double>& logvar, int samples,
                             unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  double acc = 0.0;
  for (int s = 0; s < samples; ++s) {
    double log_ratio = 0.0;
    for (size_t d = 0; d < mu.size(); ++d) {
      const double sigma = std::exp(0.5 * logvar[d]);
      const double eps = nd(rng);
      const double z = mu[d] + sigma * eps;
      log_ratio += -0.5 * eps * eps - std::log(sigma) + 0.5 * z * z;
    }
    acc += log_ratio;
  }
  return acc / samples;
}

/// Spearman via 1 - 6 sum d^2 / (n (n^2 - 1)); valid only without ties.
inline double spearman_no_ties(const std::vector<double>& u, const std::vector<double>& v) {
  const size_t n = u.size();
  auto ranks = [n](const std::vector<double>& x) {
    std::vector<size_t> idx(n);
    std::iota(idx.begin(), idx.end(), size_t{0});
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return x[a] < x[b]; });
    std::vector<double> r(n);
    for (size_t k = 0; k < n; ++k) r[idx[k]] = static_cast<double>(k + 1);
    return r;
  };
  const auto ru = ranks(u), rv = ranks(v);
  double d2 = 0.0;
  for (size_t i = 0; i < n; ++i) d2 += (ru[i] - rv[i]) * (ru[i] - rv[i]);
  const double nn = static_cast<double>(n);
  return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
}

/// Central difference of f at x along coordinate i.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                  std::vector<double> x, size_t i, double h) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double fp = f(x);
  x[i] = x0 - h;
  const double fm = f(x);
  return (fp - fm) / (2.0 * h);
}

/// |a - b| / max(|a|, |b|, floor).
inline double relative_error(double a, double b, double floor = 1e-8) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
