#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace arsivae {

struct SsimOptions {
  int window = 11;
  double sigma = 1.5;
  double data_range = 1.0;
};

/// Mean local SSIM of two single-channel H x W images (row-major), Gaussian
/// window, valid positions only. Throws ContractError if the image is smaller
/// than the window.
double ssim(std::span<const float> x, std::span<const float> y, int height, int width, const SsimOptions& opts = {});

/// Mean SSIM over `planes` consecutive H x W planes.
double ssim_planes(std::span<const float> x, std::span<const float> y, int64_t planes, int height, int width,
                   const SsimOptions& opts = {});

/// 1-based ranks; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Spearman rank correlation. Throws UndefinedMetric when either input is constant.
double spearman(std::span<const double> u, std::span<const double> v);

/// Latent codes (posterior means) of N samples next to their M attributes.
struct CodesTable {
  Eigen::MatrixXd codes;       // N x D
  Eigen::MatrixXd attributes;  // N x M
  std::vector<std::string> attribute_names;
  std::vector<int> regularized_dim_map;  // attribute j -> latent dim; empty for unregularized models

  /// N >= 10, matching rows, no constant attribute columns.
  void validate() const;
  int64_t samples() const { return codes.rows(); }
  int64_t dims() const { return codes.cols(); }
  int64_t num_attributes() const { return attributes.cols(); }
};

/// |spearman(z_k, a_j)| for all (k, j); constant latent dims count as 0. D x M.
Eigen::MatrixXd spearman_dependence(const CodesTable& table);

struct AttributeMetric {
  double mean = 0.0;
  std::vector<double> per_attribute;
};

/// Per attribute: max over dims of |spearman|; mean over attributes.
AttributeMetric scc_metric(const CodesTable& table);

/// R^2 of a univariate least-squares fit of each attribute on each single
/// latent dim, fit on even rows and scored on odd rows, clipped to [0, 1]. D x M.
Eigen::MatrixXd univariate_r2_scores(const CodesTable& table);

struct InterpretabilityResult {
  double mean = 0.0;
  std::vector<double> per_attribute;
  std::vector<int> best_dim;
  double ed_mean = 0.0;  // attributes whose name ends in "_ed"
  double es_mean = 0.0;  // attributes whose name ends in "_es"
};

InterpretabilityResult interpretability_score(const CodesTable& table);

/// Per attribute: gap between the two best univariate R^2 scores.
AttributeMetric sap_metric(const CodesTable& table);

struct ModularityResult {
  double mean = 0.0;
  std::vector<double> per_dim;  // NaN for dims whose peak dependence is <= tau
  int active_dims = 0;
};

inline constexpr double kModularityThreshold = 0.01;

/// Dependence m[k][j] = spearman(z_k, a_j)^2. For dims with theta_k = max_j m > tau:
/// 1 - sum_{j != argmax} m[k][j]^2 / (theta_k^2 (M - 1)). Throws UndefinedMetric
/// when no dim is active.
ModularityResult modularity_metric(const CodesTable& table, double tau = kModularityThreshold);

}  // namespace arsivae
