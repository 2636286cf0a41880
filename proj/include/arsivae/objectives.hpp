#pragma once

// Loss functions for beta-VAE, Attri-VAE, SIVAE and AR-SIVAE.
//
// Reduction convention: per-sample reconstruction terms are summed over
// pixels and KL terms over latent dims; batch reduction is a mean. The SIVAE
// scale `s` multiplies these sums, so s = 1/(C*H*W) turns them back into
// per-pixel quantities.

#include <cstdint>
#include <string>
#include <vector>

#include <torch/torch.h>
#include <json.hpp>

namespace arsivae {

struct LossWeights {
  double beta = 4.0;        // KL weight for beta-VAE / Attri-VAE
  double gamma_reg = 100.0; // attribute regularization weight
  double delta = 1.0;       // tanh spread
  double alpha = 2.0;       // SIVAE exponent
  double eta = 1.0;         // decoder weight on the fake-sample reconstruction
  double s = 1.0;           // SIVAE normalizing constant
  bool s_auto = true;       // when set, resolve_scale() replaces s with 1/(C*H*W)
  double beta_rec = 1.0;
  double beta_kl = 1.0;
  double beta_neg = 1.0;
  double alpha_pl = 0.1;    // perceptual term weight inside the reconstruction loss

  void validate() const;
  void resolve_scale(int64_t pixels_per_image);
};

void to_json(nlohmann::json& j, const LossWeights& w);
void from_json(const nlohmann::json& j, LossWeights& w);

struct LossBreakdown {
  double recon_real = 0.0;
  double kl_real = 0.0;
  double recon_fake = 0.0;
  double kl_fake = 0.0;
  double attr_total = 0.0;
  double encoder_total = 0.0;
  double decoder_total = 0.0;
  std::vector<double> per_attribute;

  bool finite() const;
  LossBreakdown& operator+=(const LossBreakdown& other);
  LossBreakdown& operator/=(double n);
};

void to_json(nlohmann::json& j, const LossBreakdown& b);
void from_json(const nlohmann::json& j, LossBreakdown& b);

/// M[i][j] = v[i] - v[j] for a length-N vector.
torch::Tensor pairwise_distance_matrix(const torch::Tensor& values);

/// mean_{i,j} |tanh(delta * Dz(i,j)) - sgn(Da(i,j))| over all N^2 entries,
/// with sgn(0) = 0. Requires N >= 2 and delta > 0.
torch::Tensor attribute_reg_loss(const torch::Tensor& z_k, const torch::Tensor& a, double delta);

/// Per-attribute losses (length M); attribute column l regularizes latent dim l.
torch::Tensor attribute_regularization(const torch::Tensor& z, const torch::Tensor& attrs, double delta);

/// 0.5 * sum_d (exp(logvar) + mu^2 - 1 - logvar), one value per sample.
torch::Tensor gaussian_kl_per_sample(const torch::Tensor& mu, const torch::Tensor& logvar);
/// Batch mean of gaussian_kl_per_sample.
torch::Tensor gaussian_kl(const torch::Tensor& mu, const torch::Tensor& logvar);

/// Per-pixel mean squared error plus alpha_pl * PFD (batch mean).
torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_hat, double alpha_pl);

/// Per-sample reconstruction error in the summed convention:
/// pixels * (mse_i + alpha_pl * pfd_i).
torch::Tensor reconstruction_error_per_sample(const torch::Tensor& x, const torch::Tensor& x_hat, double alpha_pl);

/// Reconstruction and KL terms of one ELBO. Either per-sample vectors or scalars.
struct ElboTerms {
  torch::Tensor recon;
  torch::Tensor kl;
};

struct WeightedLoss {
  torch::Tensor total;
  LossBreakdown breakdown;
};

/// recon + beta * KL + gamma_reg * sum_l L_{l}. `attrs` may be undefined
/// (beta-VAE), in which case the attribute term is skipped.
WeightedLoss attrivae_total_loss(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& mu,
                                 const torch::Tensor& logvar, const torch::Tensor& z, const torch::Tensor& attrs,
                                 const LossWeights& weights);

/// gamma_reg * attr_total + s * (beta_rec * Lr(x) + beta_kl * KL(x))
///   + (1/alpha) * mean(exp(-alpha * s * (beta_rec * Lr(fake) + beta_neg * KL(fake)))).
/// `attr_total` may be undefined (plain SIVAE). Throws TrainingDivergence on
/// a non-finite result.
torch::Tensor sivae_encoder_loss(const ElboTerms& real, const ElboTerms& fake, const torch::Tensor& attr_total,
                                 const LossWeights& weights);

/// s * beta_rec * Lr(x) + s * (eta * beta_rec * Lr(fake) + beta_kl * KL(fake)).
torch::Tensor sivae_decoder_loss(const ElboTerms& real, const ElboTerms& fake, const LossWeights& weights);

}  // namespace arsivae
