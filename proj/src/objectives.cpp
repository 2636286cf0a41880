#include "arsivae/objectives.hpp"

#include <cmath>

#include "arsivae/errors.hpp"
#include "arsivae/perceptual.hpp"

namespace arsivae {

using nlohmann::json;

namespace {

double scalar(const torch::Tensor& t) {
  if (!t.defined()) return 0.0;
  return t.detach().to(torch::kDouble).mean().item<double>();
}

void check_weight(double v, const char* name) {
  if (!std::isfinite(v) || v < 0.0) throw InvalidConfig(std::string("loss weight '") + name + "' must be finite and >= 0");
}

}  // namespace

void LossWeights::validate() const {
  check_weight(beta, "beta");
  check_weight(gamma_reg, "gamma_reg");
  check_weight(delta, "delta");
  check_weight(alpha, "alpha");
  check_weight(eta, "eta");
  check_weight(beta_rec, "beta_rec");
  check_weight(beta_kl, "beta_kl");
  check_weight(beta_neg, "beta_neg");
  check_weight(alpha_pl, "alpha_pl");
  if (!(delta > 0.0)) throw InvalidConfig("delta must be > 0");
  if (!s_auto && !(s > 0.0 && std::isfinite(s))) throw InvalidConfig("s must be finite and > 0");
}

void LossWeights::resolve_scale(int64_t pixels_per_image) {
  if (pixels_per_image <= 0) throw ContractError("pixels_per_image must be positive");
  if (s_auto) s = 1.0 / static_cast<double>(pixels_per_image);
}

void to_json(json& j, const LossWeights& w) {
  j = json{{"beta", w.beta},         {"gamma_reg", w.gamma_reg}, {"delta", w.delta},
           {"alpha", w.alpha},       {"eta", w.eta},             {"beta_rec", w.beta_rec},
           {"beta_kl", w.beta_kl},   {"beta_neg", w.beta_neg},   {"alpha_pl", w.alpha_pl}};
  if (w.s_auto) {
    j["s"] = "auto";
  } else {
    j["s"] = w.s;
  }
}

void from_json(const json& j, LossWeights& w) {
  const LossWeights d;
  w.beta = j.value("beta", d.beta);
  w.gamma_reg = j.value("gamma_reg", d.gamma_reg);
  w.delta = j.value("delta", d.delta);
  w.alpha = j.value("alpha", d.alpha);
  w.eta = j.value("eta", d.eta);
  w.beta_rec = j.value("beta_rec", d.beta_rec);
  w.beta_kl = j.value("beta_kl", d.beta_kl);
  w.beta_neg = j.value("beta_neg", d.beta_neg);
  w.alpha_pl = j.value("alpha_pl", d.alpha_pl);
  w.s_auto = true;
  w.s = d.s;
  if (j.contains("s") && j.at("s").is_number()) {
    w.s = j.at("s").get<double>();
    w.s_auto = false;
  }
}

bool LossBreakdown::finite() const {
  for (double v : {recon_real, kl_real, recon_fake, kl_fake, attr_total, encoder_total, decoder_total}) {
    if (!std::isfinite(v)) return false;
  }
  for (double v : per_attribute) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

LossBreakdown& LossBreakdown::operator+=(const LossBreakdown& o) {
  recon_real += o.recon_real;
  kl_real += o.kl_real;
  recon_fake += o.recon_fake;
  kl_fake += o.kl_fake;
  attr_total += o.attr_total;
  encoder_total += o.encoder_total;
  decoder_total += o.decoder_total;
  if (per_attribute.size() < o.per_attribute.size()) per_attribute.resize(o.per_attribute.size(), 0.0);
  for (size_t i = 0; i < o.per_attribute.size(); ++i) per_attribute[i] += o.per_attribute[i];
  return *this;
}

LossBreakdown& LossBreakdown::operator/=(double n) {
  recon_real /= n;
  kl_real /= n;
  recon_fake /= n;
  kl_fake /= n;
  attr_total /= n;
  encoder_total /= n;
  decoder_total /= n;
  for (auto& v : per_attribute) v /= n;
  return *this;
}

void to_json(json& j, const LossBreakdown& b) {
  j = json{{"recon_real", b.recon_real}, {"kl_real", b.kl_real},       {"recon_fake", b.recon_fake},
           {"kl_fake", b.kl_fake},       {"attr_total", b.attr_total}, {"encoder_total", b.encoder_total},
           {"decoder_total", b.decoder_total}, {"per_attribute", b.per_attribute}};
}

void from_json(const json& j, LossBreakdown& b) {
  b.recon_real = j.at("recon_real").get<double>();
  b.kl_real = j.at("kl_real").get<double>();
  b.recon_fake = j.at("recon_fake").get<double>();
  b.kl_fake = j.at("kl_fake").get<double>();
  b.attr_total = j.at("attr_total").get<double>();
  b.encoder_total = j.at("encoder_total").get<double>();
  b.decoder_total = j.at("decoder_total").get<double>();
  b.per_attribute = j.value("per_attribute", std::vector<double>{});
}

torch::Tensor pairwise_distance_matrix(const torch::Tensor& values) {
  if (values.dim() != 1 || values.size(0) < 1) throw ContractError("pairwise_distance_matrix expects a non-empty vector");
  return values.unsqueeze(1) - values.unsqueeze(0);
}

torch::Tensor attribute_reg_loss(const torch::Tensor& z_k, const torch::Tensor& a, double delta) {
  if (z_k.dim() != 1 || a.dim() != 1 || z_k.size(0) != a.size(0)) {
    throw ContractError("attribute_reg_loss expects two vectors of equal length");
  }
  if (z_k.size(0) < 2) throw ContractError("attribute_reg_loss needs at least two samples to form pairs");
  if (!(delta > 0.0)) throw ContractError("delta must be > 0");
  const auto dz = pairwise_distance_matrix(z_k);
  const auto da = pairwise_distance_matrix(a.to(z_k.scalar_type()));
  return (torch::tanh(delta * dz) - torch::sign(da)).abs().mean();
}

torch::Tensor attribute_regularization(const torch::Tensor& z, const torch::Tensor& attrs, double delta) {
  if (z.dim() != 2 || attrs.dim() != 2 || z.size(0) != attrs.size(0)) {
    throw ContractError("attribute_regularization expects (N, D) codes and (N, M) attributes");
  }
  const auto m = attrs.size(1);
  if (m > z.size(1)) throw ContractError("more attributes than latent dimensions");
  std::vector<torch::Tensor> per;
  per.reserve(static_cast<size_t>(m));
  for (int64_t l = 0; l < m; ++l) per.push_back(attribute_reg_loss(z.select(1, l), attrs.select(1, l), delta));
  return torch::stack(per);
}

torch::Tensor gaussian_kl_per_sample(const torch::Tensor& mu, const torch::Tensor& logvar) {
  if (mu.sizes() != logvar.sizes()) throw ContractError("mu and logvar must have equal shapes");
  const auto terms = torch::exp(logvar) + mu.pow(2) - 1.0 - logvar;
  return 0.5 * (terms.dim() >= 2 ? terms.sum(-1) : terms.sum());
}

torch::Tensor gaussian_kl(const torch::Tensor& mu, const torch::Tensor& logvar) {
  return gaussian_kl_per_sample(mu, logvar).mean();
}

torch::Tensor reconstruction_loss(const torch::Tensor& x, const torch::Tensor& x_hat, double alpha_pl) {
  if (x.sizes() != x_hat.sizes()) throw ContractError("reconstruction_loss: shape mismatch");
  auto loss = (x_hat - x).pow(2).mean();
  if (alpha_pl > 0.0) loss = loss + alpha_pl * default_perceptual_stack().distance(x, x_hat);
  return loss;
}

torch::Tensor reconstruction_error_per_sample(const torch::Tensor& x, const torch::Tensor& x_hat, double alpha_pl) {
  if (x.sizes() != x_hat.sizes() || x.dim() != 4) throw ContractError("reconstruction_error_per_sample: shape mismatch");
  const auto b = x.size(0);
  const double pixels = static_cast<double>(x.numel() / std::max<int64_t>(b, 1));
  auto per = (x_hat - x).pow(2).reshape({b, -1}).mean(1);
  if (alpha_pl > 0.0) per = per + alpha_pl * default_perceptual_stack().distance_per_sample(x, x_hat);
  return pixels * per;
}

WeightedLoss attrivae_total_loss(const torch::Tensor& x, const torch::Tensor& x_hat, const torch::Tensor& mu,
                                 const torch::Tensor& logvar, const torch::Tensor& z, const torch::Tensor& attrs,
                                 const LossWeights& w) {
  const auto recon = reconstruction_error_per_sample(x, x_hat, w.alpha_pl).mean();
  const auto kl = gaussian_kl(mu, logvar);
  auto total = recon + w.beta * kl;
  WeightedLoss out;
  if (attrs.defined()) {
    const auto per = attribute_regularization(z, attrs, w.delta);
    const auto attr_total = per.sum();
    total = total + w.gamma_reg * attr_total;
    out.breakdown.attr_total = scalar(attr_total);
    const auto per_d = per.detach().to(torch::kDouble).contiguous();
    out.breakdown.per_attribute.assign(per_d.data_ptr<double>(), per_d.data_ptr<double>() + per_d.numel());
  }
  out.total = total;
  out.breakdown.recon_real = scalar(recon);
  out.breakdown.kl_real = scalar(kl);
  out.breakdown.encoder_total = scalar(total);
  out.breakdown.decoder_total = out.breakdown.encoder_total;
  if (!out.breakdown.finite()) {
    throw TrainingDivergence("non-finite VAE loss", json(out.breakdown).dump());
  }
  return out;
}

torch::Tensor sivae_encoder_loss(const ElboTerms& real, const ElboTerms& fake, const torch::Tensor& attr_total,
                                 const LossWeights& w) {
  const auto real_part = w.s * (w.beta_rec * real.recon.mean() + w.beta_kl * real.kl.mean());
  const auto neg = w.s * (w.beta_rec * fake.recon + w.beta_neg * fake.kl);
  // alpha -> 0 limit of (1/alpha) exp(-alpha * neg), up to a constant.
  const auto exp_term = w.alpha > 0.0 ? (torch::exp(-w.alpha * neg) / w.alpha).mean() : (-neg).mean();
  auto total = real_part + exp_term;
  if (attr_total.defined()) total = total + w.gamma_reg * attr_total;
  const double value = scalar(total);
  if (!std::isfinite(value)) {
    LossBreakdown b;
    b.recon_real = scalar(real.recon);
    b.kl_real = scalar(real.kl);
    b.recon_fake = scalar(fake.recon);
    b.kl_fake = scalar(fake.kl);
    b.attr_total = scalar(attr_total);
    b.encoder_total = value;
    throw TrainingDivergence("non-finite SIVAE encoder loss", json(b).dump());
  }
  return total;
}

torch::Tensor sivae_decoder_loss(const ElboTerms& real, const ElboTerms& fake, const LossWeights& w) {
  const auto total = w.s * w.beta_rec * real.recon.mean() +
                     w.s * (w.eta * w.beta_rec * fake.recon.mean() + w.beta_kl * fake.kl.mean());
  const double value = scalar(total);
  if (!std::isfinite(value)) {
    LossBreakdown b;
    b.recon_real = scalar(real.recon);
    b.recon_fake = scalar(fake.recon);
    b.kl_fake = scalar(fake.kl);
    b.decoder_total = value;
    throw TrainingDivergence("non-finite SIVAE decoder loss", json(b).dump());
  }
  return total;
}

}  // namespace arsivae
