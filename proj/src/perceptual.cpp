#include "arsivae/perceptual.hpp"

#include <array>
#include <cmath>

#include "arsivae/errors.hpp"
#include "arsivae/random.hpp"

namespace arsivae {

namespace {

constexpr int kKernel = 3;
constexpr std::array<int64_t, 4> kWidths = {1, 8, 16, 32};

// Uniform(-bound, bound) from integer draws only, so weights are identical on
// every platform.
torch::Tensor uniform_tensor(Xoshiro256& rng, std::vector<int64_t> shape, double bound) {
  int64_t n = 1;
  for (auto d : shape) n *= d;
  std::vector<float> values(static_cast<size_t>(n));
  for (auto& v : values) v = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
  return torch::from_blob(values.data(), shape, torch::kFloat32).clone();
}

}  // namespace

PerceptualFeatureStack::PerceptualFeatureStack(uint64_t seed) {
  Xoshiro256 rng(seed);
  for (size_t s = 1; s < kWidths.size(); ++s) {
    const int64_t in = kWidths[s - 1];
    const int64_t out = kWidths[s];
    const double fan_in = static_cast<double>(in * kKernel * kKernel);
    // Variance-preserving for tanh units.
    const double bound = std::sqrt(3.0 / fan_in);
    Stage stage;
    stage.weight = uniform_tensor(rng, {out, in, kKernel, kKernel}, bound);
    stage.bias = uniform_tensor(rng, {out}, 0.1);
    stages_.push_back(std::move(stage));
  }
}

std::vector<torch::Tensor> PerceptualFeatureStack::features(const torch::Tensor& images) const {
  if (images.dim() != 4) throw ContractError("PFD expects (batch, channels, H, W) images");
  const auto b = images.size(0);
  const auto c = images.size(1);
  auto h = images.reshape({b * c, 1, images.size(2), images.size(3)});
  std::vector<torch::Tensor> out;
  out.push_back(h);
  for (size_t s = 0; s < stages_.size(); ++s) {
    if (s > 0) h = torch::avg_pool2d(h, 2);
    const auto w = stages_[s].weight.to(h.scalar_type());
    const auto bias = stages_[s].bias.to(h.scalar_type());
    h = torch::tanh(torch::conv2d(h, w, bias, 1, 1));
    out.push_back(h);
  }
  return out;
}

torch::Tensor PerceptualFeatureStack::distance_per_sample(const torch::Tensor& x, const torch::Tensor& y) const {
  if (x.sizes() != y.sizes()) throw ContractError("PFD inputs must have equal shapes");
  const auto fx = features(x);
  const auto fy = features(y);
  const auto b = x.size(0);
  torch::Tensor total;
  for (size_t i = 0; i < fx.size(); ++i) {
    // (b*c, k, h, w) -> (b, c*k*h*w)
    const auto d = (fx[i] - fy[i]).pow(2).reshape({b, -1}).mean(1);
    total = total.defined() ? total + d : d;
  }
  return total / static_cast<double>(fx.size());
}

torch::Tensor PerceptualFeatureStack::distance(const torch::Tensor& x, const torch::Tensor& y) const {
  return distance_per_sample(x, y).mean();
}

const PerceptualFeatureStack& default_perceptual_stack() {
  static const PerceptualFeatureStack stack(kPerceptualSeed);
  return stack;
}

double perceptual_feature_distance(const torch::Tensor& x, const torch::Tensor& y) {
  torch::NoGradGuard guard;
  return default_perceptual_stack().distance(x, y).item<double>();
}

}  // namespace arsivae
