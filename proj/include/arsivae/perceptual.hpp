#pragma once

// Perceptual feature distance (PFD): a deterministic stand-in for LPIPS built
// from a frozen, seed-initialised convolutional stack. It is not comparable to
// LPIPS in absolute value.

#include <cstdint>
#include <vector>

#include <torch/torch.h>

namespace arsivae {

inline constexpr uint64_t kPerceptualSeed = 0xC0FFEE;

class PerceptualFeatureStack {
 public:
  explicit PerceptualFeatureStack(uint64_t seed = kPerceptualSeed);

  /// Feature maps of a (batch, channels, H, W) tensor. Every image channel
  /// goes through the same single-channel stack; index 0 is the input itself,
  /// followed by the three conv stages.
  std::vector<torch::Tensor> features(const torch::Tensor& images) const;

  /// Per-sample distance, shape (batch,): mean over scales of the mean squared
  /// feature difference. Differentiable in both arguments.
  torch::Tensor distance_per_sample(const torch::Tensor& x, const torch::Tensor& y) const;

  /// Batch mean of distance_per_sample.
  torch::Tensor distance(const torch::Tensor& x, const torch::Tensor& y) const;

 private:
  struct Stage {
    torch::Tensor weight;
    torch::Tensor bias;
  };
  std::vector<Stage> stages_;
};

/// Shared instance built from kPerceptualSeed.
const PerceptualFeatureStack& default_perceptual_stack();

/// Convenience wrapper: scalar PFD between two image batches.
double perceptual_feature_distance(const torch::Tensor& x, const torch::Tensor& y);

}  // namespace arsivae
