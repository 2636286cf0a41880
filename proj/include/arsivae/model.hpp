#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <torch/torch.h>
#include <json.hpp>

namespace arsivae {

struct ModelConfig {
  int64_t latent_dim = 16;
  int64_t channels = 2;
  int64_t image_size = 64;
  int64_t base_width = 32;  // stage widths are base_width * width_multiplier * (1, 2, 4, 8)
  int64_t width_multiplier = 1;
  int64_t num_regularized_dims = 6;

  void validate() const;
  int64_t stage_width(int stage) const { return base_width * width_multiplier * (int64_t{1} << stage); }
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

inline constexpr double kLogvarMin = -10.0;
inline constexpr double kLogvarMax = 10.0;

struct EncoderOutput {
  torch::Tensor mu;      // (batch, D)
  torch::Tensor logvar;  // (batch, D), clamped to [kLogvarMin, kLogvarMax]
};

enum class CodeSource { PosteriorSample, PosteriorMean, PriorSample };

struct LatentCode {
  torch::Tensor z;  // (batch, D)
  CodeSource source = CodeSource::PosteriorSample;
};

/// Seeded CPU generator; all stochasticity in training flows through these.
torch::Generator make_generator(uint64_t seed);

/// z = mu + exp(0.5 * logvar) * eps with eps ~ N(0, I) drawn from `gen`.
LatentCode reparameterize(const EncoderOutput& enc, torch::Generator& gen);
LatentCode reparameterize(const EncoderOutput& enc, const torch::Tensor& eps);

/// Four stride-2 conv stages with GroupNorm + SiLU, then affine mu/logvar heads.
class EncoderImpl : public torch::nn::Module {
 public:
  explicit EncoderImpl(const ModelConfig& config);
  EncoderOutput forward(const torch::Tensor& images);

 private:
  ModelConfig config_;
  torch::nn::Sequential features_{nullptr};
  torch::nn::Linear mu_head_{nullptr};
  torch::nn::Linear logvar_head_{nullptr};
};
TORCH_MODULE(Encoder);

/// Affine projection to a 4x4 map, four stride-2 transposed conv stages, sigmoid output.
class DecoderImpl : public torch::nn::Module {
 public:
  explicit DecoderImpl(const ModelConfig& config);
  torch::Tensor forward(const torch::Tensor& z);

 private:
  ModelConfig config_;
  torch::nn::Linear project_{nullptr};
  torch::nn::Sequential stages_{nullptr};
};
TORCH_MODULE(Decoder);

/// Anything that maps images to posterior means and codes back to images.
/// Evaluation and traversal code depends only on this interface.
class Autoencoder {
 public:
  virtual ~Autoencoder() = default;
  virtual int64_t latent_dim() const = 0;
  virtual int64_t channels() const = 0;
  virtual torch::Tensor encode_mean(const torch::Tensor& images) = 0;
  virtual torch::Tensor decode_codes(const torch::Tensor& z) = 0;
};

enum class Component { Encoder, Decoder };

class VaeModel : public Autoencoder {
 public:
  explicit VaeModel(const ModelConfig& config, uint64_t init_seed = 0);

  const ModelConfig& config() const { return config_; }
  int64_t latent_dim() const override { return config_.latent_dim; }
  int64_t channels() const override { return config_.channels; }

  EncoderOutput encode(const torch::Tensor& images);
  torch::Tensor decode(const torch::Tensor& z);
  torch::Tensor decode(const LatentCode& code) { return decode(code.z); }

  torch::Tensor encode_mean(const torch::Tensor& images) override;
  torch::Tensor decode_codes(const torch::Tensor& z) override;

  /// Frozen components get requires_grad = false and their gradients are
  /// dropped, so no optimizer step can move them.
  void set_trainable(Component component, bool trainable);
  bool trainable(Component component) const;

  Encoder& encoder() { return encoder_; }
  Decoder& decoder() { return decoder_; }
  const Encoder& encoder() const { return encoder_; }
  const Decoder& decoder() const { return decoder_; }
  std::vector<torch::Tensor> parameters(Component component) const;
  std::vector<torch::Tensor> parameters() const;

  /// Deep copy of all parameters and buffers.
  VaeModel clone() const;
  void copy_from(const VaeModel& other);
  void to(torch::Dtype dtype);

  /// SHA-256 over the parameter bytes of one component.
  std::string parameter_digest(Component component) const;

 private:
  ModelConfig config_;
  Encoder encoder_{nullptr};
  Decoder decoder_{nullptr};
  bool encoder_trainable_ = true;
  bool decoder_trainable_ = true;
};

/// Checkpoint = array archive of parameters plus `extra` metadata (epoch,
/// optimizer description, ...).
void save_checkpoint(const VaeModel& model, const std::filesystem::path& dir,
                     const nlohmann::json& extra = nlohmann::json::object());
VaeModel load_checkpoint(const std::filesystem::path& dir, nlohmann::json* extra = nullptr);

}  // namespace arsivae
