#include "arsivae/model.hpp"

#include <numeric>

#include "arsivae/array_archive.hpp"
#include "arsivae/errors.hpp"

namespace arsivae {

namespace nn = torch::nn;
using nlohmann::json;

namespace {

constexpr int kStages = 4;

int64_t group_count(int64_t channels) { return std::gcd(channels, int64_t{8}); }

std::string component_prefix(Component c) { return c == Component::Encoder ? "encoder." : "decoder."; }

void check_images(const ModelConfig& cfg, const torch::Tensor& images) {
  if (images.dim() != 4 || images.size(1) != cfg.channels || images.size(2) != cfg.image_size ||
      images.size(3) != cfg.image_size) {
    throw ContractError("encoder expects (batch, " + std::to_string(cfg.channels) + ", " +
                        std::to_string(cfg.image_size) + ", " + std::to_string(cfg.image_size) +
                        ") images, got " + c10::str(images.sizes()));
  }
}

}  // namespace

void ModelConfig::validate() const {
  if (latent_dim < 1) throw InvalidConfig("latent_dim must be positive");
  if (num_regularized_dims < 0 || num_regularized_dims > latent_dim) {
    throw InvalidConfig("num_regularized_dims must lie in [0, latent_dim]");
  }
  if (channels != 1 && channels != 2) throw InvalidConfig("channels must be 1 or 2");
  if (image_size < 16 || image_size % 16 != 0) throw InvalidConfig("image_size must be a positive multiple of 16");
  if (base_width < 1 || width_multiplier < 1) throw InvalidConfig("widths must be positive");
}

void to_json(json& j, const ModelConfig& c) {
  j = json{{"latent_dim", c.latent_dim},
           {"channels", c.channels},
           {"image_size", c.image_size},
           {"base_width", c.base_width},
           {"width_multiplier", c.width_multiplier},
           {"num_regularized_dims", c.num_regularized_dims}};
}

void from_json(const json& j, ModelConfig& c) {
  ModelConfig d;
  c.latent_dim = j.value("latent_dim", d.latent_dim);
  c.channels = j.value("channels", d.channels);
  c.image_size = j.value("image_size", d.image_size);
  c.base_width = j.value("base_width", d.base_width);
  c.width_multiplier = j.value("width_multiplier", d.width_multiplier);
  c.num_regularized_dims = j.value("num_regularized_dims", d.num_regularized_dims);
}

torch::Generator make_generator(uint64_t seed) {
  return at::make_generator<at::CPUGeneratorImpl>(seed);
}

LatentCode reparameterize(const EncoderOutput& enc, const torch::Tensor& eps) {
  return {enc.mu + torch::exp(0.5 * enc.logvar) * eps, CodeSource::PosteriorSample};
}

LatentCode reparameterize(const EncoderOutput& enc, torch::Generator& gen) {
  const auto eps = torch::randn(enc.mu.sizes(), gen, enc.mu.options().requires_grad(false));
  return reparameterize(enc, eps);
}

EncoderImpl::EncoderImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  features_ = nn::Sequential();
  int64_t in = config_.channels;
  for (int s = 0; s < kStages; ++s) {
    const int64_t out = config_.stage_width(s);
    features_->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 4).stride(2).padding(1)));
    features_->push_back(nn::GroupNorm(nn::GroupNormOptions(group_count(out), out)));
    features_->push_back(nn::SiLU());
    in = out;
  }
  register_module("features", features_);
  const int64_t spatial = config_.image_size >> kStages;
  const int64_t flat = in * spatial * spatial;
  mu_head_ = register_module("mu_head", nn::Linear(flat, config_.latent_dim));
  logvar_head_ = register_module("logvar_head", nn::Linear(flat, config_.latent_dim));
}

EncoderOutput EncoderImpl::forward(const torch::Tensor& images) {
  check_images(config_, images);
  auto h = features_->forward(images).flatten(1);
  return {mu_head_(h), torch::clamp(logvar_head_(h), kLogvarMin, kLogvarMax)};
}

DecoderImpl::DecoderImpl(const ModelConfig& config) : config_(config) {
  config_.validate();
  const int64_t spatial = config_.image_size >> kStages;
  const int64_t top = config_.stage_width(kStages - 1);
  project_ = register_module("project", nn::Linear(config_.latent_dim, top * spatial * spatial));
  stages_ = nn::Sequential();
  int64_t in = top;
  for (int s = kStages - 2; s >= 0; --s) {
    const int64_t out = config_.stage_width(s);
    stages_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, out, 4).stride(2).padding(1)));
    stages_->push_back(nn::GroupNorm(nn::GroupNormOptions(group_count(out), out)));
    stages_->push_back(nn::SiLU());
    in = out;
  }
  stages_->push_back(nn::ConvTranspose2d(nn::ConvTranspose2dOptions(in, config_.channels, 4).stride(2).padding(1)));
  register_module("stages", stages_);
}

torch::Tensor DecoderImpl::forward(const torch::Tensor& z) {
  if (z.dim() != 2 || z.size(1) != config_.latent_dim) {
    throw ContractError("decoder expects (batch, " + std::to_string(config_.latent_dim) + ") codes, got " +
                        c10::str(z.sizes()));
  }
  const int64_t spatial = config_.image_size >> kStages;
  auto h = torch::silu(project_(z)).view({z.size(0), config_.stage_width(kStages - 1), spatial, spatial});
  return torch::sigmoid(stages_->forward(h));
}

VaeModel::VaeModel(const ModelConfig& config, uint64_t init_seed) : config_(config) {
  config_.validate();
  // Seed the default generator for initialisation only, then restore it.
  auto gen = at::detail::getDefaultCPUGenerator();
  const auto saved = gen.get_state();
  torch::manual_seed(init_seed);
  encoder_ = Encoder(config_);
  decoder_ = Decoder(config_);
  gen.set_state(saved);
}

EncoderOutput VaeModel::encode(const torch::Tensor& images) { return encoder_->forward(images); }

torch::Tensor VaeModel::decode(const torch::Tensor& z) { return decoder_->forward(z); }

torch::Tensor VaeModel::encode_mean(const torch::Tensor& images) {
  torch::NoGradGuard guard;
  return encoder_->forward(images).mu;
}

torch::Tensor VaeModel::decode_codes(const torch::Tensor& z) {
  torch::NoGradGuard guard;
  return decoder_->forward(z);
}

void VaeModel::set_trainable(Component component, bool trainable) {
  for (auto& p : parameters(component)) {
    p.set_requires_grad(trainable);
    if (!trainable) p.mutable_grad().reset();
  }
  (component == Component::Encoder ? encoder_trainable_ : decoder_trainable_) = trainable;
}

bool VaeModel::trainable(Component component) const {
  return component == Component::Encoder ? encoder_trainable_ : decoder_trainable_;
}

std::vector<torch::Tensor> VaeModel::parameters(Component component) const {
  return component == Component::Encoder ? encoder_->parameters() : decoder_->parameters();
}

std::vector<torch::Tensor> VaeModel::parameters() const {
  auto all = encoder_->parameters();
  auto dec = decoder_->parameters();
  all.insert(all.end(), dec.begin(), dec.end());
  return all;
}

VaeModel VaeModel::clone() const {
  VaeModel copy(config_);
  if (!parameters().empty()) copy.to(parameters().front().scalar_type());
  copy.copy_from(*this);
  return copy;
}

void VaeModel::copy_from(const VaeModel& other) {
  torch::NoGradGuard guard;
  const auto src = other.parameters();
  auto dst = parameters();
  if (src.size() != dst.size()) throw ContractError("copy_from: parameter sets differ");
  for (size_t i = 0; i < src.size(); ++i) dst[i].copy_(src[i]);
}

void VaeModel::to(torch::Dtype dtype) {
  encoder_->to(dtype);
  decoder_->to(dtype);
}

std::string VaeModel::parameter_digest(Component component) const {
  std::string bytes;
  for (const auto& p : parameters(component)) {
    const auto c = p.detach().contiguous();
    bytes.append(static_cast<const char*>(c.data_ptr()), c.nbytes());
  }
  return sha256_hex(std::as_bytes(std::span(bytes.data(), bytes.size())));
}

void save_checkpoint(const VaeModel& model, const std::filesystem::path& dir, const json& extra) {
  ArrayArchive ar;
  for (auto component : {Component::Encoder, Component::Decoder}) {
    const auto& module = component == Component::Encoder
                             ? static_cast<const torch::nn::Module&>(*model.encoder())
                             : static_cast<const torch::nn::Module&>(*model.decoder());
    for (const auto& item : module.named_parameters()) {
      const auto t = item.value().detach().to(torch::kFloat32).contiguous();
      NamedArray arr;
      arr.name = component_prefix(component) + item.key();
      arr.shape.assign(t.sizes().begin(), t.sizes().end());
      arr.data.assign(t.data_ptr<float>(), t.data_ptr<float>() + t.numel());
      ar.arrays.push_back(std::move(arr));
    }
  }
  ar.metadata = {{"kind", "checkpoint"}, {"model_config", model.config()}, {"extra", extra}};
  save_array_archive(ar, dir);
}

VaeModel load_checkpoint(const std::filesystem::path& dir, json* extra) {
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw std::runtime_error("checkpoint not found: " + dir.string());
  }
  const ArrayArchive ar = load_array_archive(dir);
  if (ar.metadata.value("kind", "") != "checkpoint") throw CorruptArchive("archive is not a checkpoint");
  ModelConfig cfg;
  try {
    cfg = ar.metadata.at("model_config").get<ModelConfig>();
  } catch (const json::exception& e) {
    throw CorruptArchive(std::string("malformed checkpoint config: ") + e.what());
  }
  VaeModel model(cfg);
  torch::NoGradGuard guard;
  for (auto component : {Component::Encoder, Component::Decoder}) {
    auto& module = component == Component::Encoder ? static_cast<torch::nn::Module&>(*model.encoder())
                                                   : static_cast<torch::nn::Module&>(*model.decoder());
    for (auto& item : module.named_parameters()) {
      const auto& arr = ar.at(component_prefix(component) + item.key());
      auto& p = item.value();
      if (!std::equal(arr.shape.begin(), arr.shape.end(), p.sizes().begin(), p.sizes().end())) {
        throw CorruptArchive("parameter '" + arr.name + "' has the wrong shape");
      }
      p.copy_(torch::from_blob(const_cast<float*>(arr.data.data()), p.sizes(), torch::kFloat32));
    }
  }
  if (extra) *extra = ar.metadata.value("extra", json::object());
  return model;
}

}  // namespace arsivae
