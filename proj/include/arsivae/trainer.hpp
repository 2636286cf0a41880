#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <torch/torch.h>
#include <json.hpp>

#include "arsivae/model.hpp"
#include "arsivae/objectives.hpp"
#include "arsivae/random.hpp"
#include "arsivae/synth_data.hpp"

namespace arsivae {

enum class Method { BetaVae, AttriVae, Sivae, ArSivae };

Method parse_method(std::string_view name);  // throws InvalidConfig
std::string_view method_name(Method m);
bool uses_attributes(Method m);
bool is_introspective(Method m);

/// Which code the attribute loss sees: a posterior sample z or the mean mu.
enum class RegularizeOn { Sample, Mean };

struct TrainConfig {
  Method method = Method::ArSivae;
  int epochs = 150;
  int patience = 30;
  int batch_size = 32;
  double lr_encoder = 2e-4;
  double lr_decoder = 2e-4;
  LossWeights weights;
  uint64_t seed = 0;
  int checkpoint_every = 0;  // 0 disables periodic checkpoints
  std::string device = "cpu";
  RegularizeOn regularize_on = RegularizeOn::Sample;

  /// Defaults per method family (learning rates differ between VAE and SIVAE).
  static TrainConfig defaults_for(Method m);
  void validate() const;
};

void to_json(nlohmann::json& j, const TrainConfig& c);
/// Missing keys take the defaults of the method named in `j` (or AR-SIVAE).
void from_json(const nlohmann::json& j, TrainConfig& c);

struct EpochRecord {
  int epoch = 0;
  LossBreakdown train;
  LossBreakdown val;
  double val_objective = 0.0;
  bool improved = false;
  int optimizer_steps = 0;
};

void to_json(nlohmann::json& j, const EpochRecord& r);

struct TrainState {
  int epoch = 0;
  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = 0;  // 0 = initial parameters
  int epochs_since_improvement = 0;
  int64_t optimizer_steps = 0;
  std::vector<EpochRecord> history;
  std::vector<LossBreakdown> step_losses;  // one per optimizer step (per batch for SIVAE)
};

enum class SivaePhase { EncoderUpdated, DecoderUpdated };

struct FitResult {
  VaeModel model;
  TrainState state;
  nlohmann::json manifest;
};

/// Hash of the dataset arrays; matches archive_content_hash of a saved copy.
std::string dataset_content_hash(const DatasetArchive& ds);

class Trainer {
 public:
  Trainer(TrainConfig config, ModelConfig model_config, const DatasetArchive& data);

  VaeModel& model() { return model_; }
  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return config_; }

  /// Called after each SIVAE phase with the batch index within the epoch.
  void set_phase_hook(std::function<void(SivaePhase, int)> hook) { phase_hook_ = std::move(hook); }

  /// One pass over the training split with a single joint optimizer.
  LossBreakdown train_epoch_vae();
  /// One pass with the encoder-then-decoder update cycle per batch.
  LossBreakdown train_epoch_sivae();
  LossBreakdown train_epoch();

  /// Loss on the validation split with a fixed noise stream; the early-stopping
  /// objective is its encoder_total.
  LossBreakdown validate();

  /// Runs epochs until exhaustion or early stop and restores the best
  /// parameters. With a run directory, writes config.json, losses.jsonl,
  /// checkpoints/, best/ and manifest.json.
  FitResult fit(const std::optional<std::filesystem::path>& run_dir = std::nullopt);

 private:
  struct Batch {
    torch::Tensor images;
    torch::Tensor attrs;
  };
  Batch make_batch(const std::vector<int64_t>& rows) const;
  std::vector<std::vector<int64_t>> epoch_batches();
  torch::Tensor attribute_term(const EncoderOutput& enc, const torch::Tensor& z, const torch::Tensor& attrs,
                               LossBreakdown& out) const;
  LossBreakdown vae_loss(const Batch& b, torch::Generator& gen, torch::Tensor* total);
  LossBreakdown sivae_step(const Batch& b, int batch_index);
  LossBreakdown sivae_eval(const Batch& b, torch::Generator& gen);

  TrainConfig config_;
  ModelConfig model_config_;
  const DatasetArchive& data_;
  VaeModel model_;
  torch::Tensor images_;  // all samples, (N, C, H, W)
  torch::Tensor attrs_;   // normalized, (N, M)
  std::unique_ptr<torch::optim::Adam> joint_opt_;
  std::unique_ptr<torch::optim::Adam> enc_opt_;
  std::unique_ptr<torch::optim::Adam> dec_opt_;
  Xoshiro256 shuffle_rng_;
  torch::Generator noise_gen_;
  TrainState state_;
  std::function<void(SivaePhase, int)> phase_hook_;
};

/// Convenience wrapper around Trainer.
FitResult fit(const TrainConfig& config, const ModelConfig& model_config, const DatasetArchive& data,
              const std::optional<std::filesystem::path>& run_dir = std::nullopt);

}  // namespace arsivae
