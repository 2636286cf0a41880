#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "arsivae/evaluate.hpp"
#include "arsivae/model.hpp"
#include "arsivae/synth_data.hpp"
#include "arsivae/trainer.hpp"
#include "arsivae/traversal.hpp"

namespace arsivae {

struct DatasetSection {
  int64_t n = 2000;
  uint64_t seed = 0;
  Canvas canvas;
  SplitFractions splits;
};

struct EvalSection {
  std::string split = "test";
  bool reconstruction = true;
  bool latent_metrics = true;
  TraversalRange traversal_range;
  int traversal_steps = kDefaultTraversalSteps;
  int traversal_bases = 20;
  uint64_t traversal_seed = 0;
};

struct ExperimentConfig {
  DatasetSection dataset;
  ModelConfig model;
  TrainConfig train;
  EvalSection eval;
  std::filesystem::path output_dir = "runs";

  /// Cross-section checks on top of each section's own validate().
  void validate() const;
};

void to_json(nlohmann::json& j, const ExperimentConfig& c);
/// Missing keys keep their defaults; the train section defaults follow its method.
void from_json(const nlohmann::json& j, ExperimentConfig& c);

/// JSON with // and /* */ comments allowed.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

std::filesystem::path cmd_generate(const ExperimentConfig& cfg, const std::filesystem::path& archive_dir);
std::filesystem::path cmd_train(const ExperimentConfig& cfg, const std::filesystem::path& archive_dir,
                                const std::filesystem::path& run_dir);
MetricsReport cmd_evaluate(const std::filesystem::path& run_dir, const std::filesystem::path& archive_dir,
                           const EvalSection& eval, const std::optional<std::filesystem::path>& out_dir = {});
nlohmann::json cmd_traverse(const std::filesystem::path& run_dir, const std::filesystem::path& archive_dir,
                            const EvalSection& eval, const std::filesystem::path& out_dir);
std::string cmd_compare(const std::vector<std::filesystem::path>& run_dirs,
                        const std::optional<std::filesystem::path>& out_dir = {});
nlohmann::json cmd_ablate_gamma(const ExperimentConfig& cfg, const std::filesystem::path& archive_dir,
                                const std::vector<double>& gammas, const std::filesystem::path& out_dir);

/// Entry point of the `arsivae` executable. Exit codes: 0 success,
/// 1 runtime failure or divergence, 2 usage or configuration error.
int run_cli(int argc, char** argv);

}  // namespace arsivae
