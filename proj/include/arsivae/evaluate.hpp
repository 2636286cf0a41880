#pragma once

#include <string>
#include <vector>

#include <torch/torch.h>
#include <json.hpp>

#include "arsivae/metrics.hpp"
#include "arsivae/model.hpp"
#include "arsivae/synth_data.hpp"

namespace arsivae {

/// SSIM and PFD over both phases and per phase (ED = channel 0, ES = channel 1).
/// Per-phase values are NaN when the images carry a single channel.
struct ReconstructionScores {
  double ssim_all = 0.0, ssim_ed = 0.0, ssim_es = 0.0;
  double pfd_all = 0.0, pfd_ed = 0.0, pfd_es = 0.0;
};

ReconstructionScores reconstruction_scores(const torch::Tensor& x, const torch::Tensor& x_hat);

struct MetricsReport {
  std::string method;
  std::string split;
  int64_t samples = 0;
  ReconstructionScores recon;
  AttributeMetric scc;
  ModularityResult modularity;  // mean is NaN when undefined
  AttributeMetric sap;
  InterpretabilityResult interp;
  std::vector<std::string> attribute_names;
  std::vector<int> regularized_dim_map;
};

void to_json(nlohmann::json& j, const MetricsReport& r);
void from_json(const nlohmann::json& j, MetricsReport& r);

/// Images of one split as a (n, C, H, W) tensor; C follows `channels`.
torch::Tensor split_images(const DatasetArchive& ds, Split split, int64_t channels = kNumPhases);

/// Posterior means of a split next to its raw attributes.
CodesTable build_codes_table(Autoencoder& model, const DatasetArchive& ds, Split split, int regularized_dims,
                             int64_t batch_size = 128);

/// Encodes the split with posterior means, reconstructs from them and
/// computes the reconstruction and latent metrics.
MetricsReport evaluate_model(Autoencoder& model, const DatasetArchive& ds, Split split, int regularized_dims,
                             const std::string& method = "", int64_t batch_size = 128);

struct ComparisonRow {
  std::string label;
  bool regularized = false;
  MetricsReport report;
  std::string dataset_hash;
};

/// Plain-text tables: reconstruction (SSIM/PFD) and interpretability
/// (SCC/Mod./SAP/Interp.), one row per run, with a Reg. column. A warning line
/// heads the output when runs were trained on different datasets.
std::string render_comparison(const std::vector<ComparisonRow>& rows);

}  // namespace arsivae
