#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <torch/torch.h>
#include <json.hpp>

#include "arsivae/model.hpp"
#include "arsivae/synth_data.hpp"

namespace arsivae {

struct TraversalRange {
  double lo = -3.0;
  double hi = 3.0;
};

inline constexpr int kDefaultTraversalSteps = 9;

/// `steps` equally spaced values from lo to hi inclusive.
std::vector<double> linspace(double lo, double hi, int steps);

struct TraversalGrid {
  std::vector<float> base_code;
  int64_t dim = 0;
  std::vector<double> values;
  torch::Tensor decoded;  // (steps, C, H, W)
  std::vector<double> measured_attribute;  // filled by measure_grid
};

/// Decodes `base_code` with coordinate `dim` replaced by each traversal value.
/// Throws ContractError for dim out of range, steps < 3 or lo >= hi.
TraversalGrid traverse(Autoencoder& model, const std::vector<float>& base_code, int64_t dim,
                       TraversalRange range = {}, int steps = kDefaultTraversalSteps);

/// Re-segments one decoded channel by the generator's gray levels (+-0.15,
/// overlaps resolved LV > myocardium > RV) and counts the pixels of the
/// attribute's region. `image` is (C, H, W) with C = 2, or C = 1 for ED-only
/// attributes.
int64_t measure_decoded_attribute(const torch::Tensor& image, std::string_view attribute_name);

/// Fills grid.measured_attribute.
void measure_grid(TraversalGrid& grid, std::string_view attribute_name);

/// Posterior means of `count` test samples chosen with `seed`.
std::vector<std::vector<float>> sample_base_codes(Autoencoder& model, const DatasetArchive& ds, int count,
                                                   uint64_t seed);

struct MonotonicityResult {
  double score = 0.0;             // mean Spearman over bases
  std::vector<double> per_base;   // 0 where undefined
  int undefined = 0;              // bases whose measured areas were constant
};

/// Mean over bases of spearman(values, measured area). Constant measurements
/// count as 0 and are tallied in `undefined`.
MonotonicityResult traversal_monotonicity(Autoencoder& model, const std::vector<std::vector<float>>& bases,
                                          int64_t dim, std::string_view attribute_name, TraversalRange range = {},
                                          int steps = kDefaultTraversalSteps);

/// One strip per grid (grids become rows, steps become columns; channels sit
/// side by side inside a tile), written as 8-bit grayscale PNG.
void write_traversal_png(const std::vector<TraversalGrid>& rows, const std::filesystem::path& path);

/// 8-bit grayscale PNG of a row-major H x W buffer with values in [0, 1].
void write_gray_png(const std::vector<float>& pixels, int height, int width, const std::filesystem::path& path);

nlohmann::json traversal_record(const TraversalGrid& grid, std::string_view attribute_name);

}  // namespace arsivae
