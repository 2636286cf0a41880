#pragma once

// Synthetic two-phase "cardiac-like" shapes: an elliptical LV cavity wrapped in
// a myocardial ring, with an RV blob to its right. Channel 0 is the ED phase,
// channel 1 the ES phase. Attributes are exact pixel counts per region.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace arsivae {

inline constexpr int kNumAttributes = 6;
inline constexpr int kNumPhases = 2;
inline constexpr const char* kGeneratorVersion = "synth-shapes/1";

/// Attribute order; latent dims 0..5 are regularized in this order.
inline const std::array<std::string, kNumAttributes>& attribute_names() {
  static const std::array<std::string, kNumAttributes> names = {
      "lv_area_ed", "lv_area_es", "rv_area_ed", "rv_area_es", "myo_area_ed", "myo_area_es"};
  return names;
}

enum class Region : uint8_t { Background = 0, LeftVentricle = 1, Myocardium = 2, RightVentricle = 3 };

/// Gray level used for each region when rasterizing.
float region_intensity(Region r);

struct AttributeRef {
  Region region;
  int channel;  // 0 = ED, 1 = ES
};

/// Throws ContractError for unknown names.
AttributeRef attribute_ref(std::string_view name);
int attribute_index(std::string_view name);

struct Canvas {
  int height = 64;
  int width = 64;
};

struct SemiAxes {
  double a = 0.0;  // horizontal
  double b = 0.0;  // vertical
  bool operator==(const SemiAxes&) const = default;
};

struct ShapeSpec {
  SemiAxes lv_ed, lv_es;
  double myo_thickness_ed = 0.0;
  double myo_thickness_es = 0.0;
  SemiAxes rv_ed, rv_es;
  double center_row = 0.0;
  double center_col = 0.0;
  double rv_offset = 0.0;  // RV centre = LV centre + rv_offset along the (rotated) horizontal axis
  double rotation = 0.0;   // radians, about the LV centre

  bool operator==(const ShapeSpec&) const = default;
};

/// Throws InvalidConfig if a ShapeSpec invariant is broken and ContractError
/// if the shapes leave the canvas.
void validate_shape_spec(const ShapeSpec& spec, const Canvas& canvas);

struct Range {
  double lo = 0.0;
  double hi = 0.0;
};

/// Per-field sampling ranges. ES axes are drawn as a contraction factor of the
/// ED axes so the ES <= ED invariant holds structurally.
struct VariationConfig {
  Range lv_a{7.0, 12.0};
  Range lv_b{6.0, 11.0};
  Range lv_es_scale{0.55, 0.85};
  Range myo_thickness_ed{2.0, 4.0};
  Range myo_thickness_es{2.5, 5.0};
  Range rv_a{6.0, 10.0};
  Range rv_b{8.0, 14.0};
  Range rv_es_scale{0.6, 0.9};
  Range center_row{30.0, 34.0};
  Range center_col{24.0, 28.0};
  Range rv_offset{17.0, 21.0};
  Range rotation{-0.15, 0.15};

  /// Ranges scaled from the 64x64 defaults to another canvas size.
  static VariationConfig for_canvas(const Canvas& canvas);
  void validate() const;
};

ShapeSpec sample_shape_spec(uint64_t rng_seed, const VariationConfig& config);

struct SampleRecord {
  int64_t id = 0;
  ShapeSpec spec;
  Canvas canvas;
  std::vector<float> image;     // kNumPhases x H x W
  std::vector<uint8_t> labels;  // Region per pixel, same layout as image
  std::array<double, kNumAttributes> attributes{};
};

/// Canvas must be at least 32x32.
SampleRecord rasterize(const ShapeSpec& spec, const Canvas& canvas, int64_t id = 0);

/// Pixel count of `region` in `channel` of a label map.
int64_t count_region(const std::vector<uint8_t>& labels, const Canvas& canvas, int channel, Region region);

struct SplitFractions {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
};

enum class Split { Train, Val, Test };
Split parse_split(std::string_view name);
std::string_view split_name(Split s);

struct DatasetArchive {
  int64_t n = 0;
  Canvas canvas;
  std::vector<float> images;      // n x 2 x H x W
  std::vector<float> attributes;  // n x 6, raw pixel counts
  std::vector<std::string> names;
  std::vector<int64_t> train, val, test;
  uint64_t seed = 0;
  std::string generator_version = kGeneratorVersion;
  std::array<float, kNumAttributes> norm_min{};  // over the training split
  std::array<float, kNumAttributes> norm_max{};

  const std::vector<int64_t>& indices(Split s) const;
  /// Attributes min-max scaled with the stored constants.
  std::vector<float> normalized_attributes() const;
  int64_t pixels_per_image() const { return int64_t{kNumPhases} * canvas.height * canvas.width; }
};

/// Generates samples [first_id, first_id + count). Each sample depends only on
/// (seed, id), so disjoint id ranges may be produced by independent workers.
std::vector<SampleRecord> generate_samples(int64_t first_id, int64_t count, uint64_t seed,
                                           const Canvas& canvas, const VariationConfig& config);

DatasetArchive generate_dataset(int64_t n, uint64_t seed, const Canvas& canvas = {},
                                const SplitFractions& fractions = {},
                                const VariationConfig* config = nullptr);

void save_dataset(const DatasetArchive& archive, const std::filesystem::path& dir);
DatasetArchive load_dataset(const std::filesystem::path& dir);

}  // namespace arsivae
