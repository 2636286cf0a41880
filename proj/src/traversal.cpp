#include "arsivae/traversal.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "arsivae/errors.hpp"
#include "arsivae/evaluate.hpp"
#include "arsivae/metrics.hpp"
#include "arsivae/random.hpp"

namespace arsivae {

namespace {

constexpr float kBand = 0.15f;

bool in_band(float v, Region r) { return std::abs(v - region_intensity(r)) <= kBand; }

Region classify(float v) {
  if (in_band(v, Region::LeftVentricle)) return Region::LeftVentricle;
  if (in_band(v, Region::Myocardium)) return Region::Myocardium;
  if (in_band(v, Region::RightVentricle)) return Region::RightVentricle;
  return Region::Background;
}

}  // namespace

std::vector<double> linspace(double lo, double hi, int steps) {
  if (steps < 2) throw ContractError("linspace: need at least 2 steps");
  std::vector<double> out(static_cast<size_t>(steps));
  for (int i = 0; i < steps; ++i) out[static_cast<size_t>(i)] = lo + (hi - lo) * i / (steps - 1);
  out.back() = hi;
  return out;
}

TraversalGrid traverse(Autoencoder& model, const std::vector<float>& base_code, int64_t dim, TraversalRange range,
                       int steps) {
  const auto d = model.latent_dim();
  if (static_cast<int64_t>(base_code.size()) != d) throw ContractError("traverse: base code has wrong length");
  if (dim < 0 || dim >= d) throw ContractError("traverse: dim " + std::to_string(dim) + " out of range");
  if (steps < 3) throw ContractError("traverse: steps must be >= 3");
  if (!(range.lo < range.hi)) throw ContractError("traverse: empty range");

  TraversalGrid g;
  g.base_code = base_code;
  g.dim = dim;
  g.values = linspace(range.lo, range.hi, steps);
  auto z = torch::tensor(base_code, torch::kFloat32).unsqueeze(0).repeat({steps, 1});
  z.select(1, dim).copy_(torch::tensor(g.values, torch::kDouble).to(torch::kFloat32));
  torch::NoGradGuard guard;
  g.decoded = model.decode_codes(z).contiguous();
  return g;
}

int64_t measure_decoded_attribute(const torch::Tensor& image, std::string_view attribute_name) {
  const auto ref = attribute_ref(attribute_name);
  if (image.dim() != 3) throw ContractError("measure_decoded_attribute: expected a (C, H, W) image");
  if (ref.channel >= image.size(0)) {
    throw ContractError("measure_decoded_attribute: image has no channel for " + std::string(attribute_name));
  }
  const auto plane = image.select(0, ref.channel).to(torch::kFloat32).contiguous();
  const float* p = plane.data_ptr<float>();
  int64_t count = 0;
  for (int64_t i = 0; i < plane.numel(); ++i) count += classify(p[i]) == ref.region ? 1 : 0;
  return count;
}

void measure_grid(TraversalGrid& grid, std::string_view attribute_name) {
  grid.measured_attribute.clear();
  for (int64_t i = 0; i < grid.decoded.size(0); ++i) {
    grid.measured_attribute.push_back(static_cast<double>(measure_decoded_attribute(grid.decoded[i], attribute_name)));
  }
}

std::vector<std::vector<float>> sample_base_codes(Autoencoder& model, const DatasetArchive& ds, int count,
                                                   uint64_t seed) {
  auto rows = ds.indices(Split::Test);
  if (count < 1 || static_cast<size_t>(count) > rows.size()) {
    throw ContractError("sample_base_codes: count must be in [1, test split size]");
  }
  Xoshiro256 rng(seed);
  shuffle(rows, rng);
  rows.resize(static_cast<size_t>(count));

  const auto all = split_images(ds, Split::Test, model.channels());
  const auto& test = ds.indices(Split::Test);
  std::vector<int64_t> local;
  for (auto r : rows) local.push_back(std::find(test.begin(), test.end(), r) - test.begin());
  torch::NoGradGuard guard;
  const auto mu = model.encode_mean(all.index_select(0, torch::tensor(local, torch::kLong))).contiguous();
  std::vector<std::vector<float>> out;
  for (int64_t i = 0; i < mu.size(0); ++i) {
    const float* p = mu[i].data_ptr<float>();
    out.emplace_back(p, p + mu.size(1));
  }
  return out;
}

MonotonicityResult traversal_monotonicity(Autoencoder& model, const std::vector<std::vector<float>>& bases,
                                          int64_t dim, std::string_view attribute_name, TraversalRange range,
                                          int steps) {
  if (bases.empty()) throw ContractError("traversal_monotonicity: no base codes");
  attribute_ref(attribute_name);
  MonotonicityResult res;
  for (const auto& base : bases) {
    auto grid = traverse(model, base, dim, range, steps);
    measure_grid(grid, attribute_name);
    double rho = 0.0;
    try {
      rho = spearman(grid.values, grid.measured_attribute);
    } catch (const UndefinedMetric&) {
      ++res.undefined;
    }
    res.per_base.push_back(rho);
  }
  double sum = 0.0;
  for (double r : res.per_base) sum += r;
  res.score = sum / static_cast<double>(res.per_base.size());
  return res;
}

void write_gray_png(const std::vector<float>& pixels, int height, int width, const std::filesystem::path& path) {
  if (static_cast<size_t>(height) * static_cast<size_t>(width) != pixels.size()) {
    throw ContractError("write_gray_png: buffer size mismatch");
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
  if (!fp) throw std::runtime_error("cannot open " + path.string() + " for writing");

  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng initialisation failed");
  }
  std::vector<png_byte> bytes(pixels.size());
  for (size_t i = 0; i < pixels.size(); ++i) {
    bytes[i] = static_cast<png_byte>(std::lround(std::clamp(pixels[i], 0.0f, 1.0f) * 255.0f));
  }
  std::vector<png_bytep> rows(static_cast<size_t>(height));
  for (int r = 0; r < height; ++r) rows[static_cast<size_t>(r)] = bytes.data() + static_cast<size_t>(r) * width;

  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng failed writing " + path.string());
  }
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_traversal_png(const std::vector<TraversalGrid>& grids, const std::filesystem::path& path) {
  if (grids.empty()) throw ContractError("write_traversal_png: nothing to draw");
  const auto& first = grids.front().decoded;
  const int64_t steps = first.size(0), c = first.size(1), h = first.size(2), w = first.size(3);
  constexpr int64_t gap = 2;
  const int64_t tile_w = c * w + (c - 1);
  const int64_t width = steps * tile_w + (steps - 1) * gap;
  const int64_t height = static_cast<int64_t>(grids.size()) * h + (static_cast<int64_t>(grids.size()) - 1) * gap;
  std::vector<float> canvas(static_cast<size_t>(width * height), 0.0f);
  for (size_t gi = 0; gi < grids.size(); ++gi) {
    const auto img = grids[gi].decoded.to(torch::kFloat32).contiguous();
    if (img.sizes() != first.sizes()) throw ContractError("write_traversal_png: grids differ in shape");
    const float* p = img.data_ptr<float>();
    for (int64_t s = 0; s < steps; ++s) {
      for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t y = 0; y < h; ++y) {
          for (int64_t x = 0; x < w; ++x) {
            const int64_t row = static_cast<int64_t>(gi) * (h + gap) + y;
            const int64_t col = s * (tile_w + gap) + ch * (w + 1) + x;
            canvas[static_cast<size_t>(row * width + col)] = p[((s * c + ch) * h + y) * w + x];
          }
        }
      }
    }
  }
  write_gray_png(canvas, static_cast<int>(height), static_cast<int>(width), path);
}

nlohmann::json traversal_record(const TraversalGrid& grid, std::string_view attribute_name) {
  double rho = 0.0;
  bool defined = true;
  try {
    rho = spearman(grid.values, grid.measured_attribute);
  } catch (const UndefinedMetric&) {
    defined = false;
  }
  return {{"dim", grid.dim},
          {"attribute", attribute_name},
          {"values", grid.values},
          {"measured", grid.measured_attribute},
          {"base_code", grid.base_code},
          {"spearman", rho},
          {"spearman_defined", defined}};
}

}  // namespace arsivae
