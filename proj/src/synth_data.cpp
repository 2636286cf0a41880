#include "arsivae/synth_data.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "arsivae/array_archive.hpp"
#include "arsivae/errors.hpp"
#include "arsivae/random.hpp"

namespace arsivae {

namespace {

constexpr int kMaxAttempts = 64;

bool inside_ellipse(double u, double v, double a, double b) {
  const double p = u / a;
  const double q = v / b;
  return p * p + q * q <= 1.0;
}

// Half extents of an ellipse with semi-axes (a, b) rotated by theta.
std::pair<double, double> rotated_extent(double a, double b, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {std::sqrt(a * a * c * c + b * b * s * s), std::sqrt(a * a * s * s + b * b * c * c)};
}

void check_inside(const Canvas& canvas, double row, double col, double a, double b, double theta,
                  const char* what) {
  const auto [hx, hy] = rotated_extent(a, b, theta);
  if (col - hx < 0.0 || col + hx > canvas.width || row - hy < 0.0 || row + hy > canvas.height) {
    throw ContractError(std::string(what) + " exceeds the canvas");
  }
}

double draw(Xoshiro256& rng, const Range& r) { return r.lo + (r.hi - r.lo) * rng.uniform(); }

void check_range(const Range& r, const char* name, bool positive) {
  if (!std::isfinite(r.lo) || !std::isfinite(r.hi) || r.lo > r.hi) {
    throw InvalidConfig(std::string("variation range '") + name + "' is empty or non-finite");
  }
  if (positive && r.lo <= 0.0) {
    throw InvalidConfig(std::string("variation range '") + name + "' must be strictly positive");
  }
}

uint64_t sample_seed(uint64_t seed, int64_t id, int attempt) {
  return splitmix64(splitmix64(seed) ^ splitmix64(static_cast<uint64_t>(id) * 0x9E3779B97F4A7C15ULL +
                                                  static_cast<uint64_t>(attempt)));
}

}  // namespace

float region_intensity(Region r) {
  switch (r) {
    case Region::LeftVentricle: return 1.0f;
    case Region::Myocardium: return 0.6f;
    case Region::RightVentricle: return 0.8f;
    case Region::Background: return 0.0f;
  }
  return 0.0f;
}

AttributeRef attribute_ref(std::string_view name) {
  if (name == "lv_area_ed") return {Region::LeftVentricle, 0};
  if (name == "lv_area_es") return {Region::LeftVentricle, 1};
  if (name == "rv_area_ed") return {Region::RightVentricle, 0};
  if (name == "rv_area_es") return {Region::RightVentricle, 1};
  if (name == "myo_area_ed") return {Region::Myocardium, 0};
  if (name == "myo_area_es") return {Region::Myocardium, 1};
  throw ContractError("unknown attribute '" + std::string(name) + "'");
}

int attribute_index(std::string_view name) {
  const auto& names = attribute_names();
  for (int i = 0; i < kNumAttributes; ++i) {
    if (names[static_cast<size_t>(i)] == name) return i;
  }
  throw ContractError("unknown attribute '" + std::string(name) + "'");
}

void validate_shape_spec(const ShapeSpec& s, const Canvas& canvas) {
  const auto positive = [](const SemiAxes& ax) { return ax.a > 0.0 && ax.b > 0.0; };
  if (!positive(s.lv_ed) || !positive(s.lv_es) || !positive(s.rv_ed) || !positive(s.rv_es)) {
    throw InvalidConfig("semi-axes must be positive");
  }
  if (s.lv_es.a > s.lv_ed.a || s.lv_es.b > s.lv_ed.b || s.rv_es.a > s.rv_ed.a || s.rv_es.b > s.rv_ed.b) {
    throw InvalidConfig("ES semi-axes must not exceed ED semi-axes");
  }
  if (!(s.myo_thickness_ed > 0.0) || !(s.myo_thickness_es > 0.0)) {
    throw InvalidConfig("myocardial thickness must be positive");
  }
  if (!(s.rv_offset > 0.0)) throw InvalidConfig("rv_offset must place the RV right of the LV");

  const double t = std::max(s.myo_thickness_ed, s.myo_thickness_es);
  check_inside(canvas, s.center_row, s.center_col, s.lv_ed.a + t, s.lv_ed.b + t, s.rotation, "myocardium");
  const double rv_row = s.center_row + s.rv_offset * std::sin(s.rotation);
  const double rv_col = s.center_col + s.rv_offset * std::cos(s.rotation);
  check_inside(canvas, rv_row, rv_col, s.rv_ed.a, s.rv_ed.b, s.rotation, "right ventricle");
}

VariationConfig VariationConfig::for_canvas(const Canvas& canvas) {
  VariationConfig c;
  const double sx = canvas.width / 64.0;
  const double sy = canvas.height / 64.0;
  const double sm = std::min(sx, sy);
  const auto scale = [](Range r, double f) { return Range{r.lo * f, r.hi * f}; };
  c.lv_a = scale(c.lv_a, sm);
  c.lv_b = scale(c.lv_b, sm);
  c.myo_thickness_ed = scale(c.myo_thickness_ed, sm);
  c.myo_thickness_es = scale(c.myo_thickness_es, sm);
  c.rv_a = scale(c.rv_a, sm);
  c.rv_b = scale(c.rv_b, sm);
  c.rv_offset = scale(c.rv_offset, sm);
  c.center_row = scale(c.center_row, sy);
  c.center_col = scale(c.center_col, sx);
  return c;
}

void VariationConfig::validate() const {
  check_range(lv_a, "lv_a", true);
  check_range(lv_b, "lv_b", true);
  check_range(lv_es_scale, "lv_es_scale", true);
  check_range(myo_thickness_ed, "myo_thickness_ed", true);
  check_range(myo_thickness_es, "myo_thickness_es", true);
  check_range(rv_a, "rv_a", true);
  check_range(rv_b, "rv_b", true);
  check_range(rv_es_scale, "rv_es_scale", true);
  check_range(center_row, "center_row", false);
  check_range(center_col, "center_col", false);
  check_range(rv_offset, "rv_offset", true);
  check_range(rotation, "rotation", false);
  if (lv_es_scale.hi > 1.0 || rv_es_scale.hi > 1.0) {
    throw InvalidConfig("ES contraction scale above 1 would make ES larger than ED");
  }
}

ShapeSpec sample_shape_spec(uint64_t rng_seed, const VariationConfig& config) {
  config.validate();
  Xoshiro256 rng(rng_seed);
  ShapeSpec s;
  s.lv_ed = {draw(rng, config.lv_a), draw(rng, config.lv_b)};
  const double lv_scale = draw(rng, config.lv_es_scale);
  s.lv_es = {s.lv_ed.a * lv_scale, s.lv_ed.b * lv_scale};
  s.myo_thickness_ed = draw(rng, config.myo_thickness_ed);
  s.myo_thickness_es = draw(rng, config.myo_thickness_es);
  s.rv_ed = {draw(rng, config.rv_a), draw(rng, config.rv_b)};
  const double rv_scale = draw(rng, config.rv_es_scale);
  s.rv_es = {s.rv_ed.a * rv_scale, s.rv_ed.b * rv_scale};
  s.center_row = draw(rng, config.center_row);
  s.center_col = draw(rng, config.center_col);
  s.rv_offset = draw(rng, config.rv_offset);
  s.rotation = draw(rng, config.rotation);
  return s;
}

SampleRecord rasterize(const ShapeSpec& spec, const Canvas& canvas, int64_t id) {
  if (canvas.height < 32 || canvas.width < 32) throw ContractError("canvas must be at least 32x32");
  validate_shape_spec(spec, canvas);

  SampleRecord rec;
  rec.id = id;
  rec.spec = spec;
  rec.canvas = canvas;
  const size_t plane = static_cast<size_t>(canvas.height) * static_cast<size_t>(canvas.width);
  rec.image.assign(plane * kNumPhases, 0.0f);
  rec.labels.assign(plane * kNumPhases, static_cast<uint8_t>(Region::Background));

  const double c = std::cos(spec.rotation);
  const double s = std::sin(spec.rotation);
  for (int phase = 0; phase < kNumPhases; ++phase) {
    const SemiAxes lv = phase == 0 ? spec.lv_ed : spec.lv_es;
    const SemiAxes rv = phase == 0 ? spec.rv_ed : spec.rv_es;
    const double t = phase == 0 ? spec.myo_thickness_ed : spec.myo_thickness_es;
    uint8_t* labels = rec.labels.data() + plane * static_cast<size_t>(phase);
    for (int r = 0; r < canvas.height; ++r) {
      for (int col = 0; col < canvas.width; ++col) {
        const double dx = col + 0.5 - spec.center_col;
        const double dy = r + 0.5 - spec.center_row;
        const double u = c * dx + s * dy;
        const double v = -s * dx + c * dy;
        Region region = Region::Background;
        // Drawing precedence: LV over myocardium over RV.
        if (inside_ellipse(u, v, lv.a, lv.b)) {
          region = Region::LeftVentricle;
        } else if (inside_ellipse(u, v, lv.a + t, lv.b + t)) {
          region = Region::Myocardium;
        } else if (inside_ellipse(u - spec.rv_offset, v, rv.a, rv.b)) {
          region = Region::RightVentricle;
        }
        labels[static_cast<size_t>(r) * static_cast<size_t>(canvas.width) + static_cast<size_t>(col)] =
            static_cast<uint8_t>(region);
      }
    }
  }
  for (size_t i = 0; i < rec.labels.size(); ++i) {
    rec.image[i] = region_intensity(static_cast<Region>(rec.labels[i]));
  }
  const auto& names = attribute_names();
  for (int j = 0; j < kNumAttributes; ++j) {
    const auto ref = attribute_ref(names[static_cast<size_t>(j)]);
    rec.attributes[static_cast<size_t>(j)] =
        static_cast<double>(count_region(rec.labels, canvas, ref.channel, ref.region));
  }
  return rec;
}

int64_t count_region(const std::vector<uint8_t>& labels, const Canvas& canvas, int channel, Region region) {
  const size_t plane = static_cast<size_t>(canvas.height) * static_cast<size_t>(canvas.width);
  if (channel < 0 || labels.size() < plane * static_cast<size_t>(channel + 1)) {
    throw ContractError("label map has no channel " + std::to_string(channel));
  }
  const auto begin = labels.begin() + static_cast<std::ptrdiff_t>(plane * static_cast<size_t>(channel));
  return std::count(begin, begin + static_cast<std::ptrdiff_t>(plane), static_cast<uint8_t>(region));
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::Train;
  if (name == "val") return Split::Val;
  if (name == "test") return Split::Test;
  throw InvalidConfig("unknown split '" + std::string(name) + "'");
}

std::string_view split_name(Split s) {
  switch (s) {
    case Split::Train: return "train";
    case Split::Val: return "val";
    case Split::Test: return "test";
  }
  return "?";
}

const std::vector<int64_t>& DatasetArchive::indices(Split s) const {
  switch (s) {
    case Split::Train: return train;
    case Split::Val: return val;
    case Split::Test: return test;
  }
  return train;
}

std::vector<float> DatasetArchive::normalized_attributes() const {
  std::vector<float> out(attributes.size());
  for (size_t i = 0; i < attributes.size(); ++i) {
    const size_t j = i % kNumAttributes;
    const float span = norm_max[j] - norm_min[j];
    out[i] = span > 0.0f ? (attributes[i] - norm_min[j]) / span : 0.0f;
  }
  return out;
}

std::vector<SampleRecord> generate_samples(int64_t first_id, int64_t count, uint64_t seed,
                                           const Canvas& canvas, const VariationConfig& config) {
  config.validate();
  std::vector<SampleRecord> out;
  out.reserve(static_cast<size_t>(std::max<int64_t>(count, 0)));
  for (int64_t id = first_id; id < first_id + count; ++id) {
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxAttempts && !accepted; ++attempt) {
      const ShapeSpec spec = sample_shape_spec(sample_seed(seed, id, attempt), config);
      SampleRecord rec;
      try {
        rec = rasterize(spec, canvas, id);
      } catch (const ContractError&) {
        continue;
      }
      const auto& a = rec.attributes;
      const bool ordered = a[0] >= a[1] && a[2] >= a[3];
      const bool populated = std::all_of(a.begin(), a.end(), [](double v) { return v > 0.0; });
      if (ordered && populated) {
        out.push_back(std::move(rec));
        accepted = true;
      }
    }
    if (!accepted) {
      throw InvalidConfig("variation config cannot produce a valid sample for id " + std::to_string(id));
    }
  }
  return out;
}

DatasetArchive generate_dataset(int64_t n, uint64_t seed, const Canvas& canvas,
                                const SplitFractions& fractions, const VariationConfig* config) {
  if (n < 10) throw InvalidConfig("dataset needs at least 10 samples");
  const double fsum = fractions.train + fractions.val + fractions.test;
  if (std::abs(fsum - 1.0) > 1e-9 || fractions.train < 0 || fractions.val < 0 || fractions.test < 0) {
    throw InvalidConfig("split fractions must be non-negative and sum to 1");
  }
  const int64_t n_val = std::llround(static_cast<double>(n) * fractions.val);
  const int64_t n_test = std::llround(static_cast<double>(n) * fractions.test);
  const int64_t n_train = n - n_val - n_test;
  if (n_train < 1 || n_val < 1 || n_test < 1) {
    throw InvalidConfig("dataset too small to populate train/val/test splits");
  }

  const VariationConfig cfg = config ? *config : VariationConfig::for_canvas(canvas);
  const auto samples = generate_samples(0, n, seed, canvas, cfg);

  DatasetArchive ds;
  ds.n = n;
  ds.canvas = canvas;
  ds.seed = seed;
  ds.names.assign(attribute_names().begin(), attribute_names().end());
  const size_t per_image = static_cast<size_t>(ds.pixels_per_image());
  ds.images.resize(per_image * static_cast<size_t>(n));
  ds.attributes.resize(static_cast<size_t>(n) * kNumAttributes);
  for (size_t i = 0; i < samples.size(); ++i) {
    std::copy(samples[i].image.begin(), samples[i].image.end(), ds.images.begin() + static_cast<std::ptrdiff_t>(i * per_image));
    for (size_t j = 0; j < kNumAttributes; ++j) {
      ds.attributes[i * kNumAttributes + j] = static_cast<float>(samples[i].attributes[j]);
    }
  }

  std::vector<int64_t> perm(static_cast<size_t>(n));
  std::iota(perm.begin(), perm.end(), int64_t{0});
  Xoshiro256 rng(splitmix64(seed ^ 0x5851F42D4C957F2DULL));
  shuffle(perm, rng);
  ds.train.assign(perm.begin(), perm.begin() + n_train);
  ds.val.assign(perm.begin() + n_train, perm.begin() + n_train + n_val);
  ds.test.assign(perm.begin() + n_train + n_val, perm.end());
  std::sort(ds.train.begin(), ds.train.end());
  std::sort(ds.val.begin(), ds.val.end());
  std::sort(ds.test.begin(), ds.test.end());

  for (size_t j = 0; j < kNumAttributes; ++j) {
    float lo = std::numeric_limits<float>::max();
    float hi = std::numeric_limits<float>::lowest();
    for (auto i : ds.train) {
      const float v = ds.attributes[static_cast<size_t>(i) * kNumAttributes + j];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    ds.norm_min[j] = lo;
    ds.norm_max[j] = hi;
  }
  return ds;
}

void save_dataset(const DatasetArchive& ds, const std::filesystem::path& dir) {
  ArrayArchive ar;
  ar.arrays.push_back({"images", {ds.n, kNumPhases, ds.canvas.height, ds.canvas.width}, ds.images});
  ar.arrays.push_back({"attributes", {ds.n, kNumAttributes}, ds.attributes});
  ar.metadata = {{"kind", "dataset"},
                 {"n", ds.n},
                 {"canvas", {ds.canvas.height, ds.canvas.width}},
                 {"attribute_names", ds.names},
                 {"splits", {{"train", ds.train}, {"val", ds.val}, {"test", ds.test}}},
                 {"seed", ds.seed},
                 {"generator_version", ds.generator_version},
                 {"normalization", {{"min", ds.norm_min}, {"max", ds.norm_max}}}};
  save_array_archive(ar, dir);
}

DatasetArchive load_dataset(const std::filesystem::path& dir) {
  const ArrayArchive ar = load_array_archive(dir);
  DatasetArchive ds;
  try {
    const auto& m = ar.metadata;
    if (m.value("kind", "") != "dataset") throw CorruptArchive("archive is not a dataset");
    ds.n = m.at("n").get<int64_t>();
    const auto canvas = m.at("canvas").get<std::vector<int>>();
    if (canvas.size() != 2) throw CorruptArchive("canvas must have two extents");
    ds.canvas = {canvas[0], canvas[1]};
    ds.names = m.at("attribute_names").get<std::vector<std::string>>();
    ds.train = m.at("splits").at("train").get<std::vector<int64_t>>();
    ds.val = m.at("splits").at("val").get<std::vector<int64_t>>();
    ds.test = m.at("splits").at("test").get<std::vector<int64_t>>();
    ds.seed = m.at("seed").get<uint64_t>();
    ds.generator_version = m.at("generator_version").get<std::string>();
    ds.norm_min = m.at("normalization").at("min").get<std::array<float, kNumAttributes>>();
    ds.norm_max = m.at("normalization").at("max").get<std::array<float, kNumAttributes>>();
  } catch (const nlohmann::json::exception& e) {
    throw CorruptArchive(std::string("malformed dataset metadata: ") + e.what());
  }

  const auto& images = ar.at("images");
  const auto& attrs = ar.at("attributes");
  const std::vector<int64_t> want_images{ds.n, kNumPhases, ds.canvas.height, ds.canvas.width};
  const std::vector<int64_t> want_attrs{ds.n, kNumAttributes};
  if (images.shape != want_images || attrs.shape != want_attrs ||
      ds.names.size() != static_cast<size_t>(kNumAttributes)) {
    throw CorruptArchive("dataset arrays disagree with metadata");
  }
  std::vector<char> seen(static_cast<size_t>(ds.n), 0);
  for (const auto* split : {&ds.train, &ds.val, &ds.test}) {
    for (auto i : *split) {
      if (i < 0 || i >= ds.n || seen[static_cast<size_t>(i)]) throw CorruptArchive("splits overlap or leave range");
      seen[static_cast<size_t>(i)] = 1;
    }
  }
  if (std::find(seen.begin(), seen.end(), 0) != seen.end()) throw CorruptArchive("splits do not cover all samples");
  ds.images = images.data;
  ds.attributes = attrs.data;
  return ds;
}

}  // namespace arsivae
