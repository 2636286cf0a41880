#include "doctest_torch.hpp"

#include <cmath>
#include <fstream>
#include <numbers>

#include <json.hpp>

#include "arsivae/array_archive.hpp"
#include "arsivae/errors.hpp"
#include "arsivae/synth_data.hpp"
#include "helpers.hpp"

using namespace arsivae;

namespace {

ShapeSpec reference_spec() {
  ShapeSpec s;
  s.lv_ed = {10, 6};
  s.lv_es = {7, 4};
  s.myo_thickness_ed = 3;
  s.myo_thickness_es = 3.5;
  s.rv_ed = {7, 10};
  s.rv_es = {5, 8};
  s.center_row = 32;
  s.center_col = 24;
  s.rv_offset = 19;
  s.rotation = 0;
  return s;
}

VariationConfig collapsed(const ShapeSpec& s) {
  VariationConfig c;
  c.lv_a = {s.lv_ed.a, s.lv_ed.a};
  c.lv_b = {s.lv_ed.b, s.lv_ed.b};
  c.lv_es_scale = {0.7, 0.7};
  c.myo_thickness_ed = {s.myo_thickness_ed, s.myo_thickness_ed};
  c.myo_thickness_es = {s.myo_thickness_es, s.myo_thickness_es};
  c.rv_a = {s.rv_ed.a, s.rv_ed.a};
  c.rv_b = {s.rv_ed.b, s.rv_ed.b};
  c.rv_es_scale = {0.5, 0.5};
  c.center_row = {s.center_row, s.center_row};
  c.center_col = {s.center_col, s.center_col};
  c.rv_offset = {s.rv_offset, s.rv_offset};
  c.rotation = {s.rotation, s.rotation};
  return c;
}

// Independent count of pixel centres inside an axis-aligned ellipse.
int64_t ellipse_pixels(double cr, double cc, double a, double b, int h, int w) {
  int64_t n = 0;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const double x = (c + 0.5 - cc) / a;
      const double y = (r + 0.5 - cr) / b;
      if (x * x + y * y <= 1.0) ++n;
    }
  }
  return n;
}

}  // namespace

TEST_SUITE("synth_data") {
  TEST_CASE("zero-width ranges reproduce the configured spec") {
    const auto want = reference_spec();
    const auto got = sample_shape_spec(0, collapsed(want));
    CHECK(got.lv_ed.a == want.lv_ed.a);
    CHECK(got.lv_ed.b == want.lv_ed.b);
    CHECK(got.lv_es.a == doctest::Approx(want.lv_ed.a * 0.7));
    CHECK(got.rv_es.b == doctest::Approx(want.rv_ed.b * 0.5));
    CHECK(got.center_row == want.center_row);
    CHECK(got.rv_offset == want.rv_offset);
    CHECK(got.rotation == want.rotation);
  }

  TEST_CASE("sampling is a pure function of the seed") {
    const VariationConfig cfg;
    CHECK(sample_shape_spec(1, cfg) == sample_shape_spec(1, cfg));
    const auto a = sample_shape_spec(1, cfg);
    const auto b = sample_shape_spec(2, cfg);
    CHECK_FALSE(a == b);
    CHECK(a.lv_ed.a != b.lv_ed.a);
    CHECK(a.center_col != b.center_col);
  }

  TEST_CASE("ranges that break ED >= ES are rejected") {
    VariationConfig cfg;
    cfg.lv_es_scale = {0.9, 1.2};
    CHECK_THROWS_AS(sample_shape_spec(0, cfg), InvalidConfig);
    cfg = VariationConfig{};
    cfg.lv_a = {5.0, 4.0};
    CHECK_THROWS_AS(sample_shape_spec(0, cfg), InvalidConfig);
  }

  TEST_CASE("LV area matches an independent pixel count and the continuum area") {
    auto spec = reference_spec();
    const auto rec = rasterize(spec, Canvas{64, 64});
    const double area = rec.attributes[static_cast<size_t>(attribute_index("lv_area_ed"))];
    CHECK(area == static_cast<double>(ellipse_pixels(32, 24, 10, 6, 64, 64)));
    CHECK(std::abs(area - std::numbers::pi * 60.0) / (std::numbers::pi * 60.0) < 0.05);
    CHECK(rec.attributes[static_cast<size_t>(attribute_index("lv_area_es"))] <
          rec.attributes[static_cast<size_t>(attribute_index("lv_area_ed"))]);
  }

  TEST_CASE("rasterization is deterministic and self-consistent") {
    const auto spec = reference_spec();
    const auto a = rasterize(spec, Canvas{64, 64}, 3);
    const auto b = rasterize(spec, Canvas{64, 64}, 3);
    CHECK(a.image == b.image);
    CHECK(a.attributes == b.attributes);
    for (const auto& name : attribute_names()) {
      const auto ref = attribute_ref(name);
      CHECK(a.attributes[static_cast<size_t>(attribute_index(name))] ==
            static_cast<double>(count_region(a.labels, a.canvas, ref.channel, ref.region)));
    }
    for (size_t i = 0; i < a.image.size(); ++i) {
      CHECK(a.image[i] == region_intensity(static_cast<Region>(a.labels[i])));
    }
  }

  TEST_CASE("out-of-canvas and undersized canvases are errors") {
    auto spec = reference_spec();
    spec.center_col = 5;
    CHECK_THROWS_AS(rasterize(spec, Canvas{64, 64}), ContractError);
    CHECK_THROWS_AS(rasterize(reference_spec(), Canvas{16, 16}), ContractError);
    CHECK_THROWS_AS(attribute_ref("lv_volume"), ContractError);
  }

  TEST_CASE("split sizes follow the fractions with remainder to train") {
    auto ds = generate_dataset(100, 7, Canvas{64, 64}, {0.7, 0.15, 0.15});
    CHECK(ds.train.size() == 70);
    CHECK(ds.val.size() == 15);
    CHECK(ds.test.size() == 15);
    ds = generate_dataset(10, 7, Canvas{64, 64}, {0.8, 0.1, 0.1});
    CHECK(ds.train.size() == 8);
    CHECK(ds.val.size() == 1);
    CHECK(ds.test.size() == 1);
    std::vector<int> seen(10, 0);
    for (auto* v : {&ds.train, &ds.val, &ds.test}) {
      for (auto i : *v) seen[static_cast<size_t>(i)]++;
    }
    CHECK(std::all_of(seen.begin(), seen.end(), [](int c) { return c == 1; }));
    CHECK_THROWS_AS(generate_dataset(9, 0), InvalidConfig);
    CHECK_THROWS_AS(generate_dataset(50, 0, Canvas{64, 64}, {0.7, 0.2, 0.2}), InvalidConfig);
  }

  TEST_CASE("equal (n, seed) give byte-identical archives") {
    testing::TempDir tmp("synth");
    save_dataset(generate_dataset(40, 11), tmp / "a");
    save_dataset(generate_dataset(40, 11), tmp / "b");
    save_dataset(generate_dataset(40, 12), tmp / "c");
    CHECK(archive_content_hash(tmp / "a") == archive_content_hash(tmp / "b"));
    CHECK(archive_content_hash(tmp / "a") != archive_content_hash(tmp / "c"));
  }

  TEST_CASE("disjoint id ranges generated separately match one pass") {
    const auto cfg = VariationConfig::for_canvas(Canvas{64, 64});
    const auto whole = generate_samples(0, 12, 5, Canvas{64, 64}, cfg);
    const auto first = generate_samples(0, 5, 5, Canvas{64, 64}, cfg);
    const auto second = generate_samples(5, 7, 5, Canvas{64, 64}, cfg);
    for (size_t i = 0; i < 5; ++i) CHECK(whole[i].image == first[i].image);
    for (size_t i = 0; i < 7; ++i) CHECK(whole[5 + i].image == second[i].image);
  }

  TEST_CASE("1000-sample dataset: varied attributes, ED >= ES, exact counts") {
    const auto ds = generate_dataset(1000, 3);
    for (int j = 0; j < kNumAttributes; ++j) {
      double s = 0, s2 = 0;
      for (int64_t i = 0; i < ds.n; ++i) {
        const double v = ds.attributes[static_cast<size_t>(i * kNumAttributes + j)];
        s += v;
        s2 += v * v;
      }
      const double var = s2 / 1000.0 - (s / 1000.0) * (s / 1000.0);
      CHECK(var > 1.0);
    }
    const auto plane = static_cast<size_t>(ds.canvas.height * ds.canvas.width);
    for (int64_t i = 0; i < ds.n; ++i) {
      const float* a = ds.attributes.data() + i * kNumAttributes;
      CHECK(a[0] >= a[1]);
      CHECK(a[2] >= a[3]);
      if (i % 97 == 0) {
        // Recount from intensities: each region has its own gray level.
        for (const auto& name : attribute_names()) {
          const auto ref = attribute_ref(name);
          const float* px = ds.images.data() + static_cast<size_t>(i) * 2 * plane + ref.channel * plane;
          int64_t count = 0;
          for (size_t p = 0; p < plane; ++p) count += px[p] == region_intensity(ref.region) ? 1 : 0;
          CHECK(a[attribute_index(name)] == static_cast<float>(count));
        }
      }
    }
    const auto norm = ds.normalized_attributes();
    for (auto i : ds.train) {
      for (int j = 0; j < kNumAttributes; ++j) {
        const float v = norm[static_cast<size_t>(i * kNumAttributes + j)];
        CHECK(v >= 0.0f);
        CHECK(v <= 1.0f);
      }
    }
  }
}

TEST_SUITE("array_archive") {
  TEST_CASE("dataset round-trip is bit-exact") {
    testing::TempDir tmp("archive");
    const auto ds = generate_dataset(10, 21);
    save_dataset(ds, tmp / "ds");
    const auto back = load_dataset(tmp / "ds");
    CHECK(back.n == ds.n);
    CHECK(back.images == ds.images);
    CHECK(back.attributes == ds.attributes);
    CHECK(back.names == ds.names);
    CHECK(back.train == ds.train);
    CHECK(back.val == ds.val);
    CHECK(back.test == ds.test);
    CHECK(back.seed == ds.seed);
    CHECK(back.generator_version == ds.generator_version);
    CHECK(back.norm_min == ds.norm_min);
    CHECK(back.norm_max == ds.norm_max);
  }

  TEST_CASE("wrong shape in the manifest is a corrupt archive") {
    testing::TempDir tmp("archive");
    save_dataset(generate_dataset(10, 1), tmp / "ds");
    const auto mpath = tmp / "ds" / "manifest.json";
    nlohmann::json m;
    std::ifstream(mpath) >> m;
    m["arrays"][0]["shape"][0] = 11;
    std::ofstream(mpath, std::ios::trunc) << m.dump();
    CHECK_THROWS_AS(load_dataset(tmp / "ds"), CorruptArchive);
  }

  TEST_CASE("truncated payload is a corrupt archive") {
    testing::TempDir tmp("archive");
    save_dataset(generate_dataset(10, 1), tmp / "ds");
    const auto blob = tmp / "ds" / "images.f32";
    std::filesystem::resize_file(blob, std::filesystem::file_size(blob) - 4);
    CHECK_THROWS_AS(load_dataset(tmp / "ds"), CorruptArchive);
  }

  TEST_CASE("flipped payload byte fails the checksum") {
    testing::TempDir tmp("archive");
    save_dataset(generate_dataset(10, 1), tmp / "ds");
    std::fstream f(tmp / "ds" / "attributes.f32", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(5);
    f.put('\x7f');
    f.close();
    CHECK_THROWS_AS(load_dataset(tmp / "ds"), CorruptArchive);
  }

  TEST_CASE("malformed manifest and missing directory") {
    testing::TempDir tmp("archive");
    save_dataset(generate_dataset(10, 1), tmp / "ds");
    std::ofstream(tmp / "ds" / "manifest.json", std::ios::trunc) << "{ not json";
    CHECK_THROWS_AS(load_dataset(tmp / "ds"), CorruptArchive);
    CHECK_THROWS(load_dataset(tmp / "nowhere"));
  }

  TEST_CASE("sha256 known answer") {
    const std::string abc = "abc";
    CHECK(sha256_hex(std::as_bytes(std::span(abc.data(), abc.size()))) ==
          "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  }
}
