#include "doctest_torch.hpp"

#include <fstream>
#include <sstream>

#include "arsivae/errors.hpp"
#include "arsivae/trainer.hpp"
#include "helpers.hpp"

using namespace arsivae;
namespace fs = std::filesystem;

namespace {

// 80 samples on a 32x32 canvas: 64 train / 8 val / 8 test.
const DatasetArchive& small_data() {
  static const DatasetArchive ds = generate_dataset(80, 4, Canvas{32, 32}, {0.8, 0.1, 0.1});
  return ds;
}

ModelConfig tiny_model() {
  ModelConfig c;
  c.latent_dim = 8;
  c.image_size = 32;
  c.base_width = 2;
  c.num_regularized_dims = 6;
  return c;
}

TrainConfig quick(Method m, int epochs = 1) {
  auto c = TrainConfig::defaults_for(m);
  c.epochs = epochs;
  c.patience = std::max(epochs, 1);
  c.batch_size = 16;
  c.seed = 3;
  c.weights.alpha_pl = 0.0;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void check_same_trajectory(const TrainState& a, const TrainState& b) {
  REQUIRE(a.step_losses.size() == b.step_losses.size());
  for (size_t i = 0; i < a.step_losses.size(); ++i) {
    const auto& x = a.step_losses[i];
    const auto& y = b.step_losses[i];
    CHECK(std::abs(x.encoder_total - y.encoder_total) <= 1e-6);
    CHECK(std::abs(x.decoder_total - y.decoder_total) <= 1e-6);
    CHECK(std::abs(x.recon_real - y.recon_real) <= 1e-6);
    CHECK(std::abs(x.kl_real - y.kl_real) <= 1e-6);
    CHECK(std::abs(x.recon_fake - y.recon_fake) <= 1e-6);
    CHECK(std::abs(x.kl_fake - y.kl_fake) <= 1e-6);
  }
  REQUIRE(a.history.size() == b.history.size());
  for (size_t e = 0; e < a.history.size(); ++e) {
    CHECK(std::abs(a.history[e].val_objective - b.history[e].val_objective) <= 1e-6);
  }
}

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("config validation and JSON round-trip") {
    auto c = quick(Method::AttriVae, 5);
    CHECK_NOTHROW(c.validate());
    c.patience = 6;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = quick(Method::AttriVae);
    c.batch_size = 1;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = quick(Method::AttriVae);
    c.device = "cuda";
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    CHECK_THROWS_AS(parse_method("vae"), InvalidConfig);

    CHECK(TrainConfig::defaults_for(Method::BetaVae).lr_encoder == 5e-5);
    CHECK(TrainConfig::defaults_for(Method::Sivae).lr_decoder == 2e-4);
    c = quick(Method::Sivae, 7);
    c.regularize_on = RegularizeOn::Mean;
    const nlohmann::json j = c;
    const auto back = j.get<TrainConfig>();
    CHECK(back.method == Method::Sivae);
    CHECK(back.epochs == 7);
    CHECK(back.regularize_on == RegularizeOn::Mean);
    CHECK(back.weights.alpha_pl == 0.0);
  }

  TEST_CASE("VAE epoch: 64 samples, batch 16 -> 4 optimizer steps") {
    Trainer t(quick(Method::BetaVae), tiny_model(), small_data());
    t.train_epoch();
    CHECK(t.state().optimizer_steps == 4);
    CHECK(t.state().step_losses.size() == 4);
  }

  TEST_CASE("lr = 0 leaves parameters unchanged") {
    for (auto m : {Method::AttriVae, Method::ArSivae}) {
      auto c = quick(m);
      c.lr_encoder = c.lr_decoder = 0.0;
      Trainer t(c, tiny_model(), small_data());
      const auto e0 = t.model().parameter_digest(Component::Encoder);
      const auto d0 = t.model().parameter_digest(Component::Decoder);
      t.train_epoch();
      CHECK(t.model().parameter_digest(Component::Encoder) == e0);
      CHECK(t.model().parameter_digest(Component::Decoder) == d0);
    }
  }

  TEST_CASE("SIVAE phases touch only their own component") {
    Trainer t(quick(Method::ArSivae), tiny_model(), small_data());
    std::string enc = t.model().parameter_digest(Component::Encoder);
    std::string dec = t.model().parameter_digest(Component::Decoder);
    int phases = 0;
    bool isolated = true;
    t.set_phase_hook([&](SivaePhase phase, int) {
      const auto e = t.model().parameter_digest(Component::Encoder);
      const auto d = t.model().parameter_digest(Component::Decoder);
      if (phase == SivaePhase::EncoderUpdated) {
        isolated = isolated && d == dec && e != enc;
      } else {
        isolated = isolated && e == enc && d != dec;
      }
      enc = e;
      dec = d;
      ++phases;
    });
    t.train_epoch();
    CHECK(isolated);
    CHECK(phases == 8);
    CHECK(t.state().optimizer_steps == 8);
    CHECK(t.model().trainable(Component::Encoder));
    CHECK(t.model().trainable(Component::Decoder));
  }

  TEST_CASE("gamma_reg = 0 reduces the regularized methods to their baselines") {
    auto attri = quick(Method::AttriVae, 3);
    attri.weights.gamma_reg = 0.0;
    const auto a = fit(attri, tiny_model(), small_data());
    const auto b = fit(quick(Method::BetaVae, 3), tiny_model(), small_data());
    check_same_trajectory(a.state, b.state);

    auto ar = quick(Method::ArSivae, 3);
    ar.weights.gamma_reg = 0.0;
    const auto c = fit(ar, tiny_model(), small_data());
    const auto d = fit(quick(Method::Sivae, 3), tiny_model(), small_data());
    check_same_trajectory(c.state, d.state);
    CHECK(c.model.parameter_digest(Component::Encoder) == d.model.parameter_digest(Component::Encoder));
  }

  TEST_CASE("epochs = 0 returns the initial model with an empty history") {
    auto c = quick(Method::Sivae, 0);
    c.patience = 1;
    const auto r = fit(c, tiny_model(), small_data());
    CHECK(r.state.history.empty());
    CHECK(r.state.best_epoch == 0);
    const VaeModel fresh(tiny_model(), c.seed);
    CHECK(r.model.parameter_digest(Component::Encoder) == fresh.parameter_digest(Component::Encoder));
    CHECK(r.model.parameter_digest(Component::Decoder) == fresh.parameter_digest(Component::Decoder));
  }

  TEST_CASE("patience = 1 with a frozen validation loss stops after epoch 2") {
    auto c = quick(Method::AttriVae, 10);
    c.patience = 1;
    c.lr_encoder = c.lr_decoder = 0.0;
    const auto r = fit(c, tiny_model(), small_data());
    CHECK(r.state.epoch == 2);
    CHECK(r.state.best_epoch == 1);
  }

  TEST_CASE("best checkpoint carries the minimum validation loss") {
    testing::TempDir tmp("fit");
    auto c = quick(Method::ArSivae, 4);
    c.checkpoint_every = 2;
    Trainer t(c, tiny_model(), small_data());
    auto r = t.fit(tmp / "run");
    double best = 1e300;
    for (const auto& h : r.state.history) best = std::min(best, h.val_objective);
    CHECK(r.state.best_val_loss == best);
    for (const char* f : {"config.json", "losses.jsonl", "manifest.json", "best/manifest.json",
                          "checkpoints/epoch_2/manifest.json", "checkpoints/epoch_4/manifest.json"}) {
      CHECK_MESSAGE(fs::exists(tmp / "run" / f), f);
    }
    // Re-validating the restored model reproduces the recorded best loss.
    CHECK(t.validate().encoder_total == doctest::Approx(best).epsilon(1e-9));
    const auto manifest = nlohmann::json::parse(slurp(tmp / "run" / "manifest.json"));
    CHECK(manifest.at("dataset_hash") == dataset_content_hash(small_data()));
    CHECK(manifest.at("epochs_run") == 4);
    CHECK(manifest.at("config").at("train").at("method") == "ar_sivae");
    nlohmann::json extra;
    auto loaded = load_checkpoint(tmp / "run" / "best", &extra);
    CHECK(loaded.parameter_digest(Component::Encoder) == r.model.parameter_digest(Component::Encoder));
  }

  TEST_CASE("identical config and seed give byte-identical loss logs") {
    testing::TempDir tmp("det");
    for (auto m : {Method::AttriVae, Method::ArSivae}) {
      const auto c = quick(m, 2);
      fit(c, tiny_model(), small_data(), tmp / "a");
      fit(c, tiny_model(), small_data(), tmp / "b");
      CHECK(slurp(tmp / "a" / "losses.jsonl") == slurp(tmp / "b" / "losses.jsonl"));
      CHECK_FALSE(slurp(tmp / "a" / "losses.jsonl").empty());
    }
  }

  TEST_CASE("divergence aborts with a machine-readable record") {
    testing::TempDir tmp("div");
    auto c = quick(Method::BetaVae, 3);
    c.weights.beta = 1e308;
    c.lr_encoder = c.lr_decoder = 1e30;
    CHECK_THROWS_AS(fit(c, tiny_model(), small_data(), tmp / "run"), TrainingDivergence);
    const auto err = nlohmann::json::parse(slurp(tmp / "run" / "error.json"));
    CHECK(err.at("error") == "training_divergence");
    CHECK(fs::exists(tmp / "run" / "losses.jsonl"));
  }

  TEST_CASE("attribute methods need attributes") {
    auto ds = small_data();
    ds.attributes.clear();
    CHECK_THROWS_AS(Trainer(quick(Method::AttriVae), tiny_model(), ds), InvalidConfig);
    CHECK_NOTHROW(Trainer(quick(Method::Sivae), tiny_model(), ds));
    auto mc = tiny_model();
    mc.num_regularized_dims = 0;
    CHECK_THROWS_AS(Trainer(quick(Method::ArSivae), mc, small_data()), InvalidConfig);
  }

  TEST_CASE("single-phase models train on the ED channel") {
    auto mc = tiny_model();
    mc.channels = 1;
    mc.num_regularized_dims = 6;
    const auto r = fit(quick(Method::AttriVae, 1), mc, small_data());
    CHECK(r.state.history.size() == 1);
  }

  TEST_CASE("short run stays numerically healthy") {
    static const DatasetArchive ds = generate_dataset(200, 9, Canvas{32, 32});
    auto c = quick(Method::ArSivae, 5);
    c.weights.alpha_pl = 0.1;
    const auto r = fit(c, tiny_model(), ds);
    for (const auto& h : r.state.history) {
      CHECK(h.train.finite());
      CHECK(h.val.finite());
      CHECK(h.train.kl_real < 1e4);
    }
  }
}
