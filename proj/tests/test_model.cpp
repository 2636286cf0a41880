#include "doctest_torch.hpp"

#include "arsivae/errors.hpp"
#include "arsivae/model.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

using namespace arsivae;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.latent_dim = 4;
  c.image_size = 32;
  c.base_width = 4;
  c.num_regularized_dims = 2;
  return c;
}

bool same_params(const std::vector<torch::Tensor>& a, const std::vector<torch::Tensor>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i) {
    if (!torch::equal(a[i], b[i])) return false;
  }
  return true;
}

std::vector<torch::Tensor> snapshot(const VaeModel& m, Component c) {
  std::vector<torch::Tensor> out;
  for (const auto& p : m.parameters(c)) out.push_back(p.detach().clone());
  return out;
}

}  // namespace

TEST_SUITE("vae_models") {
  TEST_CASE("config validation") {
    CHECK_NOTHROW(ModelConfig{}.validate());
    auto c = small_config();
    c.image_size = 40;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = small_config();
    c.num_regularized_dims = 5;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    c = small_config();
    c.channels = 3;
    CHECK_THROWS_AS(c.validate(), InvalidConfig);
    const nlohmann::json j = small_config();
    const auto back = j.get<ModelConfig>();
    CHECK(back.latent_dim == 4);
    CHECK(back.base_width == 4);
  }

  TEST_CASE("shapes, output range and shape errors") {
    VaeModel m(small_config(), 1);
    const auto x = torch::rand({5, 2, 32, 32});
    const auto enc = m.encode(x);
    CHECK((enc.mu.sizes().vec() == std::vector<int64_t>{5, 4}));
    CHECK((enc.logvar.sizes().vec() == std::vector<int64_t>{5, 4}));
    const auto y = m.decode(torch::randn({3, 4}) * 10);
    CHECK((y.sizes().vec() == std::vector<int64_t>{3, 2, 32, 32}));
    CHECK(y.min().item<float>() >= 0.0f);
    CHECK(y.max().item<float>() <= 1.0f);
    CHECK_THROWS_AS(m.encode(torch::rand({5, 1, 32, 32})), ContractError);
    CHECK_THROWS_AS(m.decode(torch::randn({3, 5})), ContractError);
  }

  TEST_CASE("zeroed heads give a standard normal posterior") {
    VaeModel m(small_config(), 2);
    {
      torch::NoGradGuard g;
      for (auto& p : m.encoder()->named_parameters()) {
        if (p.key().find("head") != std::string::npos) p.value().zero_();
      }
    }
    const auto enc = m.encode(torch::rand({3, 2, 32, 32}));
    CHECK(enc.mu.abs().max().item<float>() == 0.0f);
    CHECK(enc.logvar.abs().max().item<float>() == 0.0f);
  }

  TEST_CASE("logvar is clamped") {
    VaeModel m(small_config(), 3);
    {
      torch::NoGradGuard g;
      for (auto& p : m.encoder()->named_parameters()) {
        if (p.key() == "logvar_head.bias") p.value().fill_(1e4);
      }
    }
    const auto enc = m.encode(torch::rand({2, 2, 32, 32}));
    CHECK(enc.logvar.max().item<float>() <= kLogvarMax);
  }

  TEST_CASE("evaluation is deterministic and initialisation is seeded") {
    VaeModel a(small_config(), 7), b(small_config(), 7), c(small_config(), 8);
    const auto x = torch::rand({2, 2, 32, 32});
    CHECK(torch::equal(a.encode(x).mu, a.encode(x).mu));
    CHECK(torch::equal(a.encode(x).mu, b.encode(x).mu));
    CHECK_FALSE(torch::equal(a.encode(x).mu, c.encode(x).mu));
    CHECK(a.parameter_digest(Component::Decoder) == b.parameter_digest(Component::Decoder));
  }

  TEST_CASE("model construction leaves the global generator alone") {
    torch::manual_seed(123);
    const auto expected = torch::rand({4});
    torch::manual_seed(123);
    VaeModel m(small_config(), 99);
    CHECK(torch::equal(torch::rand({4}), expected));
  }

  TEST_CASE("reparameterization") {
    EncoderOutput enc{torch::zeros({1, 3}), torch::zeros({1, 3})};
    const auto eps = torch::tensor({{0.3f, -1.1f, 2.0f}});
    CHECK(torch::equal(reparameterize(enc, eps).z, eps));

    EncoderOutput tight{torch::full({1, 3}, 2.0f), torch::full({1, 3}, -10.0f)};
    const auto z = reparameterize(tight, eps).z;
    CHECK(((z - 2.0f).abs() <= std::exp(-5.0) * eps.abs() + 1e-6).all().item<bool>());

    auto gen = make_generator(5);
    EncoderOutput unit{torch::zeros({100000, 1}), torch::zeros({100000, 1})};
    const double var = reparameterize(unit, gen).z.var().item<double>();
    CHECK(std::abs(var - 1.0) < 0.02);

    auto g1 = make_generator(11), g2 = make_generator(11);
    CHECK(torch::equal(reparameterize(unit, g1).z, reparameterize(unit, g2).z));
  }

  TEST_CASE("reparameterization gradients match finite differences") {
    const std::vector<double> mu{0.4, -0.2}, lv{-0.3, 0.8}, eps{1.3, -0.7};
    auto mu_t = torch::tensor(mu, torch::kDouble).unsqueeze(0).requires_grad_(true);
    auto lv_t = torch::tensor(lv, torch::kDouble).unsqueeze(0).requires_grad_(true);
    const auto z = reparameterize({mu_t, lv_t}, torch::tensor(eps, torch::kDouble).unsqueeze(0)).z;
    z.sum().backward();
    for (size_t d = 0; d < 2; ++d) {
      const auto f = [&](const std::vector<double>& v) { return v[0] + std::exp(0.5 * v[1]) * eps[d]; };
      const double dmu = oracle::central_difference(f, {mu[d], lv[d]}, 0, 1e-6);
      const double dlv = oracle::central_difference(f, {mu[d], lv[d]}, 1, 1e-6);
      CHECK(oracle::relative_error(mu_t.grad()[0][static_cast<int64_t>(d)].item<double>(), dmu) < 1e-4);
      CHECK(oracle::relative_error(lv_t.grad()[0][static_cast<int64_t>(d)].item<double>(), dlv) < 1e-4);
      CHECK(lv_t.grad()[0][static_cast<int64_t>(d)].item<double>() ==
            doctest::Approx(0.5 * std::exp(0.5 * lv[d]) * eps[d]));
    }
  }

  TEST_CASE("decoder gradient matches finite differences") {
    auto cfg = small_config();
    cfg.base_width = 2;
    VaeModel m(cfg, 4);
    m.to(torch::kDouble);
    const std::vector<double> z0{0.3, -0.5, 0.9, 0.1};
    const auto weights = torch::rand({1, 2, 32, 32}, torch::kDouble);
    auto z = torch::tensor(z0, torch::kDouble).unsqueeze(0).requires_grad_(true);
    (m.decode(z) * weights).sum().backward();
    const auto f = [&](const std::vector<double>& v) {
      torch::NoGradGuard g;
      return (m.decode(torch::tensor(v, torch::kDouble).unsqueeze(0)) * weights).sum().item<double>();
    };
    for (size_t i = 0; i < 4; ++i) {
      const double fd = oracle::central_difference(f, z0, i, 1e-4);
      CHECK(oracle::relative_error(z.grad()[0][static_cast<int64_t>(i)].item<double>(), fd) < 1e-3);
    }
  }

  TEST_CASE("freezing controls which parameters an optimizer step can move") {
    VaeModel m(small_config(), 5);
    torch::optim::Adam opt(m.parameters(), torch::optim::AdamOptions(1e-2));
    const auto x = torch::rand({4, 2, 32, 32});
    const auto step = [&] {
      opt.zero_grad();
      const auto enc = m.encode(x);
      const auto loss = (m.decode(enc.mu) - x).pow(2).mean() + enc.logvar.pow(2).mean();
      if (loss.requires_grad()) loss.backward();
      opt.step();
    };

    m.set_trainable(Component::Decoder, false);
    auto dec0 = snapshot(m, Component::Decoder);
    auto enc0 = snapshot(m, Component::Encoder);
    step();
    CHECK(same_params(dec0, snapshot(m, Component::Decoder)));
    CHECK_FALSE(same_params(enc0, snapshot(m, Component::Encoder)));
    CHECK_FALSE(m.trainable(Component::Decoder));

    m.set_trainable(Component::Encoder, false);
    enc0 = snapshot(m, Component::Encoder);
    step();
    CHECK(same_params(enc0, snapshot(m, Component::Encoder)));
    CHECK(same_params(dec0, snapshot(m, Component::Decoder)));

    m.set_trainable(Component::Encoder, true);
    m.set_trainable(Component::Decoder, true);
    step();
    CHECK_FALSE(same_params(dec0, snapshot(m, Component::Decoder)));
    CHECK_FALSE(same_params(enc0, snapshot(m, Component::Encoder)));
  }

  TEST_CASE("checkpoint round-trip preserves outputs bit-for-bit") {
    testing::TempDir tmp("ckpt");
    VaeModel m(small_config(), 6);
    save_checkpoint(m, tmp / "ck", {{"epoch", 3}});
    nlohmann::json extra;
    auto back = load_checkpoint(tmp / "ck", &extra);
    CHECK(extra.at("epoch") == 3);
    CHECK(back.config().latent_dim == 4);
    const auto x = torch::rand({3, 2, 32, 32});
    CHECK(torch::equal(m.encode(x).mu, back.encode(x).mu));
    CHECK(torch::equal(m.encode(x).logvar, back.encode(x).logvar));
    const auto z = torch::randn({3, 4});
    CHECK(torch::equal(m.decode(z), back.decode(z)));
    CHECK(m.parameter_digest(Component::Encoder) == back.parameter_digest(Component::Encoder));
    CHECK_THROWS(load_checkpoint(tmp / "missing"));
  }

  TEST_CASE("clone is deep") {
    VaeModel m(small_config(), 8);
    auto c = m.clone();
    {
      torch::NoGradGuard g;
      for (auto& p : c.parameters()) p.add_(1.0);
    }
    CHECK(m.parameter_digest(Component::Encoder) != c.parameter_digest(Component::Encoder));
    m.copy_from(c);
    CHECK(m.parameter_digest(Component::Encoder) == c.parameter_digest(Component::Encoder));
  }
}
