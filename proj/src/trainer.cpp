#include "arsivae/trainer.hpp"

#include <cmath>
#include <fstream>

#include "arsivae/array_archive.hpp"
#include "arsivae/errors.hpp"

namespace arsivae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr uint64_t kNoiseStream = 0x6E6F697365ULL;
constexpr uint64_t kValidationStream = 0x76616C6964ULL;
constexpr uint64_t kShuffleStream = 0x736875666CULL;

double value_of(const torch::Tensor& t) { return t.detach().to(torch::kDouble).item<double>(); }

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace

Method parse_method(std::string_view name) {
  if (name == "beta_vae") return Method::BetaVae;
  if (name == "attri_vae") return Method::AttriVae;
  if (name == "sivae") return Method::Sivae;
  if (name == "ar_sivae") return Method::ArSivae;
  throw InvalidConfig("unknown method '" + std::string(name) + "' (expected beta_vae, attri_vae, sivae, ar_sivae)");
}

std::string_view method_name(Method m) {
  switch (m) {
    case Method::BetaVae: return "beta_vae";
    case Method::AttriVae: return "attri_vae";
    case Method::Sivae: return "sivae";
    case Method::ArSivae: return "ar_sivae";
  }
  return "?";
}

bool uses_attributes(Method m) { return m == Method::AttriVae || m == Method::ArSivae; }
bool is_introspective(Method m) { return m == Method::Sivae || m == Method::ArSivae; }

TrainConfig TrainConfig::defaults_for(Method m) {
  TrainConfig c;
  c.method = m;
  if (!is_introspective(m)) {
    c.lr_encoder = 5e-5;
    c.lr_decoder = 5e-5;
  }
  return c;
}

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidConfig("epochs must be >= 0");
  if (patience < 1 || patience > std::max(epochs, 1)) throw InvalidConfig("patience must lie in [1, epochs]");
  if (batch_size < 2) throw InvalidConfig("batch_size must be >= 2 (attribute loss needs pairs)");
  if (!(lr_encoder >= 0.0) || !(lr_decoder >= 0.0)) throw InvalidConfig("learning rates must be >= 0");
  if (checkpoint_every < 0) throw InvalidConfig("checkpoint_every must be >= 0");
  if (device != "cpu") throw InvalidConfig("only the 'cpu' device is supported, got '" + device + "'");
  weights.validate();
}

void to_json(json& j, const TrainConfig& c) {
  j = json{{"method", method_name(c.method)},
           {"epochs", c.epochs},
           {"patience", c.patience},
           {"batch_size", c.batch_size},
           {"lr_encoder", c.lr_encoder},
           {"lr_decoder", c.lr_decoder},
           {"weights", c.weights},
           {"seed", c.seed},
           {"checkpoint_every", c.checkpoint_every},
           {"device", c.device},
           {"regularize_on", c.regularize_on == RegularizeOn::Sample ? "sample" : "mean"}};
}

void from_json(const json& j, TrainConfig& c) {
  const Method m = parse_method(j.value("method", std::string("ar_sivae")));
  const TrainConfig d = TrainConfig::defaults_for(m);
  c.method = m;
  c.epochs = j.value("epochs", d.epochs);
  c.patience = j.value("patience", d.patience);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.lr_encoder = j.value("lr_encoder", d.lr_encoder);
  c.lr_decoder = j.value("lr_decoder", d.lr_decoder);
  c.weights = j.contains("weights") ? j.at("weights").get<LossWeights>() : d.weights;
  c.seed = j.value("seed", d.seed);
  c.checkpoint_every = j.value("checkpoint_every", d.checkpoint_every);
  c.device = j.value("device", d.device);
  const auto reg = j.value("regularize_on", std::string("sample"));
  if (reg == "sample") {
    c.regularize_on = RegularizeOn::Sample;
  } else if (reg == "mean") {
    c.regularize_on = RegularizeOn::Mean;
  } else {
    throw InvalidConfig("regularize_on must be 'sample' or 'mean'");
  }
}

void to_json(json& j, const EpochRecord& r) {
  j = json{{"epoch", r.epoch},
           {"train", r.train},
           {"val", r.val},
           {"val_objective", r.val_objective},
           {"improved", r.improved},
           {"optimizer_steps", r.optimizer_steps}};
}

std::string dataset_content_hash(const DatasetArchive& ds) {
  const std::string joined = "images:" + sha256_hex(std::span<const float>(ds.images)) + "\nattributes:" +
                             sha256_hex(std::span<const float>(ds.attributes)) + "\n";
  return sha256_hex(std::as_bytes(std::span(joined.data(), joined.size())));
}

Trainer::Trainer(TrainConfig config, ModelConfig model_config, const DatasetArchive& data)
    : config_(std::move(config)),
      model_config_(model_config),
      data_(data),
      model_(model_config, config_.seed),
      shuffle_rng_(splitmix64(config_.seed ^ kShuffleStream)),
      noise_gen_(make_generator(splitmix64(config_.seed ^ kNoiseStream))) {
  config_.validate();
  model_config_.validate();
  if (data_.train.empty() || data_.val.empty()) throw InvalidConfig("dataset needs train and val splits");
  if (model_config_.image_size != data_.canvas.height || model_config_.image_size != data_.canvas.width) {
    throw InvalidConfig("model image_size does not match the dataset canvas");
  }
  if (uses_attributes(config_.method)) {
    if (data_.attributes.size() != static_cast<size_t>(data_.n) * kNumAttributes) {
      throw InvalidConfig("attribute-regularized methods need a dataset with attributes");
    }
    if (model_config_.num_regularized_dims < 1) {
      throw InvalidConfig("attribute-regularized methods need num_regularized_dims >= 1");
    }
    if (model_config_.num_regularized_dims > kNumAttributes) {
      throw InvalidConfig("num_regularized_dims exceeds the number of attributes");
    }
  }
  config_.weights.resolve_scale(model_config_.channels * model_config_.image_size * model_config_.image_size);

  const auto h = data_.canvas.height;
  const auto w = data_.canvas.width;
  images_ = torch::from_blob(const_cast<float*>(data_.images.data()), {data_.n, kNumPhases, h, w}, torch::kFloat32)
                .clone();
  if (model_config_.channels == 1) images_ = images_.narrow(1, 0, 1).contiguous();  // ED phase only
  if (!data_.attributes.empty()) {
    auto norm = data_.normalized_attributes();
    attrs_ = torch::from_blob(norm.data(), {data_.n, kNumAttributes}, torch::kFloat32)
                 .clone()
                 .narrow(1, 0, std::max<int64_t>(model_config_.num_regularized_dims, 1))
                 .contiguous();
  }

  using torch::optim::Adam;
  using torch::optim::AdamOptions;
  if (is_introspective(config_.method)) {
    enc_opt_ = std::make_unique<Adam>(model_.parameters(Component::Encoder), AdamOptions(config_.lr_encoder));
    dec_opt_ = std::make_unique<Adam>(model_.parameters(Component::Decoder), AdamOptions(config_.lr_decoder));
  } else {
    std::vector<torch::optim::OptimizerParamGroup> groups;
    groups.emplace_back(model_.parameters(Component::Encoder), std::make_unique<AdamOptions>(config_.lr_encoder));
    groups.emplace_back(model_.parameters(Component::Decoder), std::make_unique<AdamOptions>(config_.lr_decoder));
    joint_opt_ = std::make_unique<Adam>(std::move(groups), AdamOptions(config_.lr_encoder));
  }
}

Trainer::Batch Trainer::make_batch(const std::vector<int64_t>& rows) const {
  const auto idx = torch::tensor(rows, torch::kLong);
  Batch b;
  b.images = images_.index_select(0, idx);
  if (attrs_.defined()) b.attrs = attrs_.index_select(0, idx);
  return b;
}

std::vector<std::vector<int64_t>> Trainer::epoch_batches() {
  std::vector<int64_t> order = data_.train;
  shuffle(order, shuffle_rng_);
  std::vector<std::vector<int64_t>> batches;
  const auto bs = static_cast<size_t>(config_.batch_size);
  for (size_t i = 0; i < order.size(); i += bs) {
    const size_t end = std::min(order.size(), i + bs);
    if (end - i < 2) break;  // a single sample forms no pairs
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

torch::Tensor Trainer::attribute_term(const EncoderOutput& enc, const torch::Tensor& z, const torch::Tensor& attrs,
                                      LossBreakdown& out) const {
  const auto& code = config_.regularize_on == RegularizeOn::Mean ? enc.mu : z;
  const auto per = attribute_regularization(code, attrs, config_.weights.delta);
  const auto per_d = per.detach().to(torch::kDouble).contiguous();
  out.per_attribute.assign(per_d.data_ptr<double>(), per_d.data_ptr<double>() + per_d.numel());
  const auto total = per.sum();
  out.attr_total = value_of(total);
  return total;
}

LossBreakdown Trainer::vae_loss(const Batch& b, torch::Generator& gen, torch::Tensor* total) {
  const auto enc = model_.encode(b.images);
  const auto code = reparameterize(enc, gen);
  const auto rec = model_.decode(code.z);
  const bool attr = uses_attributes(config_.method);
  const auto& code_for_attr = config_.regularize_on == RegularizeOn::Mean ? enc.mu : code.z;
  auto loss = attrivae_total_loss(b.images, rec, enc.mu, enc.logvar, code_for_attr,
                                  attr ? b.attrs : torch::Tensor(), config_.weights);
  if (total) *total = loss.total;
  return loss.breakdown;
}

LossBreakdown Trainer::train_epoch_vae() {
  if (is_introspective(config_.method)) throw ContractError("train_epoch_vae called for an introspective method");
  LossBreakdown sum;
  int steps = 0;
  for (const auto& rows : epoch_batches()) {
    const auto batch = make_batch(rows);
    torch::Tensor total;
    const auto breakdown = vae_loss(batch, noise_gen_, &total);
    joint_opt_->zero_grad();
    total.backward();
    joint_opt_->step();
    state_.step_losses.push_back(breakdown);
    sum += breakdown;
    ++steps;
  }
  state_.optimizer_steps += steps;
  if (steps > 0) sum /= steps;
  return sum;
}

LossBreakdown Trainer::sivae_step(const Batch& b, int batch_index) {
  const auto& w = config_.weights;
  const bool attr = uses_attributes(config_.method);
  const auto batch = b.images.size(0);
  LossBreakdown out;

  // Phase 1: decoder frozen, encoder updated.
  model_.set_trainable(Component::Decoder, false);
  model_.set_trainable(Component::Encoder, true);
  const auto enc = model_.encode(b.images);
  const auto code = reparameterize(enc, noise_gen_);
  const auto rec = model_.decode(code.z);
  const ElboTerms real{reconstruction_error_per_sample(b.images, rec, w.alpha_pl),
                       gaussian_kl_per_sample(enc.mu, enc.logvar)};
  const auto prior_z =
      torch::randn({batch, model_config_.latent_dim}, noise_gen_, b.images.options().requires_grad(false));
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = model_.decode(prior_z);
  }
  const auto enc_fake = model_.encode(fake);
  const auto code_fake = reparameterize(enc_fake, noise_gen_);
  const auto rec_fake = model_.decode(code_fake.z);
  const ElboTerms fake_terms{reconstruction_error_per_sample(fake, rec_fake, w.alpha_pl),
                             gaussian_kl_per_sample(enc_fake.mu, enc_fake.logvar)};
  torch::Tensor attr_total;
  if (attr) attr_total = attribute_term(enc, code.z, b.attrs, out);
  const auto enc_loss = sivae_encoder_loss(real, fake_terms, attr_total, w);
  enc_opt_->zero_grad();
  enc_loss.backward();
  enc_opt_->step();
  out.recon_real = value_of(real.recon.mean());
  out.kl_real = value_of(real.kl.mean());
  out.recon_fake = value_of(fake_terms.recon.mean());
  out.kl_fake = value_of(fake_terms.kl.mean());
  out.encoder_total = value_of(enc_loss);
  if (phase_hook_) phase_hook_(SivaePhase::EncoderUpdated, batch_index);

  // Phase 2: encoder frozen, decoder updated. Codes of the real batch come
  // from the pre-update encoder and are constants here.
  model_.set_trainable(Component::Encoder, false);
  model_.set_trainable(Component::Decoder, true);
  const auto rec_d = model_.decode(code.z.detach());
  const auto fake_d = model_.decode(prior_z);
  const auto enc_fake_d = model_.encode(fake_d);
  const auto code_fake_d = reparameterize(enc_fake_d, noise_gen_);
  const auto rec_fake_d = model_.decode(code_fake_d.z);
  const ElboTerms real_d{reconstruction_error_per_sample(b.images, rec_d, w.alpha_pl), torch::Tensor()};
  const ElboTerms fake_d_terms{reconstruction_error_per_sample(fake_d.detach(), rec_fake_d, w.alpha_pl),
                               gaussian_kl_per_sample(enc_fake_d.mu, enc_fake_d.logvar)};
  const auto dec_loss = sivae_decoder_loss(real_d, fake_d_terms, w);
  dec_opt_->zero_grad();
  dec_loss.backward();
  dec_opt_->step();
  out.decoder_total = value_of(dec_loss);
  model_.set_trainable(Component::Encoder, true);
  if (phase_hook_) phase_hook_(SivaePhase::DecoderUpdated, batch_index);

  if (!out.finite()) throw TrainingDivergence("non-finite SIVAE step", json(out).dump());
  return out;
}

LossBreakdown Trainer::train_epoch_sivae() {
  if (!is_introspective(config_.method)) throw ContractError("train_epoch_sivae called for a VAE method");
  LossBreakdown sum;
  int steps = 0;
  for (const auto& rows : epoch_batches()) {
    const auto breakdown = sivae_step(make_batch(rows), steps);
    state_.step_losses.push_back(breakdown);
    sum += breakdown;
    ++steps;
  }
  state_.optimizer_steps += 2 * steps;
  if (steps > 0) sum /= steps;
  return sum;
}

LossBreakdown Trainer::train_epoch() {
  return is_introspective(config_.method) ? train_epoch_sivae() : train_epoch_vae();
}

LossBreakdown Trainer::sivae_eval(const Batch& b, torch::Generator& gen) {
  const auto& w = config_.weights;
  LossBreakdown out;
  const auto enc = model_.encode(b.images);
  const auto code = reparameterize(enc, gen);
  const auto rec = model_.decode(code.z);
  const ElboTerms real{reconstruction_error_per_sample(b.images, rec, w.alpha_pl),
                       gaussian_kl_per_sample(enc.mu, enc.logvar)};
  const auto prior_z = torch::randn({b.images.size(0), model_config_.latent_dim}, gen, b.images.options());
  const auto fake = model_.decode(prior_z);
  const auto enc_fake = model_.encode(fake);
  const auto code_fake = reparameterize(enc_fake, gen);
  const auto rec_fake = model_.decode(code_fake.z);
  const ElboTerms fake_terms{reconstruction_error_per_sample(fake, rec_fake, w.alpha_pl),
                             gaussian_kl_per_sample(enc_fake.mu, enc_fake.logvar)};
  torch::Tensor attr_total;
  if (uses_attributes(config_.method)) attr_total = attribute_term(enc, code.z, b.attrs, out);
  out.recon_real = value_of(real.recon.mean());
  out.kl_real = value_of(real.kl.mean());
  out.recon_fake = value_of(fake_terms.recon.mean());
  out.kl_fake = value_of(fake_terms.kl.mean());
  out.encoder_total = value_of(sivae_encoder_loss(real, fake_terms, attr_total, w));
  out.decoder_total = value_of(sivae_decoder_loss(real, fake_terms, w));
  return out;
}

LossBreakdown Trainer::validate() {
  torch::NoGradGuard no_grad;
  auto gen = make_generator(splitmix64(config_.seed ^ kValidationStream));
  LossBreakdown sum;
  int batches = 0;
  const auto& rows = data_.val;
  const auto bs = static_cast<size_t>(config_.batch_size);
  for (size_t i = 0; i < rows.size(); i += bs) {
    const size_t end = std::min(rows.size(), i + bs);
    if (end - i < 2) break;
    const auto batch = make_batch({rows.begin() + static_cast<std::ptrdiff_t>(i), rows.begin() + static_cast<std::ptrdiff_t>(end)});
    sum += is_introspective(config_.method) ? sivae_eval(batch, gen) : vae_loss(batch, gen, nullptr);
    ++batches;
  }
  if (batches == 0) throw InvalidConfig("validation split has fewer than two samples");
  sum /= batches;
  return sum;
}

FitResult Trainer::fit(const std::optional<fs::path>& run_dir) {
  std::ofstream losses;
  const auto data_hash = dataset_content_hash(data_);
  json config_json = {{"train", config_},
                      {"model", model_config_},
                      {"dataset", {{"n", data_.n}, {"seed", data_.seed}, {"content_hash", data_hash}}}};
  if (run_dir) {
    fs::create_directories(*run_dir);
    write_json(*run_dir / "config.json", config_json);
    losses.open(*run_dir / "losses.jsonl", std::ios::trunc);
    if (!losses) throw std::runtime_error("cannot write " + (*run_dir / "losses.jsonl").string());
  }
  const json optimizer_desc = {{"type", "adam"},
                               {"lr_encoder", config_.lr_encoder},
                               {"lr_decoder", config_.lr_decoder},
                               {"betas", {0.9, 0.999}},
                               {"separate_optimizers", is_introspective(config_.method)}};

  VaeModel best = model_.clone();
  try {
    for (int epoch = 1; epoch <= config_.epochs; ++epoch) {
      const auto steps_before = state_.optimizer_steps;
      EpochRecord rec;
      rec.epoch = epoch;
      rec.train = train_epoch();
      rec.val = validate();
      rec.val_objective = rec.val.encoder_total;
      rec.optimizer_steps = static_cast<int>(state_.optimizer_steps - steps_before);
      if (!rec.val.finite()) throw TrainingDivergence("non-finite validation loss", json(rec.val).dump());
      state_.epoch = epoch;
      if (rec.val_objective < state_.best_val_loss) {
        rec.improved = true;
        state_.best_val_loss = rec.val_objective;
        state_.best_epoch = epoch;
        state_.epochs_since_improvement = 0;
        best.copy_from(model_);
      } else {
        ++state_.epochs_since_improvement;
      }
      state_.history.push_back(rec);
      if (run_dir) {
        losses << json(rec).dump() << '\n';
        losses.flush();
        if (config_.checkpoint_every > 0 && epoch % config_.checkpoint_every == 0) {
          save_checkpoint(model_, *run_dir / "checkpoints" / ("epoch_" + std::to_string(epoch)),
                          {{"epoch", epoch}, {"optimizer", optimizer_desc}});
        }
      }
      if (state_.epochs_since_improvement >= config_.patience) break;
    }
  } catch (const TrainingDivergence& e) {
    if (run_dir) {
      write_json(*run_dir / "error.json",
                 {{"error", "training_divergence"}, {"message", e.what()}, {"epoch", state_.epoch + 1},
                  {"breakdown", json::parse(e.details(), nullptr, false)}});
    }
    throw;
  }

  if (state_.best_epoch > 0) model_.copy_from(best);

  json manifest = {{"method", method_name(config_.method)},
                   {"seed", config_.seed},
                   {"dataset_hash", data_hash},
                   {"config", config_json},
                   {"epochs_run", state_.epoch},
                   {"best_epoch", state_.best_epoch},
                   {"optimizer_steps", state_.optimizer_steps},
                   {"best_val_loss", state_.best_epoch > 0 ? json(state_.best_val_loss) : json(nullptr)}};
  if (!state_.history.empty()) manifest["final_train"] = state_.history.back().train;
  if (run_dir) {
    save_checkpoint(model_, *run_dir / "best", {{"epoch", state_.best_epoch}, {"optimizer", optimizer_desc}});
    write_json(*run_dir / "manifest.json", manifest);
  }
  return {model_.clone(), state_, manifest};
}

FitResult fit(const TrainConfig& config, const ModelConfig& model_config, const DatasetArchive& data,
              const std::optional<fs::path>& run_dir) {
  Trainer trainer(config, model_config, data);
  return trainer.fit(run_dir);
}

}  // namespace arsivae
