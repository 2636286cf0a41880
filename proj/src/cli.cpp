#include "arsivae/cli.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "arsivae/array_archive.hpp"
#include "arsivae/errors.hpp"

namespace arsivae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  return json::parse(in, nullptr, true, /*ignore_comments=*/true);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

int regularized_dims_of(const json& manifest, const ModelConfig& mc) {
  const auto method = parse_method(manifest.at("method").get<std::string>());
  return uses_attributes(method) ? static_cast<int>(mc.num_regularized_dims) : 0;
}

bool is_regularized(const json& manifest) {
  const auto method = parse_method(manifest.at("method").get<std::string>());
  if (!uses_attributes(method)) return false;
  const auto& w = manifest.at("config").at("train").at("weights");
  return w.value("gamma_reg", 0.0) > 0.0;
}

std::string gamma_label(double g) {
  std::ostringstream os;
  os << g;
  return os.str();
}

}  // namespace

void ExperimentConfig::validate() const {
  if (dataset.n < 10) throw InvalidConfig("dataset.n must be >= 10");
  const double sum = dataset.splits.train + dataset.splits.val + dataset.splits.test;
  if (std::abs(sum - 1.0) > 1e-9) throw InvalidConfig("dataset.splits must sum to 1");
  if (dataset.canvas.height != dataset.canvas.width) throw InvalidConfig("dataset.canvas must be square");
  if (model.image_size != dataset.canvas.height) throw InvalidConfig("model.image_size must match dataset.canvas");
  model.validate();
  train.validate();
  if (uses_attributes(train.method) && model.num_regularized_dims < 1) {
    throw InvalidConfig(std::string(method_name(train.method)) + " needs model.num_regularized_dims >= 1");
  }
  parse_split(eval.split);
  if (eval.traversal_steps < 3) throw InvalidConfig("eval.traversal_steps must be >= 3");
  if (eval.traversal_bases < 1) throw InvalidConfig("eval.traversal_bases must be >= 1");
  if (!(eval.traversal_range.lo < eval.traversal_range.hi)) throw InvalidConfig("eval.traversal_range is empty");
}

void to_json(json& j, const ExperimentConfig& c) {
  j = json{{"dataset",
            {{"n", c.dataset.n},
             {"seed", c.dataset.seed},
             {"canvas", {c.dataset.canvas.height, c.dataset.canvas.width}},
             {"splits", {c.dataset.splits.train, c.dataset.splits.val, c.dataset.splits.test}}}},
           {"model", c.model},
           {"train", c.train},
           {"eval",
            {{"split", c.eval.split},
             {"reconstruction", c.eval.reconstruction},
             {"latent_metrics", c.eval.latent_metrics},
             {"traversal_range", {c.eval.traversal_range.lo, c.eval.traversal_range.hi}},
             {"traversal_steps", c.eval.traversal_steps},
             {"traversal_bases", c.eval.traversal_bases},
             {"traversal_seed", c.eval.traversal_seed}}},
           {"output_dir", c.output_dir.string()}};
}

void from_json(const json& j, ExperimentConfig& c) {
  try {
    if (j.contains("dataset")) {
      const auto& d = j.at("dataset");
      c.dataset.n = d.value("n", c.dataset.n);
      c.dataset.seed = d.value("seed", c.dataset.seed);
      if (d.contains("canvas")) {
        const auto v = d.at("canvas").get<std::vector<int>>();
        if (v.size() != 2) throw InvalidConfig("dataset.canvas must be [height, width]");
        c.dataset.canvas = {v[0], v[1]};
      }
      if (d.contains("splits")) {
        const auto v = d.at("splits").get<std::vector<double>>();
        if (v.size() != 3) throw InvalidConfig("dataset.splits must be [train, val, test]");
        c.dataset.splits = {v[0], v[1], v[2]};
      }
    }
    if (j.contains("model")) {
      json merged = c.model;
      merged.update(j.at("model"));
      c.model = merged.get<ModelConfig>();
    }
    if (j.contains("train")) c.train = j.at("train").get<TrainConfig>();
    if (j.contains("eval")) {
      const auto& e = j.at("eval");
      c.eval.split = e.value("split", c.eval.split);
      c.eval.reconstruction = e.value("reconstruction", c.eval.reconstruction);
      c.eval.latent_metrics = e.value("latent_metrics", c.eval.latent_metrics);
      if (e.contains("traversal_range")) {
        const auto v = e.at("traversal_range").get<std::vector<double>>();
        if (v.size() != 2) throw InvalidConfig("eval.traversal_range must be [lo, hi]");
        c.eval.traversal_range = {v[0], v[1]};
      }
      c.eval.traversal_steps = e.value("traversal_steps", c.eval.traversal_steps);
      c.eval.traversal_bases = e.value("traversal_bases", c.eval.traversal_bases);
      c.eval.traversal_seed = e.value("traversal_seed", c.eval.traversal_seed);
    }
    if (j.contains("output_dir")) c.output_dir = j.at("output_dir").get<std::string>();
  } catch (const json::exception& e) {
    throw InvalidConfig(std::string("malformed config: ") + e.what());
  }
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  json j;
  try {
    j = read_json(path);
  } catch (const json::exception& e) {
    throw InvalidConfig("cannot parse " + path.string() + ": " + e.what());
  } catch (const std::runtime_error& e) {
    throw InvalidConfig(e.what());
  }
  return j.get<ExperimentConfig>();
}

fs::path cmd_generate(const ExperimentConfig& cfg, const fs::path& archive_dir) {
  if (fs::exists(archive_dir / "manifest.json")) {
    throw std::runtime_error("refusing to overwrite existing archive " + archive_dir.string());
  }
  const auto ds = generate_dataset(cfg.dataset.n, cfg.dataset.seed, cfg.dataset.canvas, cfg.dataset.splits);
  save_dataset(ds, archive_dir);

  std::cout << "archive   " << archive_dir.string() << '\n'
            << "samples   " << ds.n << " (train " << ds.train.size() << ", val " << ds.val.size() << ", test "
            << ds.test.size() << ")\n"
            << "canvas    " << ds.canvas.height << "x" << ds.canvas.width << '\n'
            << "hash      " << archive_content_hash(archive_dir) << '\n';
  for (int a = 0; a < kNumAttributes; ++a) {
    float lo = ds.attributes[static_cast<size_t>(a)], hi = lo;
    for (int64_t i = 0; i < ds.n; ++i) {
      const float v = ds.attributes[static_cast<size_t>(i * kNumAttributes + a)];
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    std::cout << "  " << std::left << std::setw(12) << ds.names[static_cast<size_t>(a)] << " [" << lo << ", " << hi
              << "]\n";
  }
  return archive_dir;
}

fs::path cmd_train(const ExperimentConfig& cfg, const fs::path& archive_dir, const fs::path& run_dir) {
  cfg.validate();
  const auto ds = load_dataset(archive_dir);
  Trainer trainer(cfg.train, cfg.model, ds);
  auto result = trainer.fit(run_dir);
  auto manifest = result.manifest;
  manifest["dataset_path"] = fs::absolute(archive_dir).string();
  manifest["experiment"] = cfg;
  write_json(run_dir / "manifest.json", manifest);
  std::cout << "run       " << run_dir.string() << '\n'
            << "method    " << method_name(cfg.train.method) << '\n'
            << "epochs    " << result.state.epoch << " (best " << result.state.best_epoch << ")\n";
  return run_dir;
}

MetricsReport cmd_evaluate(const fs::path& run_dir, const fs::path& archive_dir, const EvalSection& eval,
                           const std::optional<fs::path>& out_dir) {
  if (!fs::exists(run_dir / "best" / "manifest.json")) {
    throw std::runtime_error("checkpoint not found: " + (run_dir / "best").string());
  }
  const auto manifest = read_json(run_dir / "manifest.json");
  auto model = load_checkpoint(run_dir / "best");
  const auto ds = load_dataset(archive_dir);
  const auto hash = dataset_content_hash(ds);
  if (manifest.value("dataset_hash", "") != hash) {
    std::cerr << "warning: run was trained on a different dataset than " << archive_dir.string() << '\n';
  }
  auto report = evaluate_model(model, ds, parse_split(eval.split), regularized_dims_of(manifest, model.config()),
                               manifest.at("method").get<std::string>());
  const fs::path out = out_dir.value_or(run_dir);
  json j = report;
  j["dataset_hash"] = hash;
  j["run"] = run_dir.filename().string();
  if (!eval.reconstruction) {
    for (const char* k : {"ssim_all", "ssim_ed", "ssim_es", "pfd_all", "pfd_ed", "pfd_es"}) j.erase(k);
  }
  if (!eval.latent_metrics) {
    for (const char* k : {"scc", "modularity", "sap", "interp_all", "interp_edv", "interp_esv", "per_attribute",
                          "per_dim"}) {
      j.erase(k);
    }
  }
  write_json(out / "report.json", j);
  write_text(out / "tables.txt",
             render_comparison({{run_dir.filename().string(), is_regularized(manifest), report, hash}}));
  return report;
}

json cmd_traverse(const fs::path& run_dir, const fs::path& archive_dir, const EvalSection& eval,
                  const fs::path& out_dir) {
  if (!fs::exists(run_dir / "best" / "manifest.json")) {
    throw std::runtime_error("checkpoint not found: " + (run_dir / "best").string());
  }
  const auto manifest = read_json(run_dir / "manifest.json");
  auto model = load_checkpoint(run_dir / "best");
  const auto ds = load_dataset(archive_dir);
  const int reg = regularized_dims_of(manifest, model.config());
  const int dims = reg > 0 ? reg : static_cast<int>(std::min<int64_t>(kNumAttributes, model.latent_dim()));
  const int bases_n = std::min<int>(eval.traversal_bases, static_cast<int>(ds.test.size()));
  const auto bases = sample_base_codes(model, ds, bases_n, eval.traversal_seed);

  json record = {{"run", run_dir.filename().string()},
                 {"range", {eval.traversal_range.lo, eval.traversal_range.hi}},
                 {"steps", eval.traversal_steps},
                 {"bases", bases_n},
                 {"dims", json::array()}};
  std::vector<TraversalGrid> strip;
  double sum = 0.0;
  for (int k = 0; k < dims; ++k) {
    const auto& name = attribute_names()[static_cast<size_t>(k)];
    if (attribute_ref(name).channel >= model.channels()) continue;
    auto grid = traverse(model, bases.front(), k, eval.traversal_range, eval.traversal_steps);
    measure_grid(grid, name);
    const auto mono = traversal_monotonicity(model, bases, k, name, eval.traversal_range, eval.traversal_steps);
    sum += mono.score;
    record["dims"].push_back({{"first_base", traversal_record(grid, name)},
                              {"monotonicity", mono.score},
                              {"per_base", mono.per_base},
                              {"undefined", mono.undefined}});
    strip.push_back(std::move(grid));
  }
  if (strip.empty()) throw ContractError("no traversable dimensions for this model");
  record["mean_monotonicity"] = sum / static_cast<double>(strip.size());
  write_traversal_png(strip, out_dir / "traversal.png");
  write_json(out_dir / "traversal.json", record);
  return record;
}

std::string cmd_compare(const std::vector<fs::path>& run_dirs, const std::optional<fs::path>& out_dir) {
  if (run_dirs.empty()) throw ContractError("compare needs at least one run directory");
  std::vector<ComparisonRow> rows;
  for (const auto& dir : run_dirs) {
    if (!fs::exists(dir / "report.json")) {
      throw std::runtime_error("no report.json in " + dir.string() + " (run `evaluate` first)");
    }
    const auto manifest = read_json(dir / "manifest.json");
    const auto report_json = read_json(dir / "report.json");
    ComparisonRow row;
    row.label = manifest.at("method").get<std::string>() + " (" + dir.filename().string() + ")";
    row.regularized = is_regularized(manifest);
    row.report = report_json.get<MetricsReport>();
    row.dataset_hash = manifest.value("dataset_hash", "");
    rows.push_back(std::move(row));
  }
  const auto table = render_comparison(rows);
  if (out_dir) {
    json j = json::array();
    for (const auto& r : rows) {
      j.push_back({{"label", r.label}, {"regularized", r.regularized}, {"dataset_hash", r.dataset_hash},
                   {"report", r.report}});
    }
    write_text(*out_dir / "comparison.txt", table);
    write_json(*out_dir / "comparison.json", j);
  }
  return table;
}

json cmd_ablate_gamma(const ExperimentConfig& cfg, const fs::path& archive_dir, const std::vector<double>& gammas,
                      const fs::path& out_dir) {
  if (gammas.empty()) throw InvalidConfig("gamma list is empty");
  json rows = json::array();
  std::vector<ComparisonRow> table_rows;
  for (double g : gammas) {
    if (!(g >= 0.0)) throw InvalidConfig("gamma values must be >= 0");
    ExperimentConfig run_cfg = cfg;
    run_cfg.train.method = Method::ArSivae;
    run_cfg.train.weights.gamma_reg = g;
    const auto run_dir = out_dir / ("gamma_" + gamma_label(g));
    cmd_train(run_cfg, archive_dir, run_dir);
    const auto report = cmd_evaluate(run_dir, archive_dir, cfg.eval);
    rows.push_back({{"gamma_reg", g},
                    {"run_dir", run_dir.string()},
                    {"scc", report.scc.mean},
                    {"interp", report.interp.mean},
                    {"ssim", report.recon.ssim_all},
                    {"pfd", report.recon.pfd_all}});
    table_rows.push_back({"gamma=" + gamma_label(g), g > 0.0, report, ""});
  }

  bool scc_non_decreasing = true;
  for (size_t i = 1; i < rows.size(); ++i) {
    if (gammas[i] >= gammas[i - 1] && rows[i]["scc"].get<double>() < rows[i - 1]["scc"].get<double>()) {
      scc_non_decreasing = false;
    }
  }
  std::ostringstream summary;
  summary << "gamma_reg sweep\n\n"
          << std::left << std::setw(12) << "gamma_reg" << std::setw(10) << "SCC" << std::setw(10) << "Interp."
          << std::setw(10) << "SSIM" << "PFD\n";
  for (const auto& r : rows) {
    summary << std::setw(12) << gamma_label(r["gamma_reg"].get<double>()) << std::fixed << std::setprecision(3)
            << std::setw(10) << r["scc"].get<double>() << std::setw(10) << r["interp"].get<double>() << std::setw(10)
            << r["ssim"].get<double>() << std::setprecision(5) << r["pfd"].get<double>() << '\n';
    summary.unsetf(std::ios::fixed);
  }
  summary << "\nSCC non-decreasing in gamma_reg: " << (scc_non_decreasing ? "yes" : "no") << "\n\n"
          << render_comparison(table_rows);

  json sweep = {{"rows", rows}, {"scc_non_decreasing", scc_non_decreasing}};
  write_json(out_dir / "sweep.json", sweep);
  write_text(out_dir / "sweep.txt", summary.str());
  std::cout << summary.str();
  return sweep;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Attribute-regularized introspective VAE toolkit"};
  app.require_subcommand(0, 1);

  std::string config_path, output_dir, device;
  std::optional<uint64_t> seed;
  bool print_config = false;
  app.add_option("--config", config_path, "Experiment config (JSON, comments allowed)");
  app.add_option("--seed", seed, "Override dataset and training seeds");
  app.add_option("--output-dir", output_dir, "Root directory for outputs");
  app.add_option("--device", device, "Compute device (cpu)");
  app.add_flag("--print-config", print_config, "Print the resolved config and exit");

  std::string data_dir, run_dir, out_dir, method, split;
  std::optional<int> epochs;
  std::optional<int64_t> n;
  std::optional<double> gamma;
  std::vector<std::string> run_dirs;
  std::vector<double> gammas{0, 1, 10, 100, 1000};

  auto* gen = app.add_subcommand("generate", "Generate a synthetic dataset archive");
  gen->add_option("--out", out_dir, "Archive directory (default <output-dir>/dataset)");
  gen->add_option("--n", n, "Number of samples");

  auto* train = app.add_subcommand("train", "Train one model");
  train->add_option("--data", data_dir, "Dataset archive (default <output-dir>/dataset)");
  train->add_option("--method", method, "beta_vae | attri_vae | sivae | ar_sivae");
  train->add_option("--epochs", epochs);
  train->add_option("--gamma", gamma, "Attribute regularization weight");
  train->add_option("--run-dir", run_dir, "Run directory (default <output-dir>/<method>_seed<seed>)");

  auto* eval = app.add_subcommand("evaluate", "Evaluate the best checkpoint of a run");
  eval->add_option("--run", run_dir)->required();
  eval->add_option("--data", data_dir, "Dataset archive (default: the one the run was trained on)");
  eval->add_option("--split", split);
  eval->add_option("--out", out_dir, "Report directory (default: the run directory)");

  auto* trav = app.add_subcommand("traverse", "Latent traversal figure and monotonicity record");
  trav->add_option("--run", run_dir)->required();
  trav->add_option("--data", data_dir);
  trav->add_option("--out", out_dir, "Output directory (default <run>/traversal)");

  auto* cmp = app.add_subcommand("compare", "Merge evaluated runs into comparison tables");
  cmp->add_option("runs", run_dirs, "Evaluated run directories")->required();
  cmp->add_option("--out", out_dir, "Also write comparison.txt/json here");

  auto* abl = app.add_subcommand("ablate-gamma", "Sweep the attribute regularization weight");
  abl->add_option("--data", data_dir);
  abl->add_option("--gammas", gammas, "gamma_reg values")->delimiter(',');
  abl->add_option("--out", out_dir, "Sweep directory (default <output-dir>/ablation)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    ExperimentConfig cfg;
    if (!config_path.empty()) cfg = load_experiment_config(config_path);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (!device.empty()) cfg.train.device = device;
    if (!method.empty()) {
      const auto m = parse_method(method);
      const auto old = TrainConfig::defaults_for(cfg.train.method);
      const auto fresh = TrainConfig::defaults_for(m);
      // Learning rates still at the old family's defaults follow the new method.
      if (cfg.train.lr_encoder == old.lr_encoder) cfg.train.lr_encoder = fresh.lr_encoder;
      if (cfg.train.lr_decoder == old.lr_decoder) cfg.train.lr_decoder = fresh.lr_decoder;
      cfg.train.method = m;
    }
    if (seed) {
      cfg.train.seed = *seed;
      cfg.dataset.seed = *seed;
    }
    if (epochs) {
      cfg.train.epochs = *epochs;
      cfg.train.patience = std::min(cfg.train.patience, std::max(*epochs, 1));
    }
    if (gamma) cfg.train.weights.gamma_reg = *gamma;
    if (n) cfg.dataset.n = *n;
    if (!split.empty()) cfg.eval.split = split;

    if (print_config) {
      std::cout << json(cfg).dump(2) << '\n';
      return 0;
    }
    if (app.get_subcommands().empty()) {
      std::cerr << app.help();
      return 2;
    }
    cfg.validate();

    const auto default_data = [&] { return data_dir.empty() ? cfg.output_dir / "dataset" : fs::path(data_dir); };
    const auto data_of_run = [&](const fs::path& run) {
      if (!data_dir.empty()) return fs::path(data_dir);
      const auto mpath = run / "manifest.json";
      if (fs::exists(mpath)) {
        const auto m = read_json(mpath);
        if (m.contains("dataset_path")) return fs::path(m.at("dataset_path").get<std::string>());
      }
      return cfg.output_dir / "dataset";
    };

    if (gen->parsed()) {
      cmd_generate(cfg, out_dir.empty() ? cfg.output_dir / "dataset" : fs::path(out_dir));
    } else if (train->parsed()) {
      const fs::path rd = run_dir.empty() ? cfg.output_dir / (std::string(method_name(cfg.train.method)) + "_seed" +
                                                              std::to_string(cfg.train.seed))
                                          : fs::path(run_dir);
      cmd_train(cfg, default_data(), rd);
    } else if (eval->parsed()) {
      const auto report = cmd_evaluate(run_dir, data_of_run(run_dir), cfg.eval,
                                       out_dir.empty() ? std::nullopt : std::optional<fs::path>(out_dir));
      const fs::path where = out_dir.empty() ? fs::path(run_dir) : fs::path(out_dir);
      std::ifstream tables(where / "tables.txt");
      std::cout << tables.rdbuf();
    } else if (trav->parsed()) {
      const fs::path od = out_dir.empty() ? fs::path(run_dir) / "traversal" : fs::path(out_dir);
      const auto rec = cmd_traverse(run_dir, data_of_run(run_dir), cfg.eval, od);
      std::cout << "traversal written to " << od.string() << " (mean monotonicity "
                << rec.at("mean_monotonicity").get<double>() << ")\n";
    } else if (cmp->parsed()) {
      std::vector<fs::path> dirs(run_dirs.begin(), run_dirs.end());
      std::cout << cmd_compare(dirs, out_dir.empty() ? std::nullopt : std::optional<fs::path>(out_dir));
    } else if (abl->parsed()) {
      cmd_ablate_gamma(cfg, default_data(), gammas, out_dir.empty() ? cfg.output_dir / "ablation" : fs::path(out_dir));
    }
    return 0;
  } catch (const InvalidConfig& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const TrainingDivergence& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace arsivae
