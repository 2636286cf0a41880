#include "arsivae/evaluate.hpp"

#include <cmath>
#include <iomanip>
#include <limits>
#include <set>
#include <sstream>

#include "arsivae/errors.hpp"
#include "arsivae/perceptual.hpp"

namespace arsivae {

using nlohmann::json;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double number_or_nan(const json& j, const char* key) {
  return j.contains(key) && j.at(key).is_number() ? j.at(key).get<double>() : kNaN;
}

std::vector<double> numbers_or_nan(const json& j) {
  std::vector<double> out;
  for (const auto& v : j) out.push_back(v.is_number() ? v.get<double>() : kNaN);
  return out;
}

json numbers_or_null(const std::vector<double>& v) {
  json out = json::array();
  for (double x : v) out.push_back(number_or_null(x));
  return out;
}

double ssim_of(const torch::Tensor& x, const torch::Tensor& y) {
  const auto xc = x.to(torch::kFloat32).contiguous();
  const auto yc = y.to(torch::kFloat32).contiguous();
  const auto planes = xc.size(0) * xc.size(1);
  const auto h = static_cast<int>(xc.size(2));
  const auto w = static_cast<int>(xc.size(3));
  const std::span<const float> xs(xc.data_ptr<float>(), static_cast<size_t>(xc.numel()));
  const std::span<const float> ys(yc.data_ptr<float>(), static_cast<size_t>(yc.numel()));
  return ssim_planes(xs, ys, planes, h, w);
}

std::string fmt(double v, int precision = 3) {
  if (!std::isfinite(v)) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << v;
  return os.str();
}

}  // namespace

ReconstructionScores reconstruction_scores(const torch::Tensor& x, const torch::Tensor& x_hat) {
  if (x.sizes() != x_hat.sizes() || x.dim() != 4) throw ContractError("reconstruction_scores: shape mismatch");
  torch::NoGradGuard guard;
  ReconstructionScores s;
  s.ssim_all = ssim_of(x, x_hat);
  s.pfd_all = perceptual_feature_distance(x, x_hat);
  if (x.size(1) == kNumPhases) {
    s.ssim_ed = ssim_of(x.narrow(1, 0, 1), x_hat.narrow(1, 0, 1));
    s.ssim_es = ssim_of(x.narrow(1, 1, 1), x_hat.narrow(1, 1, 1));
    s.pfd_ed = perceptual_feature_distance(x.narrow(1, 0, 1), x_hat.narrow(1, 0, 1));
    s.pfd_es = perceptual_feature_distance(x.narrow(1, 1, 1), x_hat.narrow(1, 1, 1));
  } else {
    s.ssim_ed = s.ssim_all;
    s.pfd_ed = s.pfd_all;
    s.ssim_es = s.pfd_es = kNaN;
  }
  return s;
}

void to_json(json& j, const MetricsReport& r) {
  j = json{{"method", r.method},
           {"split", r.split},
           {"samples", r.samples},
           {"ssim_all", number_or_null(r.recon.ssim_all)},
           {"ssim_ed", number_or_null(r.recon.ssim_ed)},
           {"ssim_es", number_or_null(r.recon.ssim_es)},
           {"pfd_all", number_or_null(r.recon.pfd_all)},
           {"pfd_ed", number_or_null(r.recon.pfd_ed)},
           {"pfd_es", number_or_null(r.recon.pfd_es)},
           {"scc", number_or_null(r.scc.mean)},
           {"modularity", number_or_null(r.modularity.mean)},
           {"sap", number_or_null(r.sap.mean)},
           {"interp_all", number_or_null(r.interp.mean)},
           {"interp_edv", number_or_null(r.interp.ed_mean)},
           {"interp_esv", number_or_null(r.interp.es_mean)},
           {"attribute_names", r.attribute_names},
           {"regularized_dim_map", r.regularized_dim_map},
           {"per_attribute",
            {{"scc", numbers_or_null(r.scc.per_attribute)},
             {"sap", numbers_or_null(r.sap.per_attribute)},
             {"interp", numbers_or_null(r.interp.per_attribute)},
             {"interp_best_dim", r.interp.best_dim}}},
           {"per_dim", {{"modularity", numbers_or_null(r.modularity.per_dim)}}}};
}

void from_json(const json& j, MetricsReport& r) {
  r.method = j.value("method", "");
  r.split = j.value("split", "");
  r.samples = j.value("samples", int64_t{0});
  r.recon.ssim_all = number_or_nan(j, "ssim_all");
  r.recon.ssim_ed = number_or_nan(j, "ssim_ed");
  r.recon.ssim_es = number_or_nan(j, "ssim_es");
  r.recon.pfd_all = number_or_nan(j, "pfd_all");
  r.recon.pfd_ed = number_or_nan(j, "pfd_ed");
  r.recon.pfd_es = number_or_nan(j, "pfd_es");
  r.scc.mean = number_or_nan(j, "scc");
  r.modularity.mean = number_or_nan(j, "modularity");
  r.sap.mean = number_or_nan(j, "sap");
  r.interp.mean = number_or_nan(j, "interp_all");
  r.interp.ed_mean = number_or_nan(j, "interp_edv");
  r.interp.es_mean = number_or_nan(j, "interp_esv");
  r.attribute_names = j.value("attribute_names", std::vector<std::string>{});
  r.regularized_dim_map = j.value("regularized_dim_map", std::vector<int>{});
  if (j.contains("per_attribute")) {
    const auto& pa = j.at("per_attribute");
    r.scc.per_attribute = numbers_or_nan(pa.value("scc", json::array()));
    r.sap.per_attribute = numbers_or_nan(pa.value("sap", json::array()));
    r.interp.per_attribute = numbers_or_nan(pa.value("interp", json::array()));
    r.interp.best_dim = pa.value("interp_best_dim", std::vector<int>{});
  }
  if (j.contains("per_dim")) r.modularity.per_dim = numbers_or_nan(j.at("per_dim").value("modularity", json::array()));
}

torch::Tensor split_images(const DatasetArchive& ds, Split split, int64_t channels) {
  const auto& rows = ds.indices(split);
  if (rows.empty()) throw ContractError("split '" + std::string(split_name(split)) + "' is empty");
  const auto all = torch::from_blob(const_cast<float*>(ds.images.data()),
                                    {ds.n, kNumPhases, ds.canvas.height, ds.canvas.width}, torch::kFloat32);
  auto out = all.index_select(0, torch::tensor(rows, torch::kLong));
  if (channels == 1) out = out.narrow(1, 0, 1);
  return out.contiguous();
}

CodesTable build_codes_table(Autoencoder& model, const DatasetArchive& ds, Split split, int regularized_dims,
                             int64_t batch_size) {
  const auto images = split_images(ds, split, model.channels());
  const auto n = images.size(0);
  std::vector<torch::Tensor> mus;
  for (int64_t i = 0; i < n; i += batch_size) {
    mus.push_back(model.encode_mean(images.narrow(0, i, std::min(batch_size, n - i))));
  }
  const auto mu = torch::cat(mus).to(torch::kDouble).contiguous();
  CodesTable t;
  t.codes = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      mu.data_ptr<double>(), mu.size(0), mu.size(1));
  const auto& rows = ds.indices(split);
  t.attributes.resize(static_cast<Eigen::Index>(rows.size()), kNumAttributes);
  for (size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < kNumAttributes; ++j) {
      t.attributes(static_cast<Eigen::Index>(i), j) =
          ds.attributes[static_cast<size_t>(rows[i]) * kNumAttributes + static_cast<size_t>(j)];
    }
  }
  t.attribute_names = ds.names;
  for (int j = 0; j < std::min(regularized_dims, kNumAttributes); ++j) t.regularized_dim_map.push_back(j);
  return t;
}

MetricsReport evaluate_model(Autoencoder& model, const DatasetArchive& ds, Split split, int regularized_dims,
                             const std::string& method, int64_t batch_size) {
  MetricsReport r;
  r.method = method;
  r.split = std::string(split_name(split));
  const auto images = split_images(ds, split, model.channels());
  const auto n = images.size(0);
  r.samples = n;

  std::vector<torch::Tensor> recs;
  for (int64_t i = 0; i < n; i += batch_size) {
    const auto chunk = images.narrow(0, i, std::min(batch_size, n - i));
    recs.push_back(model.decode_codes(model.encode_mean(chunk)));
  }
  r.recon = reconstruction_scores(images, torch::cat(recs));

  const auto table = build_codes_table(model, ds, split, regularized_dims, batch_size);
  r.attribute_names = table.attribute_names;
  r.regularized_dim_map = table.regularized_dim_map;
  r.scc = scc_metric(table);
  r.sap = sap_metric(table);
  r.interp = interpretability_score(table);
  try {
    r.modularity = modularity_metric(table);
  } catch (const UndefinedMetric&) {
    r.modularity.mean = kNaN;
    r.modularity.per_dim.assign(static_cast<size_t>(table.dims()), kNaN);
  }
  return r;
}

std::string render_comparison(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  std::set<std::string> hashes;
  for (const auto& row : rows) hashes.insert(row.dataset_hash);
  if (hashes.size() > 1) os << "WARNING: runs were trained on different datasets (hash mismatch)\n\n";

  size_t label_w = 6;
  for (const auto& row : rows) label_w = std::max(label_w, row.label.size());
  const auto cell = [](const std::string& s, size_t w) {
    std::string out = s;
    if (out.size() < w) out.append(w - out.size(), ' ');
    return out;
  };
  const auto header = [&](const std::vector<std::string>& cols) {
    os << cell("Method", label_w) << "  " << cell("Reg.", 4);
    for (const auto& c : cols) os << "  " << cell(c, 9);
    os << '\n';
    os << std::string(label_w + 6 + cols.size() * 11, '-') << '\n';
  };

  os << "Reconstruction (test split)\n";
  header({"SSIM All", "SSIM ED", "SSIM ES", "PFD All", "PFD ED", "PFD ES"});
  for (const auto& row : rows) {
    const auto& rc = row.report.recon;
    os << cell(row.label, label_w) << "  " << cell(row.regularized ? "yes" : "no", 4);
    for (double v : {rc.ssim_all, rc.ssim_ed, rc.ssim_es}) os << "  " << cell(fmt(v), 9);
    for (double v : {rc.pfd_all, rc.pfd_ed, rc.pfd_es}) os << "  " << cell(fmt(v, 5), 9);
    os << '\n';
  }
  os << "\nInterpretability (test split)\n";
  header({"SCC", "Mod.", "SAP", "Interp.", "EDV", "ESV"});
  for (const auto& row : rows) {
    const auto& r = row.report;
    os << cell(row.label, label_w) << "  " << cell(row.regularized ? "yes" : "no", 4);
    for (double v : {r.scc.mean, r.modularity.mean, r.sap.mean, r.interp.mean, r.interp.ed_mean, r.interp.es_mean}) {
      os << "  " << cell(fmt(v), 9);
    }
    os << '\n';
  }
  return os.str();
}

}  // namespace arsivae
