#include "arsivae/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "arsivae/errors.hpp"

namespace arsivae {

namespace {

std::vector<double> gaussian_kernel(int window, double sigma) {
  std::vector<double> g(static_cast<size_t>(window));
  const double c = (window - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < window; ++i) {
    const double d = i - c;
    g[static_cast<size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
    sum += g[static_cast<size_t>(i)];
  }
  for (auto& v : g) v /= sum;
  return g;
}

// Separable "valid" filtering of a row-major plane.
std::vector<double> filter_valid(const std::vector<double>& img, int h, int w, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = h - k + 1;
  const int ow = w - k + 1;
  std::vector<double> rows(static_cast<size_t>(h) * static_cast<size_t>(ow));
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += g[static_cast<size_t>(i)] * img[static_cast<size_t>(r * w + c + i)];
      rows[static_cast<size_t>(r * ow + c)] = acc;
    }
  }
  std::vector<double> out(static_cast<size_t>(oh) * static_cast<size_t>(ow));
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += g[static_cast<size_t>(i)] * rows[static_cast<size_t>((r + i) * ow + c)];
      out[static_cast<size_t>(r * ow + c)] = acc;
    }
  }
  return out;
}

double mean_of(const std::vector<double>& v) {
  return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

std::vector<double> column(const Eigen::MatrixXd& m, Eigen::Index j) {
  std::vector<double> out(static_cast<size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) out[static_cast<size_t>(i)] = m(i, j);
  return out;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

}  // namespace

double ssim(std::span<const float> x, std::span<const float> y, int height, int width, const SsimOptions& opts) {
  const size_t n = static_cast<size_t>(height) * static_cast<size_t>(width);
  if (x.size() != n || y.size() != n) throw ContractError("ssim: image sizes do not match height * width");
  if (height < opts.window || width < opts.window) throw ContractError("ssim: image smaller than the window");
  if (!(opts.data_range > 0.0)) throw ContractError("ssim: data_range must be positive");

  const auto g = gaussian_kernel(opts.window, opts.sigma);
  std::vector<double> xd(x.begin(), x.end()), yd(y.begin(), y.end()), xx(n), yy(n), xy(n);
  for (size_t i = 0; i < n; ++i) {
    xx[i] = xd[i] * xd[i];
    yy[i] = yd[i] * yd[i];
    xy[i] = xd[i] * yd[i];
  }
  const auto mx = filter_valid(xd, height, width, g);
  const auto my = filter_valid(yd, height, width, g);
  const auto sxx = filter_valid(xx, height, width, g);
  const auto syy = filter_valid(yy, height, width, g);
  const auto sxy = filter_valid(xy, height, width, g);

  const double c1 = std::pow(0.01 * opts.data_range, 2);
  const double c2 = std::pow(0.03 * opts.data_range, 2);
  double acc = 0.0;
  for (size_t i = 0; i < mx.size(); ++i) {
    const double vx = sxx[i] - mx[i] * mx[i];
    const double vy = syy[i] - my[i] * my[i];
    const double cov = sxy[i] - mx[i] * my[i];
    acc += ((2.0 * mx[i] * my[i] + c1) * (2.0 * cov + c2)) /
           ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
  }
  return acc / static_cast<double>(mx.size());
}

double ssim_planes(std::span<const float> x, std::span<const float> y, int64_t planes, int height, int width,
                   const SsimOptions& opts) {
  const size_t plane = static_cast<size_t>(height) * static_cast<size_t>(width);
  if (planes < 1 || x.size() != plane * static_cast<size_t>(planes) || y.size() != x.size()) {
    throw ContractError("ssim_planes: buffer sizes do not match planes * height * width");
  }
  double acc = 0.0;
  for (int64_t p = 0; p < planes; ++p) {
    acc += ssim(x.subspan(static_cast<size_t>(p) * plane, plane), y.subspan(static_cast<size_t>(p) * plane, plane),
                height, width, opts);
  }
  return acc / static_cast<double>(planes);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<size_t> order(values.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  size_t i = 0;
  while (i < order.size()) {
    size_t j = i + 1;
    while (j < order.size() && values[order[j]] == values[order[i]]) ++j;
    const double avg = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (size_t k = i; k < j; ++k) ranks[order[k]] = avg;
    i = j;
  }
  return ranks;
}

double spearman(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw ContractError("spearman: inputs differ in length");
  if (u.size() < 3) throw ContractError("spearman: needs at least 3 samples");
  if (is_constant(u) || is_constant(v)) throw UndefinedMetric("spearman: correlation undefined for constant input");
  const auto ru = average_ranks(u);
  const auto rv = average_ranks(v);
  const double mu = mean_of(ru);
  const double mv = mean_of(rv);
  double suv = 0.0, suu = 0.0, svv = 0.0;
  for (size_t i = 0; i < ru.size(); ++i) {
    const double a = ru[i] - mu;
    const double b = rv[i] - mv;
    suv += a * b;
    suu += a * a;
    svv += b * b;
  }
  return std::clamp(suv / std::sqrt(suu * svv), -1.0, 1.0);
}

void CodesTable::validate() const {
  if (codes.rows() != attributes.rows()) throw ContractError("codes and attributes differ in sample count");
  if (codes.rows() < 10) throw ContractError("metrics need at least 10 samples");
  if (codes.cols() < 1 || attributes.cols() < 1) throw ContractError("empty codes or attributes");
  if (!attribute_names.empty() && static_cast<Eigen::Index>(attribute_names.size()) != attributes.cols()) {
    throw ContractError("attribute_names does not match attribute columns");
  }
  for (Eigen::Index j = 0; j < attributes.cols(); ++j) {
    const auto col = column(attributes, j);
    if (is_constant(col)) throw UndefinedMetric("attribute column " + std::to_string(j) + " is constant");
  }
}

Eigen::MatrixXd spearman_dependence(const CodesTable& t) {
  t.validate();
  Eigen::MatrixXd dep = Eigen::MatrixXd::Zero(t.dims(), t.num_attributes());
  std::vector<std::vector<double>> attrs;
  for (Eigen::Index j = 0; j < t.num_attributes(); ++j) attrs.push_back(column(t.attributes, j));
  for (Eigen::Index k = 0; k < t.dims(); ++k) {
    const auto z = column(t.codes, k);
    if (is_constant(z)) continue;  // a constant code carries no information
    for (Eigen::Index j = 0; j < t.num_attributes(); ++j) {
      dep(k, j) = std::abs(spearman(z, attrs[static_cast<size_t>(j)]));
    }
  }
  return dep;
}

AttributeMetric scc_metric(const CodesTable& t) {
  const auto dep = spearman_dependence(t);
  AttributeMetric out;
  for (Eigen::Index j = 0; j < dep.cols(); ++j) out.per_attribute.push_back(dep.col(j).maxCoeff());
  out.mean = mean_of(out.per_attribute);
  return out;
}

Eigen::MatrixXd univariate_r2_scores(const CodesTable& t) {
  t.validate();
  const Eigen::Index n = t.samples();
  const Eigen::Index n_fit = (n + 1) / 2;
  const Eigen::Index n_test = n / 2;
  if (n_fit < 5 || n_test < 5) throw ContractError("interpretability needs at least 5 samples per half");

  Eigen::MatrixXd scores = Eigen::MatrixXd::Zero(t.dims(), t.num_attributes());
  for (Eigen::Index k = 0; k < t.dims(); ++k) {
    double mz = 0.0;
    for (Eigen::Index i = 0; i < n; i += 2) mz += t.codes(i, k);
    mz /= static_cast<double>(n_fit);
    double szz = 0.0;
    for (Eigen::Index i = 0; i < n; i += 2) szz += (t.codes(i, k) - mz) * (t.codes(i, k) - mz);
    for (Eigen::Index j = 0; j < t.num_attributes(); ++j) {
      double ma = 0.0;
      for (Eigen::Index i = 0; i < n; i += 2) ma += t.attributes(i, j);
      ma /= static_cast<double>(n_fit);
      double sza = 0.0;
      for (Eigen::Index i = 0; i < n; i += 2) sza += (t.codes(i, k) - mz) * (t.attributes(i, j) - ma);
      const double slope = szz > 0.0 ? sza / szz : 0.0;
      const double intercept = ma - slope * mz;

      double mt = 0.0;
      for (Eigen::Index i = 1; i < n; i += 2) mt += t.attributes(i, j);
      mt /= static_cast<double>(n_test);
      double ss_res = 0.0, ss_tot = 0.0;
      for (Eigen::Index i = 1; i < n; i += 2) {
        const double pred = intercept + slope * t.codes(i, k);
        ss_res += (t.attributes(i, j) - pred) * (t.attributes(i, j) - pred);
        ss_tot += (t.attributes(i, j) - mt) * (t.attributes(i, j) - mt);
      }
      const double r2 = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : 0.0;
      scores(k, j) = std::clamp(r2, 0.0, 1.0);
    }
  }
  return scores;
}

InterpretabilityResult interpretability_score(const CodesTable& t) {
  const auto scores = univariate_r2_scores(t);
  InterpretabilityResult out;
  std::vector<double> ed, es;
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    Eigen::Index best = 0;
    const double v = scores.col(j).maxCoeff(&best);
    out.per_attribute.push_back(v);
    out.best_dim.push_back(static_cast<int>(best));
    if (static_cast<size_t>(j) < t.attribute_names.size()) {
      const auto& name = t.attribute_names[static_cast<size_t>(j)];
      if (ends_with(name, "_ed")) ed.push_back(v);
      if (ends_with(name, "_es")) es.push_back(v);
    }
  }
  out.mean = mean_of(out.per_attribute);
  out.ed_mean = ed.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_of(ed);
  out.es_mean = es.empty() ? std::numeric_limits<double>::quiet_NaN() : mean_of(es);
  return out;
}

AttributeMetric sap_metric(const CodesTable& t) {
  if (t.dims() < 2) throw ContractError("SAP needs at least two latent dims");
  const auto scores = univariate_r2_scores(t);
  AttributeMetric out;
  for (Eigen::Index j = 0; j < scores.cols(); ++j) {
    std::vector<double> col = column(scores, j);
    std::partial_sort(col.begin(), col.begin() + 2, col.end(), std::greater<>());
    out.per_attribute.push_back(col[0] - col[1]);
  }
  out.mean = mean_of(out.per_attribute);
  return out;
}

ModularityResult modularity_metric(const CodesTable& t, double tau) {
  const Eigen::MatrixXd dep = spearman_dependence(t).array().square().matrix();
  const auto m = dep.cols();
  ModularityResult out;
  std::vector<double> active;
  for (Eigen::Index k = 0; k < dep.rows(); ++k) {
    Eigen::Index best = 0;
    const double theta = dep.row(k).maxCoeff(&best);
    if (!(theta > tau)) {
      out.per_dim.push_back(std::numeric_limits<double>::quiet_NaN());
      continue;
    }
    double value = 1.0;
    if (m > 1) {
      double off = 0.0;
      for (Eigen::Index j = 0; j < m; ++j) {
        if (j != best) off += dep(k, j) * dep(k, j);
      }
      value = 1.0 - off / (theta * theta * static_cast<double>(m - 1));
    }
    out.per_dim.push_back(value);
    active.push_back(value);
  }
  if (active.empty()) throw UndefinedMetric("modularity: no latent dim depends on any attribute");
  out.active_dims = static_cast<int>(active.size());
  out.mean = mean_of(active);
  return out;
}

}  // namespace arsivae
