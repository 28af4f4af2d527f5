#include "fixdens/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "fixdens/kde.hpp"

namespace fixdens {

const char* component_name(Component c) {
  switch (c) {
    case kKde: return "kde";
    case kCenterBias: return "cb";
    case kUniform: return "uniform";
    case kSaliency: return "saliency";
  }
  return "?";
}

std::optional<Component> component_from_name(const std::string& name) {
  if (name == "kde") return kKde;
  if (name == "cb" || name == "centerbias") return kCenterBias;
  if (name == "uniform") return kUniform;
  if (name == "saliency") return kSaliency;
  return std::nullopt;
}

std::array<double, kNumComponents> MixtureParams::weights() const {
  auto lw = log_weights();
  std::array<double, kNumComponents> w{};
  for (int k = 0; k < kNumComponents; ++k) w[k] = active[k] ? std::exp(lw[k]) : 0.0;
  return w;
}

std::array<double, kNumComponents> MixtureParams::log_weights() const {
  if (active_count() == 0) throw std::runtime_error("mixture: all components disabled");
  double mx = -HUGE_VAL;
  for (int k = 0; k < kNumComponents; ++k)
    if (active[k]) mx = std::max(mx, logits[k]);
  double s = 0.0;
  for (int k = 0; k < kNumComponents; ++k)
    if (active[k]) s += std::exp(logits[k] - mx);
  const double log_z = mx + std::log(s);
  std::array<double, kNumComponents> lw{};
  for (int k = 0; k < kNumComponents; ++k)
    lw[k] = active[k] ? logits[k] - log_z : -HUGE_VAL;
  return lw;
}

int MixtureParams::active_count() const {
  int n = 0;
  for (bool a : active) n += a ? 1 : 0;
  return n;
}

CenterBiasModel::CenterBiasModel(std::vector<Point> normalized_sources, double bandwidth)
    : sources_(std::move(normalized_sources)), bandwidth_(bandwidth) {
  if (sources_.empty()) throw std::runtime_error("center bias: no source fixations");
  if (!(bandwidth_ > 0.0)) throw std::runtime_error("center bias: bandwidth must be positive");
  for (const auto& s : sources_)
    if (s.x < 0.0 || s.x >= 1.0 || s.y < 0.0 || s.y >= 1.0)
      throw std::runtime_error("center bias: source outside unit square");
}

namespace {
constexpr ImageGeometry kUnitSquare{1, 1};
}

double CenterBiasModel::logdensity(const Point& p, const ImageGeometry& geom) const {
  return logdensity(std::vector<Point>{p}, geom).front();
}

std::vector<double> CenterBiasModel::logdensity(const std::vector<Point>& points,
                                                const ImageGeometry& geom) const {
  std::vector<Point> normalized;
  normalized.reserve(points.size());
  for (const auto& p : points)
    normalized.push_back({p.x / geom.width, p.y / geom.height});
  auto logs = fixed_kde_logdensity(sources_, normalized, bandwidth_, kUnitSquare);
  const double log_jacobian = std::log(geom.area());
  for (double& v : logs) v -= log_jacobian;
  return logs;
}

DensityGrid CenterBiasModel::rasterize(const ImageGeometry& geom) const {
  std::vector<Point> centers;
  centers.reserve(static_cast<size_t>(geom.width) * geom.height);
  for (int iy = 0; iy < geom.height; ++iy)
    for (int ix = 0; ix < geom.width; ++ix)
      centers.push_back({ix + 0.5, iy + 0.5});
  auto logs = logdensity(centers, geom);
  DensityGrid grid;
  grid.width = geom.width;
  grid.height = geom.height;
  grid.space = GridSpace::Probability;
  grid.values.resize(logs.size());
  for (size_t i = 0; i < logs.size(); ++i) grid.values[i] = std::exp(logs[i]);
  grid.normalize();
  return grid;
}

double center_bias_loio_loglik(const std::vector<std::vector<Point>>& per_image_sources,
                               double bandwidth) {
  double total = 0.0;
  size_t count = 0;
  for (size_t i = 0; i < per_image_sources.size(); ++i) {
    if (per_image_sources[i].empty()) continue;
    std::vector<Point> train;
    for (size_t j = 0; j < per_image_sources.size(); ++j)
      if (j != i) train.insert(train.end(), per_image_sources[j].begin(),
                               per_image_sources[j].end());
    if (train.empty()) continue;
    auto logs = fixed_kde_logdensity(train, per_image_sources[i], bandwidth, kUnitSquare);
    for (double v : logs) total += v;
    count += logs.size();
  }
  if (count == 0) throw std::runtime_error("center bias: no fixations to crossvalidate");
  return total / static_cast<double>(count);
}

CenterBiasModel fit_center_bias(const DatasetBundle& dataset,
                                const std::string& holdout_image_id) {
  std::vector<std::vector<Point>> per_image;
  std::vector<Point> all;
  for (const auto& img : dataset.images) {
    if (img.image_id == holdout_image_id) continue;
    auto it = dataset.fixations.find(img.image_id);
    if (it == dataset.fixations.end() || it->second.rows.empty()) continue;
    std::vector<Point> normalized;
    for (const auto& row : it->second.rows)
      normalized.push_back({row.position.x / img.width, row.position.y / img.height});
    all.insert(all.end(), normalized.begin(), normalized.end());
    per_image.push_back(std::move(normalized));
  }
  if (per_image.empty())
    throw std::runtime_error("center bias: no other images with fixations available");

  // Golden-section search on log-bandwidth. With a single training image
  // there is nothing to crossvalidate; fall back to a fixed default.
  double best_bw = 0.1;
  if (per_image.size() >= 2) {
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = std::log(1e-3), hi = std::log(1.0);
    double a = hi - inv_phi * (hi - lo);
    double b = lo + inv_phi * (hi - lo);
    double fa = center_bias_loio_loglik(per_image, std::exp(a));
    double fb = center_bias_loio_loglik(per_image, std::exp(b));
    for (int iter = 0; iter < 60 && hi - lo > 1e-6; ++iter) {
      if (fa > fb) {
        hi = b;
        b = a;
        fb = fa;
        a = hi - inv_phi * (hi - lo);
        fa = center_bias_loio_loglik(per_image, std::exp(a));
      } else {
        lo = a;
        a = b;
        fa = fb;
        b = lo + inv_phi * (hi - lo);
        fb = center_bias_loio_loglik(per_image, std::exp(b));
      }
    }
    best_bw = std::exp(0.5 * (lo + hi));
  }
  return CenterBiasModel(std::move(all), best_bw);
}

SaliencyComponent::SaliencyComponent(DensityGrid grid, double floor_epsilon)
    : grid_(std::move(grid)), epsilon_(floor_epsilon) {
  if (grid_.space != GridSpace::Probability)
    throw std::runtime_error("saliency: grid must be in probability space");
  grid_.check_invariants();
  if (!(epsilon_ > 0.0)) throw std::runtime_error("saliency: floor must be positive");
}

double SaliencyComponent::logdensity(const Point& p) const {
  const int w = grid_.width, h = grid_.height;
  // Pixel centers sit at (i + 0.5, j + 0.5); clamp to the center lattice.
  double u = p.x - 0.5, v = p.y - 0.5;
  u = std::clamp(u, 0.0, static_cast<double>(w - 1));
  v = std::clamp(v, 0.0, static_cast<double>(h - 1));
  const int i0 = std::min(static_cast<int>(u), w - 2 >= 0 ? w - 2 : 0);
  const int j0 = std::min(static_cast<int>(v), h - 2 >= 0 ? h - 2 : 0);
  const int i1 = std::min(i0 + 1, w - 1);
  const int j1 = std::min(j0 + 1, h - 1);
  const double fu = u - i0, fv = v - j0;
  const double value = (1 - fu) * (1 - fv) * grid_.at(i0, j0) +
                       fu * (1 - fv) * grid_.at(i1, j0) +
                       (1 - fu) * fv * grid_.at(i0, j1) + fu * fv * grid_.at(i1, j1);
  const double floor = epsilon_ / grid_.geometry().area();
  return std::log(std::max(value, floor));
}

std::vector<double> SaliencyComponent::logdensity(const std::vector<Point>& points) const {
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& p : points) out.push_back(logdensity(p));
  return out;
}

ComponentLogDensities regularizer_logdensities(const ImageGeometry& geom,
                                               const std::vector<Point>& queries,
                                               const MixtureParams& params,
                                               const CenterBiasModel* center_bias,
                                               const SaliencyComponent* saliency) {
  ComponentLogDensities out;
  if (params.active[kCenterBias]) {
    if (!center_bias)
      throw std::runtime_error("mixture: center bias component active but no model given");
    out.values[kCenterBias] = center_bias->logdensity(queries, geom);
  }
  if (params.active[kUniform])
    out.values[kUniform].assign(queries.size(), -std::log(geom.area()));
  if (params.active[kSaliency]) {
    if (!saliency)
      throw std::runtime_error("mixture: saliency component active but no grid given");
    if (saliency->grid().width != geom.width || saliency->grid().height != geom.height)
      throw std::runtime_error("mixture: saliency grid dimensions do not match image");
    out.values[kSaliency] = saliency->logdensity(queries);
  }
  return out;
}

std::vector<double> mixture_logdensity(const MixtureParams& params,
                                       const ComponentLogDensities& per_component) {
  const auto lw = params.log_weights();
  size_t n = 0;
  for (int k = 0; k < kNumComponents; ++k) {
    if (!params.active[k]) continue;
    if (per_component.values[k].empty())
      throw std::runtime_error(std::string("mixture: missing log densities for component ") +
                               component_name(static_cast<Component>(k)));
    if (n == 0)
      n = per_component.values[k].size();
    else if (per_component.values[k].size() != n)
      throw std::runtime_error("mixture: component log density length mismatch");
  }
  std::vector<double> out(n);
  for (size_t q = 0; q < n; ++q) {
    double mx = -HUGE_VAL;
    for (int k = 0; k < kNumComponents; ++k)
      if (params.active[k]) mx = std::max(mx, lw[k] + per_component.values[k][q]);
    double s = 0.0;
    for (int k = 0; k < kNumComponents; ++k)
      if (params.active[k]) s += std::exp(lw[k] + per_component.values[k][q] - mx);
    out[q] = mx + std::log(s);
  }
  return out;
}

}  // namespace fixdens
