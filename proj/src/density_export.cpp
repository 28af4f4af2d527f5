#include "fixdens/density_export.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fixdens {

double default_rbf_radius(const FixationTable& table) {
  // Median nearest-neighbor distance between fixations of different
  // subjects, clamped to [5, 100] px.
  std::vector<double> nn;
  for (size_t i = 0; i < table.rows.size(); ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (size_t j = 0; j < table.rows.size(); ++j) {
      if (table.rows[j].subject_id == table.rows[i].subject_id) continue;
      best = std::min(best, distance(table.rows[i].position, table.rows[j].position));
    }
    if (std::isfinite(best)) nn.push_back(best);
  }
  if (nn.empty()) return 5.0;
  std::nth_element(nn.begin(), nn.begin() + nn.size() / 2, nn.end());
  return std::clamp(nn[nn.size() / 2], 5.0, 100.0);
}

WeightMaps rbf_weights(const FixationTable& table, double radius, const ImageGeometry& geom) {
  if (!(radius > 0.0)) throw std::runtime_error("loso density: radius must be positive");
  WeightMaps maps;
  maps.subjects = table.subjects();
  if (maps.subjects.size() < 2)
    throw std::runtime_error("loso density: need at least 2 subjects");
  const size_t cells = static_cast<size_t>(geom.width) * geom.height;
  const size_t ns = maps.subjects.size();
  maps.raw.assign(ns, std::vector<double>(cells, 0.0));
  maps.normalized.assign(ns, std::vector<double>(cells, 0.0));

  for (size_t s = 0; s < ns; ++s) {
    std::vector<Point> own;
    for (const auto& row : table.rows)
      if (row.subject_id == maps.subjects[s]) own.push_back(row.position);
    auto& w = maps.raw[s];
    for (int iy = 0; iy < geom.height; ++iy) {
      for (int ix = 0; ix < geom.width; ++ix) {
        const Point c{ix + 0.5, iy + 0.5};
        double best = 0.0;
        for (const auto& f : own) {
          const double t = 1.0 - distance(c, f) / radius;
          if (t > 0.0) best = std::max(best, t * t);
        }
        w[static_cast<size_t>(iy) * geom.width + ix] = best;
      }
    }
  }
  for (size_t cell = 0; cell < cells; ++cell) {
    double total = 0.0;
    for (size_t s = 0; s < ns; ++s) total += maps.raw[s][cell];
    if (total > 0.0) {
      for (size_t s = 0; s < ns; ++s) maps.normalized[s][cell] = maps.raw[s][cell] / total;
    } else {
      // Dead zone, far from every fixation: unweighted mean of folds.
      for (size_t s = 0; s < ns; ++s)
        maps.normalized[s][cell] = 1.0 / static_cast<double>(ns);
    }
  }
  return maps;
}

DensityGrid locally_crossvalidated_density(const ImageGeometry& geom,
                                           const FixationTable& table,
                                           const std::map<std::string, DensityGrid>& fold_grids,
                                           const LosoDensityConfig& config) {
  const double r = config.rbf_radius > 0.0 ? config.rbf_radius : default_rbf_radius(table);
  auto maps = rbf_weights(table, r, geom);
  const size_t cells = static_cast<size_t>(geom.width) * geom.height;

  DensityGrid out;
  out.width = geom.width;
  out.height = geom.height;
  out.space = GridSpace::Probability;
  out.values.assign(cells, 0.0);
  for (size_t s = 0; s < maps.subjects.size(); ++s) {
    auto it = fold_grids.find(maps.subjects[s]);
    if (it == fold_grids.end())
      throw std::runtime_error("loso density: missing fold model for subject " +
                               maps.subjects[s]);
    const DensityGrid& fold = it->second;
    if (fold.width != geom.width || fold.height != geom.height)
      throw std::runtime_error("loso density: fold grid dimension mismatch");
    for (size_t cell = 0; cell < cells; ++cell)
      out.values[cell] += maps.normalized[s][cell] * fold.values[cell];
  }
  out.normalize();
  return out;
}

DensityGrid rasterize_mixture(const ImageGeometry& geom, const std::vector<Point>& kde_sources,
                              const KernelParams& kernel, const MixtureParams& mixture,
                              const ModelComponents& components) {
  std::vector<Point> centers;
  centers.reserve(static_cast<size_t>(geom.width) * geom.height);
  for (int iy = 0; iy < geom.height; ++iy)
    for (int ix = 0; ix < geom.width; ++ix)
      centers.push_back({ix + 0.5, iy + 0.5});

  ComponentLogDensities per_component = regularizer_logdensities(
      geom, centers, mixture, components.center_bias, components.saliency);
  if (mixture.active[kKde]) {
    if (const auto* fp = std::get_if<FixedKernelParams>(&kernel)) {
      per_component.values[kKde] = fixed_kde_logdensity(kde_sources, centers, fp->h, geom);
    } else {
      const auto& ap = std::get<AdaptiveKernelParams>(kernel);
      auto pilot = pilot_density(kde_sources, ap.h0, geom);
      auto hs = abramson_bandwidths(pilot, ap.alpha);
      per_component.values[kKde] = adaptive_kde_logdensity(kde_sources, hs, centers, geom);
    }
  }
  auto logs = mixture_logdensity(mixture, per_component);

  DensityGrid grid;
  grid.width = geom.width;
  grid.height = geom.height;
  grid.space = GridSpace::Probability;
  grid.values.resize(logs.size());
  for (size_t i = 0; i < logs.size(); ++i) grid.values[i] = std::exp(logs[i]);
  grid.normalize();
  return grid;
}

DensityGrid loso_density(const ImageGeometry& geom, const FixationTable& table,
                         const KernelParams& kernel, const MixtureParams& mixture,
                         const ModelComponents& components, const LosoDensityConfig& config) {
  auto plan = make_fold_plan(table, FoldScheme::Loso);
  const auto subjects = table.subjects();
  const auto points = table.points();
  std::map<std::string, DensityGrid> fold_grids;
  for (size_t s = 0; s < subjects.size(); ++s) {
    std::vector<Point> train;
    for (size_t idx : plan.folds[s].train) train.push_back(points[idx]);
    fold_grids.emplace(subjects[s],
                       rasterize_mixture(geom, train, kernel, mixture, components));
  }
  return locally_crossvalidated_density(geom, table, fold_grids, config);
}

DensityGrid pooled_density(const ImageGeometry& geom, const FixationTable& table,
                           const KernelParams& kernel, const MixtureParams& mixture,
                           const ModelComponents& components) {
  return rasterize_mixture(geom, table.points(), kernel, mixture, components);
}

}  // namespace fixdens
