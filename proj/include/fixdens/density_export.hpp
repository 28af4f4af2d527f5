#pragma once

#include <map>
#include <string>
#include <vector>

#include "fixdens/crossval.hpp"
#include "fixdens/grid.hpp"

namespace fixdens {

struct LosoDensityConfig {
  /// RBF support radius in pixels; <= 0 means "derive from the data"
  /// (median cross-subject nearest-neighbor distance, clamped to [5, 100]).
  double rbf_radius = 0.0;
};

/// Per-subject spatial weights on the grid, with normalized counterparts.
struct WeightMaps {
  std::vector<std::string> subjects;        // sorted
  std::vector<std::vector<double>> raw;     // omega_s per grid cell, in [0,1]
  std::vector<std::vector<double>> normalized;
};

double default_rbf_radius(const FixationTable& table);

/// omega_s(x) = max over subject-s fixations of max(0, 1 - d/r)^2, evaluated
/// at pixel centers. Cells where every subject's weight vanishes fall back
/// to a uniform split across subjects.
WeightMaps rbf_weights(const FixationTable& table, double radius, const ImageGeometry& geom);

/// Weighted average of per-subject-fold densities: sum_s normalized
/// omega_s(x) * p_s(x), renormalized to sum to one. `fold_grids` maps
/// subject_id to the density of the fold that excluded that subject.
DensityGrid locally_crossvalidated_density(const ImageGeometry& geom,
                                           const FixationTable& table,
                                           const std::map<std::string, DensityGrid>& fold_grids,
                                           const LosoDensityConfig& config);

/// Rasterizes the LOSO fold densities (mixture with KDE rebuilt per fold)
/// and assembles the locally crossvalidated grid.
DensityGrid loso_density(const ImageGeometry& geom, const FixationTable& table,
                         const KernelParams& kernel, const MixtureParams& mixture,
                         const ModelComponents& components, const LosoDensityConfig& config);

/// Mixture density with the KDE built from all fixations (each fixation's
/// own kernel included).
DensityGrid pooled_density(const ImageGeometry& geom, const FixationTable& table,
                           const KernelParams& kernel, const MixtureParams& mixture,
                           const ModelComponents& components);

/// Rasterized mixture density for an arbitrary source set.
DensityGrid rasterize_mixture(const ImageGeometry& geom, const std::vector<Point>& kde_sources,
                              const KernelParams& kernel, const MixtureParams& mixture,
                              const ModelComponents& components);

}  // namespace fixdens
