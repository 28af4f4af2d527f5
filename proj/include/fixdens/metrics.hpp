#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fixdens/geometry.hpp"
#include "fixdens/grid.hpp"

namespace fixdens {

struct MetricRecord {
  std::string image_id;
  double ig_bits = 0.0;
  double auc = 0.0;
  size_t n_fixations = 0;
};

/// Mean log2 likelihood minus the uniform baseline, in bits per fixation.
double information_gain_bits(const std::vector<double>& per_fixation_lognats,
                             const ImageGeometry& geom);

/// Probability that a fixated pixel's grid value exceeds a uniformly random
/// pixel's value, ties counted one half. Fixations map to pixels by floor of
/// their continuous coordinates; exact computation via sorted ranks.
double auc_uniform(const DensityGrid& grid, const std::vector<Point>& fixations);

struct QuantileRow {
  double quantile = 0.0;
  double delta_ll = 0.0;
  double delta_ll_rel = 0.0;
  double delta_auc = 0.0;
};

struct ImprovementTable {
  std::vector<QuantileRow> rows;    // requested quantiles, then the max as q=1
  size_t n_images = 0;
  size_t n_rel_excluded = 0;        // images dropped from the relative column
};

/// Per-image differences (b - a) at the requested quantiles (linear
/// interpolation), plus the maximum. Records must share their image_id set.
/// Images with |ll_a| < 0.05 bits are excluded from the relative column.
ImprovementTable improvement_quantiles(const std::vector<MetricRecord>& records_a,
                                       const std::vector<MetricRecord>& records_b,
                                       const std::vector<double>& quantiles);

/// Empirical quantile with linear interpolation over sorted values.
double quantile(std::vector<double> values, double q);

struct CiRecord {
  double mean = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

/// Percentile bootstrap CIs over images for each model's mean. With two or
/// more models the values are within-image normalized (per-image mean
/// removed, grand mean restored) and scaled by sqrt(M/(M-1)) around the
/// grand mean; with a single model the values enter the bootstrap as-is.
std::vector<CiRecord> bootstrap_ci(const std::vector<std::vector<double>>& per_image_values_by_model,
                                   int iterations, double level, uint64_t seed);

}  // namespace fixdens
