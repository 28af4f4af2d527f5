#pragma once

#include <variant>
#include <vector>

#include "fixdens/geometry.hpp"
#include "fixdens/grid.hpp"

namespace fixdens {

struct FixedKernelParams {
  double h = 1.0;  // bandwidth in pixels
};

struct AdaptiveKernelParams {
  double h0 = 1.0;    // pilot bandwidth in pixels
  double alpha = 1.0; // proportionality constant, h_j = alpha / sqrt(pilot_j)
};

using KernelParams = std::variant<FixedKernelParams, AdaptiveKernelParams>;

/// Per-source bandwidths aligned with the source fixation list.
using BandwidthVector = std::vector<double>;

/// Log density of the truncated-renormalized Gaussian kernel centered at
/// `source` with bandwidth `h`, evaluated at `query`. Each kernel is
/// renormalized over the image rectangle via the separable Gaussian CDF
/// product so it integrates to one over the image.
double truncated_gaussian_logpdf(const Point& source, const Point& query, double h,
                                 const ImageGeometry& geom);

/// Same value plus its derivative with respect to h.
struct LogPdfGrad {
  double logpdf;
  double d_h;
};
LogPdfGrad truncated_gaussian_logpdf_grad(const Point& source, const Point& query, double h,
                                          const ImageGeometry& geom);

/// log of (1/M) sum_j K_j(query), one value per query.
std::vector<double> fixed_kde_logdensity(const std::vector<Point>& sources,
                                         const std::vector<Point>& queries, double h,
                                         const ImageGeometry& geom);

/// Fixed KDE with bandwidth h0 over `sources`, evaluated at the sources
/// themselves (self-kernel included). Returns densities, not logs.
std::vector<double> pilot_density(const std::vector<Point>& sources, double h0,
                                  const ImageGeometry& geom);

/// h_j = alpha / sqrt(pilot_j). Throws on non-positive pilot values.
BandwidthVector abramson_bandwidths(const std::vector<double>& pilot_values, double alpha);

std::vector<double> adaptive_kde_logdensity(const std::vector<Point>& sources,
                                            const BandwidthVector& bandwidths,
                                            const std::vector<Point>& queries,
                                            const ImageGeometry& geom);

/// Log density with exact derivatives with respect to the log-space kernel
/// parameters, per query.
struct KdeEval {
  std::vector<double> logdensity;
  std::vector<double> d_log_h;      // fixed kernel: d/d log h
  std::vector<double> d_log_h0;     // adaptive kernel: d/d log h0
  std::vector<double> d_log_alpha;  // adaptive kernel: d/d log alpha
  BandwidthVector bandwidths;       // adaptive kernel: the h_j actually used
  std::vector<double> d_bw_log_h0;  // adaptive kernel: d h_j / d log h0
};

KdeEval fixed_kde_eval(const std::vector<Point>& sources, const std::vector<Point>& queries,
                       double h, const ImageGeometry& geom);

/// Evaluates the two-stage adaptive estimator (pilot at h0 over `sources`,
/// Abramson bandwidths with `alpha`, then the per-source-bandwidth mixture)
/// and differentiates the whole chain with respect to log h0 and log alpha.
KdeEval adaptive_kde_eval(const std::vector<Point>& sources, const std::vector<Point>& queries,
                          double h0, double alpha, const ImageGeometry& geom);

KdeEval kde_eval(const std::vector<Point>& sources, const std::vector<Point>& queries,
                 const KernelParams& params, const ImageGeometry& geom);

/// Grid of KDE densities at pixel centers, renormalized to sum to one.
DensityGrid rasterize_kde(const std::vector<Point>& sources, const KernelParams& params,
                          const ImageGeometry& geom);

}  // namespace fixdens
