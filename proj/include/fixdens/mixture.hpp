#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "fixdens/dataset.hpp"
#include "fixdens/geometry.hpp"
#include "fixdens/grid.hpp"

namespace fixdens {

/// Mixture component indices. The KDE logit is pinned to zero for
/// identifiability; only the other three are free parameters.
enum Component : int { kKde = 0, kCenterBias = 1, kUniform = 2, kSaliency = 3 };
constexpr int kNumComponents = 4;

const char* component_name(Component c);
std::optional<Component> component_from_name(const std::string& name);

struct MixtureParams {
  std::array<double, kNumComponents> logits{0.0, 0.0, 0.0, 0.0};
  std::array<bool, kNumComponents> active{true, true, true, true};

  /// Softmax over active logits; disabled components get weight exactly 0.
  std::array<double, kNumComponents> weights() const;
  /// log weights, -inf for disabled components.
  std::array<double, kNumComponents> log_weights() const;
  int active_count() const;
};

/// KDE over normalized coordinates (x/W, y/H) built from fixations of other
/// images. Evaluated on a target image with the 1/(W*H) Jacobian so the
/// density integrates to one over that image.
class CenterBiasModel {
 public:
  CenterBiasModel(std::vector<Point> normalized_sources, double bandwidth);

  double bandwidth() const { return bandwidth_; }
  const std::vector<Point>& sources() const { return sources_; }

  /// Log density at a pixel-space point on an image of the given geometry.
  double logdensity(const Point& p, const ImageGeometry& geom) const;
  std::vector<double> logdensity(const std::vector<Point>& points,
                                 const ImageGeometry& geom) const;
  DensityGrid rasterize(const ImageGeometry& geom) const;

 private:
  std::vector<Point> sources_;  // normalized to the unit square
  double bandwidth_;            // in normalized units
};

/// Fits the center bias on all images except `holdout_image_id`, selecting
/// the bandwidth by golden-section search on log-bandwidth in [1e-3, 1],
/// maximizing the leave-one-image-out mean log-likelihood.
CenterBiasModel fit_center_bias(const DatasetBundle& dataset,
                                const std::string& holdout_image_id);

/// Mean leave-one-image-out log-likelihood of a candidate bandwidth over
/// the given per-image normalized fixation sets. Exposed for bandwidth
/// selection tests.
double center_bias_loio_loglik(const std::vector<std::vector<Point>>& per_image_sources,
                               double bandwidth);

/// Ingested per-image saliency density with a uniform floor applied before
/// taking logs.
class SaliencyComponent {
 public:
  SaliencyComponent(DensityGrid grid, double floor_epsilon = 1e-6);

  const DensityGrid& grid() const { return grid_; }

  /// Bilinear interpolation of the probability grid at a continuous point,
  /// clamped to >= epsilon * uniform, then logged.
  double logdensity(const Point& p) const;
  std::vector<double> logdensity(const std::vector<Point>& points) const;

 private:
  DensityGrid grid_;
  double epsilon_;
};

/// Per-query log densities of the non-KDE components; entries for inactive
/// components stay empty.
struct ComponentLogDensities {
  std::array<std::vector<double>, kNumComponents> values;
};

ComponentLogDensities regularizer_logdensities(const ImageGeometry& geom,
                                               const std::vector<Point>& queries,
                                               const MixtureParams& params,
                                               const CenterBiasModel* center_bias,
                                               const SaliencyComponent* saliency);

/// log sum_k w_k exp(l_k) over active components, per query. `per_component`
/// must hold one log-density vector per active component.
std::vector<double> mixture_logdensity(const MixtureParams& params,
                                       const ComponentLogDensities& per_component);

}  // namespace fixdens
