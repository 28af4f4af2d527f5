#pragma once

#include <string>
#include <vector>

#include "fixdens/grid.hpp"
#include "fixdens/image_io.hpp"

namespace fixdens {

struct VizConfig {
  double saturation = 20.0;   // L of the saturating nonlinearity
  double contour_base = 4.0;  // gamma; adjacent contour levels differ by this factor
  double overlay_opacity = 0.65;
  double thick_line_width = 3.0;  // at the uniform level (k = 0)
  double thin_line_width = 1.0;
};

/// f(d) = L (1 - exp(-d/L)) applied to the density-to-uniform ratio
/// d = p(x)/p_U, pointwise over the grid. Strictly increasing, f(0) = 0,
/// bounded above by L.
std::vector<double> saturating_map(const DensityGrid& grid, double saturation);

struct ContourLevel {
  int k = 0;           // level = gamma^k * p_U
  double level = 0.0;  // density value
  bool thick = false;  // k == 0
};

/// All levels gamma^k * p_U (integer k) that intersect [min, max] of the
/// grid, in increasing order.
std::vector<ContourLevel> contour_levels(const DensityGrid& grid, double contour_base);

struct RenderedFigure {
  RgbImage raster;
  std::string metadata_json;  // saturation, contour base, density hash
  bool near_uniform = false;  // degenerate range, no contour strokes drawn
};

/// Saturating heatmap alpha-composited over the stimulus, with
/// marching-squares contours on the log-density field at the computed
/// levels. Pure function of its inputs.
RenderedFigure render_overlay(const RgbImage& stimulus, const DensityGrid& grid,
                              const VizConfig& config);

/// Convenience: renders over a neutral gray background.
RenderedFigure render_overlay(const DensityGrid& grid, const VizConfig& config);

}  // namespace fixdens
