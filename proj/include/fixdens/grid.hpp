#pragma once

#include <string>
#include <vector>

#include "fixdens/geometry.hpp"

namespace fixdens {

enum class GridSpace : uint8_t { Probability = 0, Log = 1 };

/// Row-major W x H grid of densities, the portable representation shared by
/// every module. In probability space the values are nonnegative and sum to
/// one; in log space their exponentials do.
struct DensityGrid {
  int width = 0;
  int height = 0;
  GridSpace space = GridSpace::Probability;
  std::vector<double> values;  // row-major, size width * height

  double& at(int ix, int iy) { return values[static_cast<size_t>(iy) * width + ix]; }
  double at(int ix, int iy) const { return values[static_cast<size_t>(iy) * width + ix]; }
  ImageGeometry geometry() const { return {width, height}; }

  double sum() const;
  /// Throws if the grid violates its space invariant (tolerance 1e-6).
  void check_invariants() const;
  /// Rescales a probability-space grid so it sums to exactly one.
  void normalize();
  DensityGrid to_log() const;
  DensityGrid to_probability() const;
};

DensityGrid uniform_grid(const ImageGeometry& geom);

/// FDG1 binary format: magic "FDG1", u32le width, u32le height, one space
/// byte (0 = probability, 1 = log), then width*height f64le values.
DensityGrid read_grid(const std::string& path);
void write_grid(const DensityGrid& grid, const std::string& path);

/// Plain-text grids: whitespace-separated values, one row per line.
DensityGrid read_text_grid(const std::string& path);

}  // namespace fixdens
