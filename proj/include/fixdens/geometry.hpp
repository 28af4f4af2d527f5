#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fixdens {

/// Continuous pixel coordinates, origin at the top-left pixel corner,
/// x rightward, y downward.
struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Image rectangle [0, W) x [0, H) in pixels. Pixel (i, j) has its center
/// at (i + 0.5, j + 0.5); densities are evaluated at pixel centers when
/// rasterized.
struct ImageGeometry {
  int width = 0;
  int height = 0;

  double area() const { return static_cast<double>(width) * height; }
  bool contains(const Point& p) const {
    return p.x >= 0.0 && p.x < width && p.y >= 0.0 && p.y < height;
  }
};

inline double squared_distance(const Point& a, const Point& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  return dx * dx + dy * dy;
}

inline double distance(const Point& a, const Point& b) {
  return std::sqrt(squared_distance(a, b));
}

}  // namespace fixdens
