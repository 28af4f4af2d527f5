#include "fixdens/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>

namespace fixdens {

namespace {

uint64_t hash_grid(const DensityGrid& grid) {
  uint64_t h = 1469598103934665603ull;
  auto feed = [&](uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      h ^= (v >> (i * 8)) & 0xff;
      h *= 1099511628211ull;
    }
  };
  feed(static_cast<uint64_t>(grid.width));
  feed(static_cast<uint64_t>(grid.height));
  for (double v : grid.values) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, sizeof(bits));
    feed(bits);
  }
  return h;
}

struct Segment {
  double x0, y0, x1, y1;
};

/// Marching squares on the field sampled at pixel centers; vertices are
/// interpolated linearly along cell edges.
std::vector<Segment> marching_squares(const std::vector<double>& field, int w, int h,
                                      double level) {
  auto value = [&](int x, int y) { return field[static_cast<size_t>(y) * w + x]; };
  auto interp = [&](double xa, double ya, double va, double xb, double yb, double vb) {
    const double t = (level - va) / (vb - va);
    return std::pair<double, double>{xa + t * (xb - xa), ya + t * (yb - ya)};
  };
  std::vector<Segment> segments;
  for (int y = 0; y + 1 < h; ++y) {
    for (int x = 0; x + 1 < w; ++x) {
      const double v00 = value(x, y), v10 = value(x + 1, y);
      const double v01 = value(x, y + 1), v11 = value(x + 1, y + 1);
      const double cx0 = x + 0.5, cy0 = y + 0.5, cx1 = x + 1.5, cy1 = y + 1.5;
      int mask = 0;
      if (v00 >= level) mask |= 1;
      if (v10 >= level) mask |= 2;
      if (v11 >= level) mask |= 4;
      if (v01 >= level) mask |= 8;
      if (mask == 0 || mask == 15) continue;

      auto top = [&] { return interp(cx0, cy0, v00, cx1, cy0, v10); };
      auto right = [&] { return interp(cx1, cy0, v10, cx1, cy1, v11); };
      auto bottom = [&] { return interp(cx0, cy1, v01, cx1, cy1, v11); };
      auto left = [&] { return interp(cx0, cy0, v00, cx0, cy1, v01); };
      auto emit = [&](std::pair<double, double> a, std::pair<double, double> b) {
        segments.push_back({a.first, a.second, b.first, b.second});
      };
      switch (mask) {
        case 1: case 14: emit(top(), left()); break;
        case 2: case 13: emit(top(), right()); break;
        case 3: case 12: emit(left(), right()); break;
        case 4: case 11: emit(right(), bottom()); break;
        case 6: case 9: emit(top(), bottom()); break;
        case 7: case 8: emit(left(), bottom()); break;
        case 5: case 10: {
          // Saddle: disambiguate with the cell-center mean.
          const double center = 0.25 * (v00 + v10 + v01 + v11);
          const bool center_high = center >= level;
          if ((mask == 5) == center_high) {
            emit(top(), right());
            emit(left(), bottom());
          } else {
            emit(top(), left());
            emit(right(), bottom());
          }
          break;
        }
        default: break;
      }
    }
  }
  return segments;
}

void draw_segment(RgbImage& img, const Segment& seg, double width, uint8_t r, uint8_t g,
                  uint8_t b) {
  const double len = std::hypot(seg.x1 - seg.x0, seg.y1 - seg.y0);
  const double half = width / 2.0;
  const int steps = std::max(1, static_cast<int>(std::ceil(len / 0.25)));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    const double px = seg.x0 + t * (seg.x1 - seg.x0);
    const double py = seg.y0 + t * (seg.y1 - seg.y0);
    const int x_lo = std::max(0, static_cast<int>(std::floor(px - half)));
    const int x_hi = std::min(img.width - 1, static_cast<int>(std::ceil(px + half)));
    const int y_lo = std::max(0, static_cast<int>(std::floor(py - half)));
    const int y_hi = std::min(img.height - 1, static_cast<int>(std::ceil(py + half)));
    for (int y = y_lo; y <= y_hi; ++y) {
      for (int x = x_lo; x <= x_hi; ++x) {
        const double d = std::hypot(x + 0.5 - px, y + 0.5 - py);
        if (d <= half) {
          uint8_t* px_ptr = img.at(x, y);
          px_ptr[0] = r;
          px_ptr[1] = g;
          px_ptr[2] = b;
        }
      }
    }
  }
}

}  // namespace

std::vector<double> saturating_map(const DensityGrid& grid, double saturation) {
  if (grid.space != GridSpace::Probability)
    throw std::runtime_error("render: saturating map needs a probability-space grid");
  if (!(saturation > 0.0)) throw std::runtime_error("render: saturation must be positive");
  const double uniform = 1.0 / grid.geometry().area();
  std::vector<double> out(grid.values.size());
  for (size_t i = 0; i < grid.values.size(); ++i) {
    const double d = grid.values[i] / uniform;
    out[i] = saturation * (1.0 - std::exp(-d / saturation));
  }
  return out;
}

std::vector<ContourLevel> contour_levels(const DensityGrid& grid, double contour_base) {
  if (grid.space != GridSpace::Probability)
    throw std::runtime_error("render: contour levels need a probability-space grid");
  if (!(contour_base > 1.0)) throw std::runtime_error("render: contour base must exceed 1");
  const double uniform = 1.0 / grid.geometry().area();
  const double vmin = *std::min_element(grid.values.begin(), grid.values.end());
  const double vmax = *std::max_element(grid.values.begin(), grid.values.end());
  std::vector<ContourLevel> levels;
  if (!(vmax > 0.0)) return levels;
  const double log_base = std::log(contour_base);
  // Integer k with gamma^k * p_U in [vmin, vmax]; vmin may be zero.
  const int k_hi = static_cast<int>(std::floor(std::log(vmax / uniform) / log_base + 1e-12));
  int k_lo;
  if (vmin > 0.0)
    k_lo = static_cast<int>(std::ceil(std::log(vmin / uniform) / log_base - 1e-12));
  else
    k_lo = k_hi - 64;  // zero cells: every level below the max intersects
  for (int k = k_lo; k <= k_hi; ++k) {
    ContourLevel lvl;
    lvl.k = k;
    lvl.level = std::pow(contour_base, k) * uniform;
    lvl.thick = k == 0;
    if (lvl.level >= vmin && lvl.level <= vmax) levels.push_back(lvl);
  }
  return levels;
}

RenderedFigure render_overlay(const RgbImage& stimulus, const DensityGrid& grid,
                              const VizConfig& config) {
  if (stimulus.width != grid.width || stimulus.height != grid.height)
    throw std::runtime_error("render: stimulus dimensions do not match the density grid");
  grid.check_invariants();

  RenderedFigure fig;
  fig.raster = stimulus;
  const auto heat = saturating_map(grid, config.saturation);

  // Heatmap: single-hue ramp (white to red), alpha scaled by the saturating
  // response so near-uniform densities stay pale.
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      const double t = heat[static_cast<size_t>(y) * grid.width + x] / config.saturation;
      const double a = config.overlay_opacity * t;
      const double hr = 255.0, hg = 255.0 * (1.0 - t), hb = 255.0 * (1.0 - t);
      uint8_t* px = fig.raster.at(x, y);
      px[0] = static_cast<uint8_t>(std::lround((1.0 - a) * px[0] + a * hr));
      px[1] = static_cast<uint8_t>(std::lround((1.0 - a) * px[1] + a * hg));
      px[2] = static_cast<uint8_t>(std::lround((1.0 - a) * px[2] + a * hb));
    }
  }

  // Contours on the log-density field; gamma^k levels become evenly spaced
  // there, so linear interpolation places them accurately between pixels.
  const double uniform = 1.0 / grid.geometry().area();
  const double vmin = *std::min_element(grid.values.begin(), grid.values.end());
  const double vmax = *std::max_element(grid.values.begin(), grid.values.end());
  fig.near_uniform = !(vmax > vmin);
  if (!fig.near_uniform) {
    std::vector<double> log_field(grid.values.size());
    for (size_t i = 0; i < grid.values.size(); ++i)
      log_field[i] = grid.values[i] > 0.0 ? std::log(grid.values[i] / uniform) : -745.0;
    for (const auto& lvl : contour_levels(grid, config.contour_base)) {
      const double log_level = lvl.k * std::log(config.contour_base);
      const auto segments = marching_squares(log_field, grid.width, grid.height, log_level);
      const double width = lvl.thick ? config.thick_line_width : config.thin_line_width;
      for (const auto& seg : segments) draw_segment(fig.raster, seg, width, 32, 32, 96);
    }
  }

  std::ostringstream meta;
  meta << "{\"saturation\":" << config.saturation << ",\"contour_base\":"
       << config.contour_base << ",\"density_hash\":\"" << std::hex << hash_grid(grid)
       << "\",\"near_uniform\":" << (fig.near_uniform ? "true" : "false") << "}";
  fig.metadata_json = meta.str();
  return fig;
}

RenderedFigure render_overlay(const DensityGrid& grid, const VizConfig& config) {
  return render_overlay(solid_image(grid.width, grid.height, 128, 128, 128), grid, config);
}

}  // namespace fixdens
