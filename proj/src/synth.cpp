#include "fixdens/synth.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "fixdens/kde.hpp"

namespace fixdens {

namespace {

double blob_mass_in_image(const GaussianBlob& blob, const ImageGeometry& geom) {
  auto cdf = [](double u) { return 0.5 * std::erfc(-u * M_SQRT1_2); };
  const double zx = cdf((geom.width - blob.center.x) / blob.sigma) -
                    cdf((0.0 - blob.center.x) / blob.sigma);
  const double zy = cdf((geom.height - blob.center.y) / blob.sigma) -
                    cdf((0.0 - blob.center.y) / blob.sigma);
  return zx * zy;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (width < 1 || height < 1) throw std::runtime_error("synth: bad image size");
  if (subjects < 1 || fixations_per_subject < 1)
    throw std::runtime_error("synth: bad subject configuration");
  double total = uniform_floor;
  for (const auto& b : blobs) {
    if (!(b.sigma > 0.0)) throw std::runtime_error("synth: blob sigma must be positive");
    if (b.weight < 0.0) throw std::runtime_error("synth: negative blob weight");
    total += b.weight;
  }
  if (uniform_floor < 0.0) throw std::runtime_error("synth: negative uniform floor");
  if (std::abs(total - 1.0) > 1e-9)
    throw std::runtime_error("synth: blob weights plus floor must sum to 1");
  if (blobs.empty() && uniform_floor <= 0.0)
    throw std::runtime_error("synth: empty density description");
}

FixationTable sample_fixations(const SyntheticSpec& spec, const std::string& image_id) {
  spec.validate();
  const ImageGeometry geom{spec.width, spec.height};
  uint64_t id_hash = 1469598103934665603ull;
  for (unsigned char c : image_id) {
    id_hash ^= c;
    id_hash *= 1099511628211ull;
  }
  std::mt19937_64 rng(spec.seed ^ id_hash);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  FixationTable table;
  table.image_id = image_id;
  for (int s = 0; s < spec.subjects; ++s) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%03d", s);
    for (int f = 0; f < spec.fixations_per_subject; ++f) {
      Point p;
      // Pick a component, then rejection-sample blobs into the rectangle.
      while (true) {
        double pick = u01(rng);
        const GaussianBlob* chosen = nullptr;
        for (const auto& b : spec.blobs) {
          if (pick < b.weight) {
            chosen = &b;
            break;
          }
          pick -= b.weight;
        }
        if (chosen) {
          p.x = chosen->center.x + chosen->sigma * gauss(rng);
          p.y = chosen->center.y + chosen->sigma * gauss(rng);
        } else {
          p.x = u01(rng) * spec.width;
          p.y = u01(rng) * spec.height;
        }
        if (geom.contains(p)) break;
      }
      table.rows.push_back({buf, p});
    }
  }
  return table;
}

double ground_truth_logdensity(const SyntheticSpec& spec, const Point& p) {
  const ImageGeometry geom{spec.width, spec.height};
  double density = spec.uniform_floor / geom.area();
  for (const auto& b : spec.blobs) {
    const double z = blob_mass_in_image(b, geom);
    const double r2 = squared_distance(b.center, p);
    density += b.weight * std::exp(-0.5 * r2 / (b.sigma * b.sigma)) /
               (2.0 * M_PI * b.sigma * b.sigma * z);
  }
  return std::log(density);
}

DensityGrid ground_truth_grid(const SyntheticSpec& spec) {
  spec.validate();
  DensityGrid grid;
  grid.width = spec.width;
  grid.height = spec.height;
  grid.space = GridSpace::Probability;
  grid.values.resize(static_cast<size_t>(spec.width) * spec.height);
  for (int iy = 0; iy < spec.height; ++iy)
    for (int ix = 0; ix < spec.width; ++ix)
      grid.values[static_cast<size_t>(iy) * spec.width + ix] =
          std::exp(ground_truth_logdensity(spec, {ix + 0.5, iy + 0.5}));
  grid.normalize();
  return grid;
}

DatasetBundle synth_dataset(const SyntheticSpec& spec, int n_images) {
  spec.validate();
  if (n_images < 1) throw std::runtime_error("synth: need at least one image");
  DatasetBundle bundle;
  for (int i = 0; i < n_images; ++i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "image_%03d", i);
    ImageRecord rec;
    rec.image_id = buf;
    rec.width = spec.width;
    rec.height = spec.height;
    bundle.images.push_back(rec);
    bundle.fixations[buf] = sample_fixations(spec, buf);
  }
  return bundle;
}

}  // namespace fixdens
