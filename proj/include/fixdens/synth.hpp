#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fixdens/dataset.hpp"
#include "fixdens/grid.hpp"

namespace fixdens {

struct GaussianBlob {
  Point center;
  double sigma = 1.0;  // pixels
  double weight = 0.0;
};

/// Ground-truth density for synthetic fixations: isotropic Gaussian blobs
/// plus a uniform floor; blob weights and the floor sum to one.
struct SyntheticSpec {
  int width = 500;
  int height = 500;
  int subjects = 16;
  int fixations_per_subject = 10;
  std::vector<GaussianBlob> blobs;
  double uniform_floor = 0.0;
  uint64_t seed = 0;

  void validate() const;
};

/// Samples i.i.d. fixations from the spec density for one image.
FixationTable sample_fixations(const SyntheticSpec& spec, const std::string& image_id);

/// Ground-truth density at pixel centers (blobs truncated to the image and
/// renormalized), summing to one.
DensityGrid ground_truth_grid(const SyntheticSpec& spec);

/// Analytic log density of the spec at a continuous point, with each blob
/// renormalized over the image rectangle.
double ground_truth_logdensity(const SyntheticSpec& spec, const Point& p);

/// Dataset of `n_images` independent draws from the same spec, ids
/// image_000, image_001, ...
DatasetBundle synth_dataset(const SyntheticSpec& spec, int n_images);

}  // namespace fixdens
