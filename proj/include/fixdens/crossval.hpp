#pragma once

#include <string>
#include <vector>

#include "fixdens/dataset.hpp"
#include "fixdens/kde.hpp"
#include "fixdens/mixture.hpp"

namespace fixdens {

enum class FoldScheme { Loso, Lofo, Pooled };

const char* fold_scheme_name(FoldScheme s);

struct Fold {
  std::vector<size_t> train;  // indices into the FixationTable rows
  std::vector<size_t> test;
};

struct FoldPlan {
  FoldScheme scheme = FoldScheme::Loso;
  std::vector<Fold> folds;
};

/// LOSO: one fold per subject (sorted by subject_id), test = that subject's
/// fixations. LOFO: one fold per fixation row. POOLED: a single fold with
/// train = test = all rows.
FoldPlan make_fold_plan(const FixationTable& table, FoldScheme scheme);

/// Fold-independent pieces of the model for one image.
struct ModelComponents {
  const CenterBiasModel* center_bias = nullptr;
  const SaliencyComponent* saliency = nullptr;
};

struct FoldEval {
  /// Held-out log density (nats) per fixation row, aligned with the table.
  std::vector<double> per_fixation_lognats;
  double mean_ll_nats = 0.0;
  size_t n_fixations = 0;
};

/// Rebuilds the KDE (pilot + Abramson bandwidths when adaptive) from each
/// fold's training fixations and scores the mixture at the fold's test
/// fixations.
FoldEval evaluate_image(const ImageGeometry& geom, const FixationTable& table,
                        const KernelParams& kernel, const MixtureParams& mixture,
                        const ModelComponents& components, const FoldPlan& plan);

struct ImageResult {
  std::string image_id;
  double mean_ll_nats = 0.0;
  double ig_bits = 0.0;
  size_t n_fixations = 0;
};

struct IocSummary {
  std::vector<ImageResult> per_image;  // sorted by image_id
  double mean_ig_bits = 0.0;           // unweighted mean over images
  double mean_ll_nats = 0.0;
};

/// Per-image model parameters for summary evaluation.
struct ImageModel {
  KernelParams kernel;
  MixtureParams mixture;
};

IocSummary ioc_summary(const DatasetBundle& dataset,
                       const std::map<std::string, ImageModel>& per_image_params,
                       FoldScheme scheme,
                       const std::map<std::string, ModelComponents>& per_image_components);

}  // namespace fixdens
