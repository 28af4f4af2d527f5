#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fixdens/crossval.hpp"

namespace fixdens {

struct OptimConfig {
  int restarts = 50;
  uint64_t seed = 0;
  double h_min = 0.5;  // minimum effective bandwidth in pixels
  // log-space box bounds
  double log_h_lo = std::log(0.5);
  double log_h_hi = std::log(500.0);
  double log_alpha_lo = -20.0;
  double log_alpha_hi = 20.0;
  double logit_lo = -20.0;
  double logit_hi = 20.0;
  double objective_tol = 1e-8;   // absolute, on the objective
  double gradient_tol = 1e-6;    // on the projected gradient norm
  int max_iterations = 500;
};

/// Maps a flat log-space parameter vector onto kernel and mixture
/// parameters. Order: kernel parameters first (log h, or log h0 then
/// log alpha), then one logit per active non-KDE component in component
/// index order. The KDE logit is pinned to zero.
struct ParamLayout {
  bool adaptive = false;
  std::array<bool, kNumComponents> active{true, true, true, true};

  int kernel_dim() const { return active[kKde] ? (adaptive ? 2 : 1) : 0; }
  int dim() const;
  KernelParams kernel(const std::vector<double>& theta) const;
  MixtureParams mixture(const std::vector<double>& theta) const;
  std::vector<double> pack(const KernelParams& kernel, const MixtureParams& mixture) const;
  std::vector<double> lower_bounds(const OptimConfig& cfg) const;
  std::vector<double> upper_bounds(const OptimConfig& cfg) const;
};

/// One image's evaluation context: geometry, fixations, fold plan and the
/// fold-independent regularizer models.
struct ImageContext {
  std::string image_id;
  ImageGeometry geometry;
  const FixationTable* table = nullptr;
  FoldPlan plan;
  ModelComponents components;
};

struct ObjectiveEval {
  double value = 0.0;              // mean held-out log-likelihood, nats/fixation
  std::vector<double> gradient;    // with respect to the log-space parameters
  double min_bandwidth = 0.0;      // min h_j over all folds and sources
};

/// Mean cross-validated log-likelihood over the context's plan and its exact
/// gradient through the whole chain (pilot KDE, Abramson bandwidths,
/// adaptive KDE, softmax weights, log-sum-exp mixture, mean).
ObjectiveEval objective_and_gradient(const ImageContext& ctx, const ParamLayout& layout,
                                     const std::vector<double>& theta);

/// Unweighted mean of per-image objectives under a shared parameter vector.
ObjectiveEval objective_and_gradient(const std::vector<ImageContext>& contexts,
                                     const ParamLayout& layout,
                                     const std::vector<double>& theta);

struct OptimResult {
  KernelParams kernel;
  MixtureParams mixture;
  double objective_nats = 0.0;
  std::vector<double> restart_objectives;
  std::vector<int> restart_iterations;
  bool constraint_active = false;
};

/// Multi-restart bound-constrained maximization of the cross-validated
/// log-likelihood. The minimum-bandwidth constraint is handled with a
/// smooth hinge penalty during the search and a final feasibility repair
/// (scaling alpha up); returned parameters always satisfy it.
OptimResult optimize_image(const ImageContext& ctx, const OptimConfig& config,
                           const ParamLayout& layout);

OptimResult optimize_global(const std::vector<ImageContext>& contexts,
                            const OptimConfig& config, const ParamLayout& layout);

/// Minimum h_j across all folds of the context for the given parameters
/// (the fixed bandwidth itself for fixed kernels). Used for post-hoc
/// feasibility checks.
double min_effective_bandwidth(const ImageContext& ctx, const KernelParams& kernel);

}  // namespace fixdens
