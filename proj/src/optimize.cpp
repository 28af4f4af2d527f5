#include "fixdens/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace fixdens {

namespace {

uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

uint64_t mix(uint64_t a, uint64_t b) {
  uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ull;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebull;
  x ^= x >> 31;
  return x;
}

struct PenalizedEval {
  double value = 0.0;  // objective minus penalty
  double objective = 0.0;
  std::vector<double> gradient;
  double min_bandwidth = std::numeric_limits<double>::infinity();
};

/// Accumulates one image's log-likelihood sum, gradient sum (per theta) and
/// hinge penalty into `out`. Returns the number of evaluated fixations.
size_t accumulate_image(const ImageContext& ctx, const ParamLayout& layout,
                        const std::vector<double>& theta, double h_min,
                        double penalty_coef, double& ll_sum,
                        std::vector<double>& ll_grad, double& penalty_sum,
                        std::vector<double>& penalty_grad, double& min_bw) {
  const KernelParams kernel = layout.kernel(theta);
  const MixtureParams mixture = layout.mixture(theta);
  const auto lw = mixture.log_weights();
  const auto w = mixture.weights();
  const auto all_points = ctx.table->points();
  const auto regularizers = regularizer_logdensities(ctx.geometry, all_points, mixture,
                                                     ctx.components.center_bias,
                                                     ctx.components.saliency);

  // logit slots in theta, by component index
  std::array<int, kNumComponents> logit_slot;
  logit_slot.fill(-1);
  {
    int slot = layout.kernel_dim();
    for (int k = 0; k < kNumComponents; ++k) {
      if (k == kKde || !layout.active[k]) continue;
      logit_slot[k] = slot++;
    }
  }

  size_t count = 0;
  for (const auto& fold : ctx.plan.folds) {
    if (fold.test.empty()) continue;

    KdeEval kde;
    if (layout.active[kKde]) {
      if (fold.train.empty())
        throw std::runtime_error("optimize: fold with empty train set on image " +
                                 ctx.image_id);
      std::vector<Point> sources, queries;
      for (size_t idx : fold.train) sources.push_back(all_points[idx]);
      for (size_t idx : fold.test) queries.push_back(all_points[idx]);
      kde = kde_eval(sources, queries, kernel, ctx.geometry);

      if (layout.adaptive) {
        for (size_t j = 0; j < kde.bandwidths.size(); ++j) {
          const double hj = kde.bandwidths[j];
          min_bw = std::min(min_bw, hj);
          const double gap = (h_min - hj) / h_min;
          if (penalty_coef > 0.0 && gap > 0.0) {
            penalty_sum += penalty_coef * gap * gap;
            const double d_gap_dh = -1.0 / h_min;
            const double coeff = penalty_coef * 2.0 * gap * d_gap_dh;
            penalty_grad[1] += coeff * hj;                   // d h_j / d log alpha = h_j
            penalty_grad[0] += coeff * kde.d_bw_log_h0[j];   // d h_j / d log h0
          }
        }
      } else {
        min_bw = std::min(min_bw, std::get<FixedKernelParams>(kernel).h);
      }
    }

    for (size_t t = 0; t < fold.test.size(); ++t) {
      const size_t idx = fold.test[t];
      // Per-component log densities at this fixation.
      std::array<double, kNumComponents> ell;
      ell.fill(-HUGE_VAL);
      if (layout.active[kKde]) ell[kKde] = kde.logdensity[t];
      for (int k = 0; k < kNumComponents; ++k)
        if (k != kKde && layout.active[k]) ell[k] = regularizers.values[k][idx];

      double mx = -HUGE_VAL;
      for (int k = 0; k < kNumComponents; ++k)
        if (layout.active[k]) mx = std::max(mx, lw[k] + ell[k]);
      double s = 0.0;
      std::array<double, kNumComponents> resp{};
      for (int k = 0; k < kNumComponents; ++k) {
        if (!layout.active[k]) continue;
        resp[k] = std::exp(lw[k] + ell[k] - mx);
        s += resp[k];
      }
      const double logp = mx + std::log(s);
      if (!std::isfinite(logp))
        throw std::runtime_error("optimize: non-finite log density on image " +
                                 ctx.image_id + " at fixation " + std::to_string(idx));
      for (int k = 0; k < kNumComponents; ++k) resp[k] /= s;

      ll_sum += logp;
      ++count;

      // d log p / d z_m = r_m - w_m for free logits.
      for (int k = 0; k < kNumComponents; ++k)
        if (logit_slot[k] >= 0) ll_grad[logit_slot[k]] += resp[k] - w[k];

      // Kernel parameters flow through the KDE responsibility.
      if (layout.active[kKde]) {
        if (layout.adaptive) {
          ll_grad[0] += resp[kKde] * kde.d_log_h0[t];
          ll_grad[1] += resp[kKde] * kde.d_log_alpha[t];
        } else {
          ll_grad[0] += resp[kKde] * kde.d_log_h[t];
        }
      }
    }
  }
  return count;
}

PenalizedEval penalized_objective(const std::vector<const ImageContext*>& contexts,
                                  const ParamLayout& layout,
                                  const std::vector<double>& theta, double h_min,
                                  double penalty_coef) {
  PenalizedEval out;
  out.gradient.assign(layout.dim(), 0.0);
  std::vector<double> penalty_grad(layout.dim(), 0.0);
  double penalty_sum = 0.0;

  double mean_sum = 0.0;
  std::vector<double> mean_grad(layout.dim(), 0.0);
  for (const ImageContext* ctx : contexts) {
    double ll_sum = 0.0;
    std::vector<double> ll_grad(layout.dim(), 0.0);
    const size_t n = accumulate_image(*ctx, layout, theta, h_min, penalty_coef, ll_sum,
                                      ll_grad, penalty_sum, penalty_grad, out.min_bandwidth);
    if (n == 0) throw std::runtime_error("optimize: no fixations evaluated");
    mean_sum += ll_sum / static_cast<double>(n);
    for (int i = 0; i < layout.dim(); ++i)
      mean_grad[i] += ll_grad[i] / static_cast<double>(n);
  }
  const double inv = 1.0 / static_cast<double>(contexts.size());
  out.objective = mean_sum * inv;
  out.value = out.objective - penalty_sum;
  for (int i = 0; i < layout.dim(); ++i)
    out.gradient[i] = mean_grad[i] * inv - penalty_grad[i];
  return out;
}

std::vector<double> project(std::vector<double> x, const std::vector<double>& lo,
                            const std::vector<double>& hi) {
  for (size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], lo[i], hi[i]);
  return x;
}

double projected_grad_norm(const std::vector<double>& x, const std::vector<double>& g,
                           const std::vector<double>& lo, const std::vector<double>& hi) {
  double s = 0.0;
  for (size_t i = 0; i < x.size(); ++i) {
    double gi = g[i];
    if ((x[i] <= lo[i] && gi < 0.0) || (x[i] >= hi[i] && gi > 0.0)) gi = 0.0;
    s += gi * gi;
  }
  return std::sqrt(s);
}

struct SolveResult {
  std::vector<double> x;
  double value = -std::numeric_limits<double>::infinity();
  int iterations = 0;
};

/// Projected L-BFGS ascent with Armijo backtracking. Dimensions here are
/// tiny (at most five), so a short memory suffices.
template <typename F>
SolveResult maximize(const std::vector<double>& x0, const std::vector<double>& lo,
                     const std::vector<double>& hi, const OptimConfig& cfg, F&& func) {
  constexpr int kMemory = 8;
  const size_t dim = x0.size();
  SolveResult res;
  res.x = project(x0, lo, hi);
  std::vector<double> g(dim);
  res.value = func(res.x, g);
  if (!std::isfinite(res.value)) throw std::runtime_error("optimize: non-finite start");

  std::vector<std::vector<double>> s_hist, y_hist;
  std::vector<double> rho_hist;

  for (int iter = 0; iter < cfg.max_iterations; ++iter) {
    ++res.iterations;
    if (projected_grad_norm(res.x, g, lo, hi) < cfg.gradient_tol) break;

    // Two-loop recursion on the gradient (ascent: use +g).
    std::vector<double> d = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      double sd = 0.0;
      for (size_t k = 0; k < dim; ++k) sd += s_hist[i][k] * d[k];
      alpha[i] = rho_hist[i] * sd;
      for (size_t k = 0; k < dim; ++k) d[k] -= alpha[i] * y_hist[i][k];
    }
    if (!s_hist.empty()) {
      double sy = 0.0, yy = 0.0;
      for (size_t k = 0; k < dim; ++k) {
        sy += s_hist.back()[k] * y_hist.back()[k];
        yy += y_hist.back()[k] * y_hist.back()[k];
      }
      const double scale = sy / yy;
      for (size_t k = 0; k < dim; ++k) d[k] *= scale;
    }
    for (size_t i = 0; i < s_hist.size(); ++i) {
      double yd = 0.0;
      for (size_t k = 0; k < dim; ++k) yd += y_hist[i][k] * d[k];
      const double beta = rho_hist[i] * yd;
      for (size_t k = 0; k < dim; ++k) d[k] += s_hist[i][k] * (alpha[i] - beta);
    }
    double gd = 0.0;
    for (size_t k = 0; k < dim; ++k) gd += g[k] * d[k];
    if (!(gd > 0.0)) {
      d = g;  // not an ascent direction, restart from steepest ascent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
    }

    // Backtracking on the projected point.
    double step = 1.0;
    bool accepted = false;
    std::vector<double> x_new, g_new(dim);
    double f_new = res.value;
    for (int ls = 0; ls < 40; ++ls) {
      std::vector<double> cand(dim);
      for (size_t k = 0; k < dim; ++k) cand[k] = res.x[k] + step * d[k];
      cand = project(std::move(cand), lo, hi);
      double progress = 0.0;
      for (size_t k = 0; k < dim; ++k) progress += g[k] * (cand[k] - res.x[k]);
      double f_cand;
      try {
        f_cand = func(cand, g_new);
      } catch (const std::exception&) {
        step *= 0.5;
        continue;
      }
      if (std::isfinite(f_cand) && f_cand >= res.value + 1e-4 * progress &&
          f_cand > res.value - 1e-15) {
        x_new = std::move(cand);
        f_new = f_cand;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    std::vector<double> s(dim), y(dim);
    double sy = 0.0;
    for (size_t k = 0; k < dim; ++k) {
      s[k] = x_new[k] - res.x[k];
      y[k] = g_new[k] - g[k];
      sy += s[k] * y[k];
    }
    // For maximization the curvature pair needs s.y < 0; store negated y so
    // the standard minimization recursion applies to -f.
    if (sy < -1e-12) {
      for (size_t k = 0; k < dim; ++k) y[k] = -y[k];
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / (-sy));
      if (s_hist.size() > kMemory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }

    const double improvement = f_new - res.value;
    res.x = std::move(x_new);
    res.value = f_new;
    g = g_new;
    if (improvement < cfg.objective_tol) break;
  }
  return res;
}

}  // namespace

int ParamLayout::dim() const {
  int d = kernel_dim();
  for (int k = 0; k < kNumComponents; ++k)
    if (k != kKde && active[k]) ++d;
  return d;
}

KernelParams ParamLayout::kernel(const std::vector<double>& theta) const {
  if (!active[kKde]) return FixedKernelParams{1.0};  // unused
  if (adaptive) return AdaptiveKernelParams{std::exp(theta[0]), std::exp(theta[1])};
  return FixedKernelParams{std::exp(theta[0])};
}

MixtureParams ParamLayout::mixture(const std::vector<double>& theta) const {
  MixtureParams mp;
  mp.active = active;
  mp.logits.fill(0.0);
  int slot = kernel_dim();
  for (int k = 0; k < kNumComponents; ++k) {
    if (k == kKde || !active[k]) continue;
    mp.logits[k] = theta[slot++];
  }
  return mp;
}

std::vector<double> ParamLayout::pack(const KernelParams& kernel,
                                      const MixtureParams& mixture) const {
  std::vector<double> theta;
  if (active[kKde]) {
    if (adaptive) {
      const auto& ap = std::get<AdaptiveKernelParams>(kernel);
      theta.push_back(std::log(ap.h0));
      theta.push_back(std::log(ap.alpha));
    } else {
      theta.push_back(std::log(std::get<FixedKernelParams>(kernel).h));
    }
  }
  for (int k = 0; k < kNumComponents; ++k)
    if (k != kKde && active[k]) theta.push_back(mixture.logits[k]);
  return theta;
}

std::vector<double> ParamLayout::lower_bounds(const OptimConfig& cfg) const {
  std::vector<double> lo;
  if (active[kKde]) {
    if (adaptive) {
      lo.push_back(cfg.log_h_lo);
      lo.push_back(cfg.log_alpha_lo);
    } else {
      lo.push_back(std::max(cfg.log_h_lo, std::log(cfg.h_min)));
    }
  }
  for (int k = 0; k < kNumComponents; ++k)
    if (k != kKde && active[k]) lo.push_back(cfg.logit_lo);
  return lo;
}

std::vector<double> ParamLayout::upper_bounds(const OptimConfig& cfg) const {
  std::vector<double> hi;
  if (active[kKde]) {
    if (adaptive) {
      hi.push_back(cfg.log_h_hi);
      hi.push_back(cfg.log_alpha_hi);
    } else {
      hi.push_back(cfg.log_h_hi);
    }
  }
  for (int k = 0; k < kNumComponents; ++k)
    if (k != kKde && active[k]) hi.push_back(cfg.logit_hi);
  return hi;
}

ObjectiveEval objective_and_gradient(const ImageContext& ctx, const ParamLayout& layout,
                                     const std::vector<double>& theta) {
  std::vector<const ImageContext*> contexts{&ctx};
  auto pe = penalized_objective(contexts, layout, theta, 0.0, 0.0);
  return {pe.objective, std::move(pe.gradient), pe.min_bandwidth};
}

ObjectiveEval objective_and_gradient(const std::vector<ImageContext>& contexts,
                                     const ParamLayout& layout,
                                     const std::vector<double>& theta) {
  std::vector<const ImageContext*> ptrs;
  for (const auto& c : contexts) ptrs.push_back(&c);
  auto pe = penalized_objective(ptrs, layout, theta, 0.0, 0.0);
  return {pe.objective, std::move(pe.gradient), pe.min_bandwidth};
}

double min_effective_bandwidth(const ImageContext& ctx, const KernelParams& kernel) {
  if (const auto* fp = std::get_if<FixedKernelParams>(&kernel)) return fp->h;
  const auto& ap = std::get<AdaptiveKernelParams>(kernel);
  const auto all_points = ctx.table->points();
  double min_bw = std::numeric_limits<double>::infinity();
  for (const auto& fold : ctx.plan.folds) {
    if (fold.train.empty()) continue;
    std::vector<Point> sources;
    for (size_t idx : fold.train) sources.push_back(all_points[idx]);
    auto pilot = pilot_density(sources, ap.h0, ctx.geometry);
    auto hs = abramson_bandwidths(pilot, ap.alpha);
    for (double h : hs) min_bw = std::min(min_bw, h);
  }
  return min_bw;
}

namespace {

OptimResult run_restarts(const std::vector<const ImageContext*>& contexts,
                         const OptimConfig& config, const ParamLayout& layout,
                         uint64_t stream_tag) {
  constexpr double kPenaltyCoef = 100.0;
  const auto lo = layout.lower_bounds(config);
  const auto hi = layout.upper_bounds(config);
  if (config.restarts < 1) throw std::runtime_error("optimize: restarts must be >= 1");

  // Median pilot density over the first image's fixations, used to scale
  // initial alphas so the median initial h_j lands near h0.
  const auto anchor_points = contexts.front()->table->points();

  OptimResult best;
  best.objective_nats = -std::numeric_limits<double>::infinity();
  bool any = false;

  for (int r = 0; r < config.restarts; ++r) {
    std::mt19937_64 rng(mix(mix(config.seed, stream_tag), static_cast<uint64_t>(r)));
    std::uniform_real_distribution<double> u01(0.0, 1.0);

    std::vector<double> theta(layout.dim());
    int slot = 0;
    if (layout.active[kKde]) {
      const double log_h = std::log(2.0) + u01(rng) * (std::log(100.0) - std::log(2.0));
      theta[slot++] = std::clamp(log_h, lo[0], hi[0]);
      if (layout.adaptive) {
        const double h0 = std::exp(theta[0]);
        auto pilot = pilot_density(anchor_points, h0, contexts.front()->geometry);
        std::nth_element(pilot.begin(), pilot.begin() + pilot.size() / 2, pilot.end());
        const double median = pilot[pilot.size() / 2];
        double log_alpha = std::log(h0) + 0.5 * std::log(median) + (u01(rng) * 2.0 - 1.0);
        theta[slot++] = std::clamp(log_alpha, lo[1], hi[1]);
      }
    }
    for (; slot < layout.dim(); ++slot) theta[slot] = -3.0 + 6.0 * u01(rng);

    SolveResult solved;
    try {
      solved = maximize(theta, lo, hi, config, [&](const std::vector<double>& x,
                                                   std::vector<double>& g) {
        auto pe = penalized_objective(contexts, layout, x, config.h_min, kPenaltyCoef);
        g = pe.gradient;
        return pe.value;
      });
    } catch (const std::exception&) {
      best.restart_objectives.push_back(std::numeric_limits<double>::quiet_NaN());
      best.restart_iterations.push_back(0);
      continue;
    }

    // Feasibility repair: the hinge penalty only discourages violations, so
    // scale alpha up until the smallest bandwidth clears h_min.
    KernelParams kernel = layout.kernel(solved.x);
    MixtureParams mixture = layout.mixture(solved.x);
    bool repaired = false;
    if (layout.active[kKde] && layout.adaptive) {
      double min_bw = std::numeric_limits<double>::infinity();
      for (const ImageContext* ctx : contexts)
        min_bw = std::min(min_bw, min_effective_bandwidth(*ctx, kernel));
      if (min_bw < config.h_min) {
        auto& ap = std::get<AdaptiveKernelParams>(kernel);
        ap.alpha *= config.h_min / min_bw * (1.0 + 1e-12);
        repaired = true;
      }
    }

    std::vector<double> packed = layout.pack(kernel, mixture);
    auto pe = penalized_objective(contexts, layout, packed, config.h_min, 0.0);
    const double objective = pe.objective;
    best.restart_objectives.push_back(objective);
    best.restart_iterations.push_back(solved.iterations);
    if (!std::isfinite(objective)) continue;

    if (!any || objective > best.objective_nats) {
      any = true;
      best.kernel = kernel;
      best.mixture = mixture;
      best.objective_nats = objective;
      best.constraint_active = repaired || pe.min_bandwidth <= config.h_min * (1.0 + 1e-6);
    }
  }
  if (!any) throw std::runtime_error("optimize: every restart failed");
  return best;
}

}  // namespace

OptimResult optimize_image(const ImageContext& ctx, const OptimConfig& config,
                           const ParamLayout& layout) {
  std::vector<const ImageContext*> contexts{&ctx};
  return run_restarts(contexts, config, layout, fnv1a(ctx.image_id));
}

OptimResult optimize_global(const std::vector<ImageContext>& contexts,
                            const OptimConfig& config, const ParamLayout& layout) {
  if (contexts.empty()) throw std::runtime_error("optimize: no images");
  std::vector<const ImageContext*> ptrs;
  for (const auto& c : contexts) ptrs.push_back(&c);
  return run_restarts(ptrs, config, layout, fnv1a("__global__"));
}

}  // namespace fixdens
