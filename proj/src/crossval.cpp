#include "fixdens/crossval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace fixdens {

const char* fold_scheme_name(FoldScheme s) {
  switch (s) {
    case FoldScheme::Loso: return "loso";
    case FoldScheme::Lofo: return "lofo";
    case FoldScheme::Pooled: return "pooled";
  }
  return "?";
}

FoldPlan make_fold_plan(const FixationTable& table, FoldScheme scheme) {
  FoldPlan plan;
  plan.scheme = scheme;
  const size_t n = table.rows.size();
  switch (scheme) {
    case FoldScheme::Loso: {
      auto subjects = table.subjects();
      if (subjects.size() < 2)
        throw std::runtime_error("fold plan: LOSO needs at least 2 subjects on image " +
                                 table.image_id);
      for (const auto& subject : subjects) {
        Fold fold;
        for (size_t i = 0; i < n; ++i) {
          if (table.rows[i].subject_id == subject)
            fold.test.push_back(i);
          else
            fold.train.push_back(i);
        }
        plan.folds.push_back(std::move(fold));
      }
      break;
    }
    case FoldScheme::Lofo: {
      if (n < 2)
        throw std::runtime_error("fold plan: LOFO needs at least 2 fixations on image " +
                                 table.image_id);
      for (size_t i = 0; i < n; ++i) {
        Fold fold;
        fold.test.push_back(i);
        for (size_t j = 0; j < n; ++j)
          if (j != i) fold.train.push_back(j);
        plan.folds.push_back(std::move(fold));
      }
      break;
    }
    case FoldScheme::Pooled: {
      Fold fold;
      for (size_t i = 0; i < n; ++i) {
        fold.train.push_back(i);
        fold.test.push_back(i);
      }
      plan.folds.push_back(std::move(fold));
      break;
    }
  }
  return plan;
}

FoldEval evaluate_image(const ImageGeometry& geom, const FixationTable& table,
                        const KernelParams& kernel, const MixtureParams& mixture,
                        const ModelComponents& components, const FoldPlan& plan) {
  FoldEval eval;
  eval.per_fixation_lognats.assign(table.rows.size(),
                                   std::numeric_limits<double>::quiet_NaN());

  const auto all_points = table.points();
  // Regularizer components do not depend on the fold split.
  const auto regularizers = regularizer_logdensities(geom, all_points, mixture,
                                                     components.center_bias,
                                                     components.saliency);

  double total = 0.0;
  size_t count = 0;
  for (const auto& fold : plan.folds) {
    if (fold.test.empty()) continue;
    ComponentLogDensities per_component;
    for (int k = 0; k < kNumComponents; ++k) {
      if (k == kKde || !mixture.active[k]) continue;
      auto& dst = per_component.values[k];
      dst.reserve(fold.test.size());
      for (size_t idx : fold.test) dst.push_back(regularizers.values[k][idx]);
    }
    if (mixture.active[kKde]) {
      if (fold.train.empty())
        throw std::runtime_error("crossval: fold with empty train set on image " +
                                 table.image_id);
      std::vector<Point> sources, queries;
      sources.reserve(fold.train.size());
      queries.reserve(fold.test.size());
      for (size_t idx : fold.train) sources.push_back(all_points[idx]);
      for (size_t idx : fold.test) queries.push_back(all_points[idx]);
      if (const auto* fp = std::get_if<FixedKernelParams>(&kernel)) {
        per_component.values[kKde] = fixed_kde_logdensity(sources, queries, fp->h, geom);
      } else {
        const auto& ap = std::get<AdaptiveKernelParams>(kernel);
        auto pilot = pilot_density(sources, ap.h0, geom);
        auto hs = abramson_bandwidths(pilot, ap.alpha);
        per_component.values[kKde] = adaptive_kde_logdensity(sources, hs, queries, geom);
      }
    }
    auto fold_lls = mixture_logdensity(mixture, per_component);
    for (size_t t = 0; t < fold.test.size(); ++t) {
      eval.per_fixation_lognats[fold.test[t]] = fold_lls[t];
      total += fold_lls[t];
      ++count;
    }
  }
  if (count == 0) throw std::runtime_error("crossval: plan evaluated no fixations");
  eval.mean_ll_nats = total / static_cast<double>(count);
  eval.n_fixations = count;
  return eval;
}

IocSummary ioc_summary(const DatasetBundle& dataset,
                       const std::map<std::string, ImageModel>& per_image_params,
                       FoldScheme scheme,
                       const std::map<std::string, ModelComponents>& per_image_components) {
  IocSummary summary;
  for (const auto& img : dataset.images) {
    auto fit = dataset.fixations.find(img.image_id);
    if (fit == dataset.fixations.end() || fit->second.rows.empty()) continue;
    auto pit = per_image_params.find(img.image_id);
    if (pit == per_image_params.end())
      throw std::runtime_error("ioc: missing parameters for image " + img.image_id);
    ModelComponents components;
    auto cit = per_image_components.find(img.image_id);
    if (cit != per_image_components.end()) components = cit->second;

    auto plan = make_fold_plan(fit->second, scheme);
    auto eval = evaluate_image(img.geometry(), fit->second, pit->second.kernel,
                               pit->second.mixture, components, plan);
    ImageResult result;
    result.image_id = img.image_id;
    result.mean_ll_nats = eval.mean_ll_nats;
    result.n_fixations = eval.n_fixations;
    const double log2e = 1.0 / std::log(2.0);
    result.ig_bits = eval.mean_ll_nats * log2e - std::log2(1.0 / img.geometry().area());
    summary.per_image.push_back(std::move(result));
  }
  if (summary.per_image.empty()) throw std::runtime_error("ioc: no evaluable images");
  std::sort(summary.per_image.begin(), summary.per_image.end(),
            [](const ImageResult& a, const ImageResult& b) { return a.image_id < b.image_id; });
  double sum_ig = 0.0, sum_ll = 0.0;
  for (const auto& r : summary.per_image) {
    sum_ig += r.ig_bits;
    sum_ll += r.mean_ll_nats;
  }
  summary.mean_ig_bits = sum_ig / static_cast<double>(summary.per_image.size());
  summary.mean_ll_nats = sum_ll / static_cast<double>(summary.per_image.size());
  return summary;
}

}  // namespace fixdens
