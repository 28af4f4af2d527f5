#include "fixdens/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace fixdens {

double information_gain_bits(const std::vector<double>& per_fixation_lognats,
                             const ImageGeometry& geom) {
  if (per_fixation_lognats.empty())
    throw std::runtime_error("metrics: no per-fixation log-likelihoods");
  const double log2e = 1.0 / std::log(2.0);
  double mean = 0.0;
  for (double v : per_fixation_lognats) {
    if (!std::isfinite(v)) throw std::runtime_error("metrics: non-finite log-likelihood");
    mean += v;
  }
  mean /= static_cast<double>(per_fixation_lognats.size());
  return mean * log2e - std::log2(1.0 / geom.area());
}

double auc_uniform(const DensityGrid& grid, const std::vector<Point>& fixations) {
  if (grid.space != GridSpace::Probability)
    throw std::runtime_error("metrics: auc needs a probability-space grid");
  if (fixations.empty()) throw std::runtime_error("metrics: auc needs fixations");
  const size_t n = grid.values.size();

  // For each distinct value: (#smaller + 0.5 * #equal) / n, via one sort.
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](size_t a, size_t b) { return grid.values[a] < grid.values[b]; });
  // mid-rank per pixel, expressed as a fraction of all pixels
  std::vector<double> frac(n);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j < n && grid.values[order[j]] == grid.values[order[i]]) ++j;
    const double f = (static_cast<double>(i) + 0.5 * static_cast<double>(j - i)) /
                     static_cast<double>(n);
    for (size_t k = i; k < j; ++k) frac[order[k]] = f;
    i = j;
  }

  double total = 0.0;
  for (const auto& p : fixations) {
    const int ix = static_cast<int>(std::floor(p.x));
    const int iy = static_cast<int>(std::floor(p.y));
    if (ix < 0 || iy < 0 || ix >= grid.width || iy >= grid.height)
      throw std::runtime_error("metrics: fixation outside grid");
    total += frac[static_cast<size_t>(iy) * grid.width + ix];
  }
  return total / static_cast<double>(fixations.size());
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw std::runtime_error("metrics: quantile of empty set");
  std::sort(values.begin(), values.end());
  if (q <= 0.0) return values.front();
  if (q >= 1.0) return values.back();
  const double pos = q * static_cast<double>(values.size() - 1);
  const size_t i = static_cast<size_t>(pos);
  const double frac = pos - static_cast<double>(i);
  if (i + 1 >= values.size()) return values.back();
  return values[i] * (1.0 - frac) + values[i + 1] * frac;
}

ImprovementTable improvement_quantiles(const std::vector<MetricRecord>& records_a,
                                       const std::vector<MetricRecord>& records_b,
                                       const std::vector<double>& quantiles) {
  constexpr double kRelGuardBits = 0.05;
  std::map<std::string, const MetricRecord*> by_id;
  for (const auto& r : records_b) by_id[r.image_id] = &r;
  if (by_id.size() != records_a.size() || records_a.size() != records_b.size())
    throw std::runtime_error("metrics: record sets do not share image ids");

  std::vector<double> d_ll, d_ll_rel, d_auc;
  size_t rel_excluded = 0;
  for (const auto& a : records_a) {
    auto it = by_id.find(a.image_id);
    if (it == by_id.end())
      throw std::runtime_error("metrics: image " + a.image_id + " missing from second set");
    const MetricRecord& b = *it->second;
    d_ll.push_back(b.ig_bits - a.ig_bits);
    d_auc.push_back(b.auc - a.auc);
    if (std::abs(a.ig_bits) < kRelGuardBits)
      ++rel_excluded;
    else
      d_ll_rel.push_back((b.ig_bits - a.ig_bits) / a.ig_bits);
  }

  ImprovementTable table;
  table.n_images = records_a.size();
  table.n_rel_excluded = rel_excluded;
  auto add_row = [&](double q) {
    QuantileRow row;
    row.quantile = q;
    row.delta_ll = quantile(d_ll, q);
    row.delta_auc = quantile(d_auc, q);
    row.delta_ll_rel = d_ll_rel.empty() ? std::numeric_limits<double>::quiet_NaN()
                                        : quantile(d_ll_rel, q);
    table.rows.push_back(row);
  };
  for (double q : quantiles) add_row(q);
  add_row(1.0);  // max
  return table;
}

std::vector<CiRecord> bootstrap_ci(const std::vector<std::vector<double>>& per_image_values_by_model,
                                   int iterations, double level, uint64_t seed) {
  const size_t num_models = per_image_values_by_model.size();
  if (num_models == 0) throw std::runtime_error("metrics: bootstrap needs at least one model");
  const size_t num_images = per_image_values_by_model.front().size();
  if (num_images < 2) throw std::runtime_error("metrics: bootstrap needs at least two images");
  for (const auto& v : per_image_values_by_model)
    if (v.size() != num_images)
      throw std::runtime_error("metrics: models have differing image counts");
  if (iterations < 1 || !(level > 0.0 && level < 1.0))
    throw std::runtime_error("metrics: bad bootstrap configuration");

  // Within-image normalization (Cousineau) with the Morey scale factor; only
  // meaningful when comparing two or more models.
  std::vector<std::vector<double>> normalized(num_models,
                                              std::vector<double>(num_images));
  double grand = 0.0;
  for (const auto& v : per_image_values_by_model)
    for (double x : v) grand += x;
  grand /= static_cast<double>(num_models * num_images);
  const double morey =
      num_models > 1 ? std::sqrt(static_cast<double>(num_models) /
                                 static_cast<double>(num_models - 1))
                     : 1.0;
  for (size_t i = 0; i < num_images; ++i) {
    double image_mean = 0.0;
    for (size_t m = 0; m < num_models; ++m) image_mean += per_image_values_by_model[m][i];
    image_mean /= static_cast<double>(num_models);
    for (size_t m = 0; m < num_models; ++m) {
      const double centered = num_models > 1
                                  ? per_image_values_by_model[m][i] - image_mean + grand
                                  : per_image_values_by_model[m][i];
      normalized[m][i] = grand + morey * (centered - grand);
    }
  }

  std::vector<CiRecord> out(num_models);
  for (size_t m = 0; m < num_models; ++m) {
    double mean = 0.0;
    for (double x : per_image_values_by_model[m]) mean += x;
    out[m].mean = mean / static_cast<double>(num_images);
  }

  // Resample images, not fixations; one RNG substream per model.
  const double alpha = (1.0 - level) / 2.0;
  for (size_t m = 0; m < num_models; ++m) {
    std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ull + m + 1);
    std::uniform_int_distribution<size_t> pick(0, num_images - 1);
    std::vector<double> means(iterations);
    for (int it = 0; it < iterations; ++it) {
      double s = 0.0;
      for (size_t i = 0; i < num_images; ++i) s += normalized[m][pick(rng)];
      means[it] = s / static_cast<double>(num_images);
    }
    out[m].lo = quantile(means, alpha);
    out[m].hi = quantile(means, 1.0 - alpha);
  }
  return out;
}

}  // namespace fixdens
