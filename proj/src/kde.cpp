#include "fixdens/kde.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fixdens {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;
constexpr double kInvSqrtTwoPi = 0.3989422804014326779;

double normal_cdf(double u) { return 0.5 * std::erfc(-u * M_SQRT1_2); }
double normal_pdf(double u) { return kInvSqrtTwoPi * std::exp(-0.5 * u * u); }

/// Mass of a unit-variance-scaled Gaussian centered at c over [0, extent],
/// bandwidth h, plus its derivative with respect to h.
struct AxisNorm {
  double z;
  double dz_dh;
};

AxisNorm axis_norm(double c, double extent, double h) {
  const double hi = (extent - c) / h;
  const double lo = -c / h;
  AxisNorm out;
  out.z = normal_cdf(hi) - normal_cdf(lo);
  out.dz_dh = -((extent - c) * normal_pdf(hi) - (-c) * normal_pdf(lo)) / (h * h);
  return out;
}

void check_sources(const std::vector<Point>& sources) {
  if (sources.empty()) throw std::runtime_error("kde: empty source list");
  for (const auto& s : sources)
    if (!std::isfinite(s.x) || !std::isfinite(s.y))
      throw std::runtime_error("kde: non-finite source coordinate");
}

}  // namespace

double truncated_gaussian_logpdf(const Point& source, const Point& query, double h,
                                 const ImageGeometry& geom) {
  const double r2 = squared_distance(source, query);
  const double zx = axis_norm(source.x, geom.width, h).z;
  const double zy = axis_norm(source.y, geom.height, h).z;
  return -kLogTwoPi - 2.0 * std::log(h) - 0.5 * r2 / (h * h) - std::log(zx) - std::log(zy);
}

LogPdfGrad truncated_gaussian_logpdf_grad(const Point& source, const Point& query, double h,
                                          const ImageGeometry& geom) {
  const double r2 = squared_distance(source, query);
  const AxisNorm nx = axis_norm(source.x, geom.width, h);
  const AxisNorm ny = axis_norm(source.y, geom.height, h);
  LogPdfGrad out;
  out.logpdf = -kLogTwoPi - 2.0 * std::log(h) - 0.5 * r2 / (h * h) - std::log(nx.z) -
               std::log(ny.z);
  out.d_h = -2.0 / h + r2 / (h * h * h) - nx.dz_dh / nx.z - ny.dz_dh / ny.z;
  return out;
}

std::vector<double> fixed_kde_logdensity(const std::vector<Point>& sources,
                                         const std::vector<Point>& queries, double h,
                                         const ImageGeometry& geom) {
  if (!(h > 0.0)) throw std::runtime_error("kde: bandwidth must be positive");
  BandwidthVector hs(sources.size(), h);
  return adaptive_kde_logdensity(sources, hs, queries, geom);
}

std::vector<double> pilot_density(const std::vector<Point>& sources, double h0,
                                  const ImageGeometry& geom) {
  auto logs = fixed_kde_logdensity(sources, sources, h0, geom);
  for (double& v : logs) v = std::exp(v);
  return logs;
}

BandwidthVector abramson_bandwidths(const std::vector<double>& pilot_values, double alpha) {
  if (!(alpha > 0.0)) throw std::runtime_error("kde: alpha must be positive");
  BandwidthVector out;
  out.reserve(pilot_values.size());
  for (double p : pilot_values) {
    if (!(p > 0.0)) throw std::runtime_error("kde: non-positive pilot density value");
    out.push_back(alpha / std::sqrt(p));
  }
  return out;
}

std::vector<double> adaptive_kde_logdensity(const std::vector<Point>& sources,
                                            const BandwidthVector& bandwidths,
                                            const std::vector<Point>& queries,
                                            const ImageGeometry& geom) {
  check_sources(sources);
  if (bandwidths.size() != sources.size())
    throw std::runtime_error("kde: bandwidth count does not match source count");
  const double log_m = std::log(static_cast<double>(sources.size()));
  std::vector<double> out(queries.size());
  std::vector<double> terms(sources.size());
  for (size_t q = 0; q < queries.size(); ++q) {
    if (!std::isfinite(queries[q].x) || !std::isfinite(queries[q].y))
      throw std::runtime_error("kde: non-finite query coordinate");
    for (size_t j = 0; j < sources.size(); ++j)
      terms[j] = truncated_gaussian_logpdf(sources[j], queries[q], bandwidths[j], geom);
    const double m = *std::max_element(terms.begin(), terms.end());
    double s = 0.0;
    for (double t : terms) s += std::exp(t - m);
    out[q] = m + std::log(s) - log_m;
  }
  return out;
}

KdeEval fixed_kde_eval(const std::vector<Point>& sources, const std::vector<Point>& queries,
                       double h, const ImageGeometry& geom) {
  check_sources(sources);
  if (!(h > 0.0)) throw std::runtime_error("kde: bandwidth must be positive");
  const size_t n = sources.size();
  const double log_m = std::log(static_cast<double>(n));
  KdeEval eval;
  eval.logdensity.resize(queries.size());
  eval.d_log_h.resize(queries.size());
  std::vector<LogPdfGrad> terms(n);
  for (size_t q = 0; q < queries.size(); ++q) {
    double mx = -HUGE_VAL;
    for (size_t j = 0; j < n; ++j) {
      terms[j] = truncated_gaussian_logpdf_grad(sources[j], queries[q], h, geom);
      mx = std::max(mx, terms[j].logpdf);
    }
    double s = 0.0, g = 0.0;
    for (size_t j = 0; j < n; ++j) {
      const double w = std::exp(terms[j].logpdf - mx);
      s += w;
      g += w * terms[j].d_h;
    }
    eval.logdensity[q] = mx + std::log(s) - log_m;
    eval.d_log_h[q] = h * g / s;
  }
  return eval;
}

KdeEval adaptive_kde_eval(const std::vector<Point>& sources, const std::vector<Point>& queries,
                          double h0, double alpha, const ImageGeometry& geom) {
  check_sources(sources);
  if (!(h0 > 0.0) || !(alpha > 0.0))
    throw std::runtime_error("kde: adaptive kernel parameters must be positive");
  const size_t n = sources.size();

  // Stage one: pilot density at each source and its log-h0 sensitivity.
  KdeEval pilot = fixed_kde_eval(sources, sources, h0, geom);
  BandwidthVector hs(n);
  std::vector<double> dh_dlogh0(n), dh_dlogalpha(n);
  for (size_t j = 0; j < n; ++j) {
    hs[j] = alpha * std::exp(-0.5 * pilot.logdensity[j]);
    // h_j = alpha * exp(-log pilot_j / 2)
    dh_dlogalpha[j] = hs[j];
    dh_dlogh0[j] = -0.5 * hs[j] * pilot.d_log_h[j];
  }

  // Stage two: mixture of per-source bandwidths at the queries.
  const double log_m = std::log(static_cast<double>(n));
  KdeEval eval;
  eval.bandwidths = hs;
  eval.d_bw_log_h0 = dh_dlogh0;
  eval.logdensity.resize(queries.size());
  eval.d_log_h0.resize(queries.size());
  eval.d_log_alpha.resize(queries.size());
  std::vector<LogPdfGrad> terms(n);
  for (size_t q = 0; q < queries.size(); ++q) {
    double mx = -HUGE_VAL;
    for (size_t j = 0; j < n; ++j) {
      terms[j] = truncated_gaussian_logpdf_grad(sources[j], queries[q], hs[j], geom);
      mx = std::max(mx, terms[j].logpdf);
    }
    double s = 0.0, gh0 = 0.0, ga = 0.0;
    for (size_t j = 0; j < n; ++j) {
      const double w = std::exp(terms[j].logpdf - mx);
      s += w;
      gh0 += w * terms[j].d_h * dh_dlogh0[j];
      ga += w * terms[j].d_h * dh_dlogalpha[j];
    }
    eval.logdensity[q] = mx + std::log(s) - log_m;
    eval.d_log_h0[q] = gh0 / s;
    eval.d_log_alpha[q] = ga / s;
  }
  return eval;
}

KdeEval kde_eval(const std::vector<Point>& sources, const std::vector<Point>& queries,
                 const KernelParams& params, const ImageGeometry& geom) {
  if (const auto* fp = std::get_if<FixedKernelParams>(&params))
    return fixed_kde_eval(sources, queries, fp->h, geom);
  const auto& ap = std::get<AdaptiveKernelParams>(params);
  return adaptive_kde_eval(sources, queries, ap.h0, ap.alpha, geom);
}

DensityGrid rasterize_kde(const std::vector<Point>& sources, const KernelParams& params,
                          const ImageGeometry& geom) {
  check_sources(sources);
  std::vector<Point> centers;
  centers.reserve(static_cast<size_t>(geom.width) * geom.height);
  for (int iy = 0; iy < geom.height; ++iy)
    for (int ix = 0; ix < geom.width; ++ix)
      centers.push_back({ix + 0.5, iy + 0.5});

  std::vector<double> logs;
  if (const auto* fp = std::get_if<FixedKernelParams>(&params)) {
    logs = fixed_kde_logdensity(sources, centers, fp->h, geom);
  } else {
    const auto& ap = std::get<AdaptiveKernelParams>(params);
    auto pilot = pilot_density(sources, ap.h0, geom);
    auto hs = abramson_bandwidths(pilot, ap.alpha);
    logs = adaptive_kde_logdensity(sources, hs, centers, geom);
  }

  DensityGrid grid;
  grid.width = geom.width;
  grid.height = geom.height;
  grid.space = GridSpace::Probability;
  grid.values.resize(logs.size());
  for (size_t i = 0; i < logs.size(); ++i) grid.values[i] = std::exp(logs[i]);
  grid.normalize();
  return grid;
}

}  // namespace fixdens
