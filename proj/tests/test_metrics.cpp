#include <doctest.h>

#include <cmath>
#include <random>

#include "fixdens/metrics.hpp"

using namespace fixdens;

namespace {

DensityGrid prob_grid(int w, int h, std::vector<double> values) {
  DensityGrid g;
  g.width = w;
  g.height = h;
  g.space = GridSpace::Probability;
  g.values = std::move(values);
  return g;
}

MetricRecord rec(const std::string& id, double ig, double auc) {
  MetricRecord r;
  r.image_id = id;
  r.ig_bits = ig;
  r.auc = auc;
  r.n_fixations = 10;
  return r;
}

}  // namespace

TEST_CASE("information gain of the uniform model is zero") {
  const ImageGeometry geom{100, 80};
  std::vector<double> lognats(7, -std::log(geom.area()));
  CHECK(information_gain_bits(lognats, geom) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("a constant log-likelihood shift moves the gain by the same amount") {
  const ImageGeometry geom{100, 80};
  std::vector<double> lognats{-8.1, -9.3, -7.7, -8.8};
  const double base = information_gain_bits(lognats, geom);
  for (auto& v : lognats) v += 0.21 * std::log(2.0);
  CHECK(information_gain_bits(lognats, geom) ==
        doctest::Approx(base + 0.21).epsilon(1e-12));
}

TEST_CASE("information gain rejects non-finite inputs") {
  const ImageGeometry geom{10, 10};
  CHECK_THROWS(information_gain_bits({}, geom));
  CHECK_THROWS(
      information_gain_bits({-1.0, -std::numeric_limits<double>::infinity()}, geom));
}

TEST_CASE("auc golden values on tiny grids") {
  // 2x1 grid: fixated pixel holds 3/4 of the mass. Fraction of pixels with a
  // smaller value is 1/2, plus half of the tie with itself: 0.75.
  auto g = prob_grid(2, 1, {0.75, 0.25});
  CHECK(auc_uniform(g, {{0.5, 0.5}}) == doctest::Approx(0.75).epsilon(1e-12));
  // Fixating the low pixel instead gives 0.25.
  CHECK(auc_uniform(g, {{1.5, 0.5}}) == doctest::Approx(0.25).epsilon(1e-12));

  // All mass in one pixel of an N-pixel grid: 1 - 0.5/N.
  auto delta = prob_grid(4, 4, std::vector<double>(16, 0.0));
  delta.values[5] = 1.0;  // pixel (1, 1)
  CHECK(auc_uniform(delta, {{1.5, 1.5}}) ==
        doctest::Approx(1.0 - 0.5 / 16.0).epsilon(1e-12));
}

TEST_CASE("auc of a uniform grid is one half") {
  auto g = prob_grid(8, 5, std::vector<double>(40, 1.0 / 40.0));
  std::vector<Point> fixations{{0.2, 0.2}, {3.7, 4.1}, {7.9, 0.1}};
  CHECK(auc_uniform(g, fixations) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("auc is invariant under strictly monotone value transforms") {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.1, 2.0);
  std::vector<double> vals(30);
  double sum = 0.0;
  for (auto& v : vals) sum += (v = u(rng));
  for (auto& v : vals) v /= sum;
  auto g = prob_grid(6, 5, vals);

  std::vector<Point> fixations{{0.5, 0.5}, {2.3, 1.8}, {5.1, 4.4}, {3.3, 2.2}};
  const double base = auc_uniform(g, fixations);

  auto cubed = g;
  double csum = 0.0;
  for (auto& v : cubed.values) csum += (v = v * v * v);
  for (auto& v : cubed.values) v /= csum;
  CHECK(auc_uniform(cubed, fixations) == doctest::Approx(base).epsilon(1e-12));
}

TEST_CASE("auc handles ties at the fixated value by mid-rank") {
  // Two of four pixels tie at the top; fixating either gives
  // (2 smaller + 0.5 * 2 equal) / 4 = 0.75.
  auto g = prob_grid(2, 2, {0.4, 0.4, 0.15, 0.05});
  CHECK(auc_uniform(g, {{0.5, 0.5}}) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(auc_uniform(g, {{1.5, 0.5}}) == doctest::Approx(0.75).epsilon(1e-12));
}

TEST_CASE("quantile matches a sort-based oracle") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-10.0, 10.0);
  std::vector<double> vals(17);
  for (auto& v : vals) v = u(rng);

  auto sorted = vals;
  std::sort(sorted.begin(), sorted.end());
  CHECK(quantile(vals, 0.0) == sorted.front());
  CHECK(quantile(vals, 1.0) == sorted.back());
  CHECK(quantile(vals, 0.5) == doctest::Approx(sorted[8]).epsilon(1e-12));
  // q = 0.25 over 17 values: position 4 exactly
  CHECK(quantile(vals, 0.25) == doctest::Approx(sorted[4]).epsilon(1e-12));
  // interpolated case: q = 0.1 over 17 values lands at position 1.6
  CHECK(quantile(vals, 0.1) ==
        doctest::Approx(sorted[1] * 0.4 + sorted[2] * 0.6).epsilon(1e-12));
}

TEST_CASE("improvement table reports quantiles of per-image deltas plus the max") {
  std::vector<MetricRecord> a, b;
  // Deltas in ig_bits: 0.1, 0.2, 0.3, 0.4, 0.5; in auc: constant 0.01.
  for (int i = 0; i < 5; ++i) {
    a.push_back(rec("img" + std::to_string(i), 1.0, 0.80));
    b.push_back(rec("img" + std::to_string(i), 1.0 + 0.1 * (i + 1), 0.81));
  }
  auto table = improvement_quantiles(a, b, {0.0, 0.5});
  REQUIRE(table.rows.size() == 3);
  CHECK(table.n_images == 5);
  CHECK(table.n_rel_excluded == 0);
  CHECK(table.rows[0].quantile == 0.0);
  CHECK(table.rows[0].delta_ll == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(table.rows[1].delta_ll == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(table.rows[2].quantile == 1.0);
  CHECK(table.rows[2].delta_ll == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(table.rows[1].delta_auc == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(table.rows[1].delta_ll_rel == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("near-zero baselines are dropped from the relative column only") {
  std::vector<MetricRecord> a{rec("x", 0.01, 0.7), rec("y", 1.0, 0.7)};
  std::vector<MetricRecord> b{rec("x", 0.50, 0.7), rec("y", 1.5, 0.7)};
  auto table = improvement_quantiles(a, b, {0.5});
  CHECK(table.n_rel_excluded == 1);
  // Relative column uses only image y: 0.5 / 1.0.
  CHECK(table.rows[0].delta_ll_rel == doctest::Approx(0.5).epsilon(1e-12));
  // Absolute column still uses both images: median of {0.49, 0.5}.
  CHECK(table.rows[0].delta_ll == doctest::Approx(0.495).epsilon(1e-12));
}

TEST_CASE("mismatched image sets are rejected") {
  std::vector<MetricRecord> a{rec("x", 1.0, 0.7), rec("y", 1.0, 0.7)};
  std::vector<MetricRecord> b{rec("x", 1.0, 0.7), rec("z", 1.0, 0.7)};
  CHECK_THROWS(improvement_quantiles(a, b, {0.5}));
}

TEST_CASE("bootstrap of identical models collapses to zero-width intervals") {
  std::vector<double> vals{1.0, 1.4, 0.8, 1.2, 0.9, 1.3};
  auto cis = bootstrap_ci({vals, vals}, 500, 0.95, 7);
  REQUIRE(cis.size() == 2);
  for (const auto& ci : cis) {
    CHECK(ci.mean == doctest::Approx(1.1).epsilon(1e-12));
    CHECK(ci.hi - ci.lo == doctest::Approx(0.0).epsilon(1e-12));
  }
}

TEST_CASE("paired normalization removes between-image variance") {
  // Model B is exactly model A plus a constant. After within-image
  // normalization every image carries the same evidence, so the intervals
  // have zero width even though the raw values vary a lot across images.
  std::vector<double> a{0.2, 2.5, 1.1, 3.0, 0.4, 1.9};
  std::vector<double> b;
  for (double v : a) b.push_back(v + 0.3);
  auto cis = bootstrap_ci({a, b}, 500, 0.95, 11);
  CHECK(cis[0].hi - cis[0].lo == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(cis[1].hi - cis[1].lo == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(cis[0].mean == doctest::Approx(1.5166666667).epsilon(1e-9));
  CHECK(cis[1].mean == doctest::Approx(1.8166666667).epsilon(1e-9));
}

TEST_CASE("single-model bootstrap keeps raw between-image variance") {
  std::vector<double> vals{0.2, 2.5, 1.1, 3.0, 0.4, 1.9};
  auto cis = bootstrap_ci({vals}, 2000, 0.95, 3);
  REQUIRE(cis.size() == 1);
  CHECK(cis[0].hi - cis[0].lo > 0.5);
  CHECK(cis[0].lo <= cis[0].mean);
  CHECK(cis[0].hi >= cis[0].mean);
}

TEST_CASE("bootstrap is deterministic in the seed") {
  std::vector<double> a{0.2, 2.5, 1.1, 3.0, 0.4};
  std::vector<double> b{0.5, 2.1, 1.6, 2.7, 0.9};
  auto c1 = bootstrap_ci({a, b}, 300, 0.9, 99);
  auto c2 = bootstrap_ci({a, b}, 300, 0.9, 99);
  auto c3 = bootstrap_ci({a, b}, 300, 0.9, 100);
  CHECK(c1[0].lo == c2[0].lo);
  CHECK(c1[1].hi == c2[1].hi);
  CHECK(c1[0].lo != c3[0].lo);
}

TEST_CASE("bootstrap input validation") {
  CHECK_THROWS(bootstrap_ci({}, 100, 0.95, 1));
  CHECK_THROWS(bootstrap_ci({{1.0}}, 100, 0.95, 1));
  CHECK_THROWS(bootstrap_ci({{1.0, 2.0}, {1.0}}, 100, 0.95, 1));
  CHECK_THROWS(bootstrap_ci({{1.0, 2.0}}, 0, 0.95, 1));
  CHECK_THROWS(bootstrap_ci({{1.0, 2.0}}, 100, 1.5, 1));
}
