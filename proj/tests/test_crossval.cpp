#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixdens/crossval.hpp"

using namespace fixdens;

namespace {

FixationTable make_table(const std::vector<std::pair<std::string, Point>>& rows) {
  FixationTable table;
  table.image_id = "img";
  for (const auto& [s, p] : rows) table.rows.push_back({s, p});
  return table;
}

MixtureParams kde_only() {
  MixtureParams mp;
  mp.active = {true, false, false, false};
  return mp;
}

MixtureParams kde_uniform(double uniform_logit) {
  MixtureParams mp;
  mp.active = {true, false, true, false};
  mp.logits[kUniform] = uniform_logit;
  return mp;
}

FixationTable clustered_table(int subjects, int per_subject, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gx(60.0, 6.0), gy(40.0, 6.0);
  FixationTable table;
  table.image_id = "img";
  for (int s = 0; s < subjects; ++s) {
    for (int f = 0; f < per_subject; ++f) {
      double x = std::clamp(gx(rng), 0.0, 119.9);
      double y = std::clamp(gy(rng), 0.0, 79.9);
      table.rows.push_back({"s" + std::to_string(s), {x, y}});
    }
  }
  return table;
}

}  // namespace

TEST_CASE("LOSO folds: one per subject, test is that subject") {
  auto table = make_table({{"b", {1, 1}},
                           {"a", {2, 2}},
                           {"c", {3, 3}},
                           {"a", {4, 4}},
                           {"b", {5, 5}}});
  auto plan = make_fold_plan(table, FoldScheme::Loso);
  REQUIRE(plan.folds.size() == 3);
  // Folds follow sorted subject order: a, b, c.
  CHECK(plan.folds[0].test == std::vector<size_t>{1, 3});
  CHECK(plan.folds[0].train == std::vector<size_t>{0, 2, 4});
  CHECK(plan.folds[1].test == std::vector<size_t>{0, 4});
  CHECK(plan.folds[2].test == std::vector<size_t>{2});
  CHECK(plan.folds[2].train.size() == 4);
  for (const auto& fold : plan.folds) {
    // Train and test partition the rows.
    std::vector<size_t> all = fold.train;
    all.insert(all.end(), fold.test.begin(), fold.test.end());
    std::sort(all.begin(), all.end());
    CHECK(all == std::vector<size_t>{0, 1, 2, 3, 4});
  }
}

TEST_CASE("LOFO folds: one per fixation") {
  auto table = clustered_table(2, 4, 1);
  auto plan = make_fold_plan(table, FoldScheme::Lofo);
  REQUIRE(plan.folds.size() == 8);
  for (size_t i = 0; i < plan.folds.size(); ++i) {
    CHECK(plan.folds[i].test == std::vector<size_t>{i});
    CHECK(plan.folds[i].train.size() == 7);
    CHECK(std::find(plan.folds[i].train.begin(), plan.folds[i].train.end(), i) ==
          plan.folds[i].train.end());
  }
}

TEST_CASE("pooled plan is a single train-equals-test fold") {
  auto table = clustered_table(3, 5, 2);
  auto plan = make_fold_plan(table, FoldScheme::Pooled);
  REQUIRE(plan.folds.size() == 1);
  CHECK(plan.folds[0].train.size() == 15);
  CHECK(plan.folds[0].train == plan.folds[0].test);
}

TEST_CASE("LOSO needs at least two subjects, LOFO at least two fixations") {
  auto one_subject = make_table({{"a", {1, 1}}, {"a", {2, 2}}});
  CHECK_THROWS(make_fold_plan(one_subject, FoldScheme::Loso));
  auto one_fix = make_table({{"a", {1, 1}}});
  CHECK_THROWS(make_fold_plan(one_fix, FoldScheme::Lofo));
}

TEST_CASE("uniform-only mixture scores log(1/area) under every scheme") {
  const ImageGeometry geom{120, 80};
  auto table = clustered_table(3, 4, 3);
  MixtureParams mp;
  mp.active = {false, false, true, false};
  const double expected = -std::log(geom.area());
  for (auto scheme : {FoldScheme::Loso, FoldScheme::Lofo, FoldScheme::Pooled}) {
    auto plan = make_fold_plan(table, scheme);
    auto eval = evaluate_image(geom, table, FixedKernelParams{10.0}, mp, {}, plan);
    CHECK(eval.n_fixations == table.rows.size());
    CHECK(eval.mean_ll_nats == doctest::Approx(expected).epsilon(1e-12));
    for (double v : eval.per_fixation_lognats)
      CHECK(v == doctest::Approx(expected).epsilon(1e-12));
  }
}

TEST_CASE("two-subject LOSO matches a hand-built cross-scoring oracle") {
  const ImageGeometry geom{100, 100};
  auto table = make_table({{"a", {20, 20}},
                           {"a", {35, 50}},
                           {"a", {70, 30}},
                           {"b", {25, 22}},
                           {"b", {60, 65}}});
  const FixedKernelParams kernel{12.0};
  auto plan = make_fold_plan(table, FoldScheme::Loso);
  auto eval = evaluate_image(geom, table, kernel, kde_only(), {}, plan);

  // Oracle: subject a's fixations scored under the KDE built from b's, and
  // vice versa, using the library KDE evaluated point by point.
  std::vector<Point> a_pts{{20, 20}, {35, 50}, {70, 30}};
  std::vector<Point> b_pts{{25, 22}, {60, 65}};
  auto a_scores = fixed_kde_logdensity(b_pts, a_pts, kernel.h, geom);
  auto b_scores = fixed_kde_logdensity(a_pts, b_pts, kernel.h, geom);
  CHECK(eval.per_fixation_lognats[0] == doctest::Approx(a_scores[0]).epsilon(1e-12));
  CHECK(eval.per_fixation_lognats[1] == doctest::Approx(a_scores[1]).epsilon(1e-12));
  CHECK(eval.per_fixation_lognats[2] == doctest::Approx(a_scores[2]).epsilon(1e-12));
  CHECK(eval.per_fixation_lognats[3] == doctest::Approx(b_scores[0]).epsilon(1e-12));
  CHECK(eval.per_fixation_lognats[4] == doctest::Approx(b_scores[1]).epsilon(1e-12));

  double mean = 0.0;
  for (double v : a_scores) mean += v;
  for (double v : b_scores) mean += v;
  mean /= 5.0;
  CHECK(eval.mean_ll_nats == doctest::Approx(mean).epsilon(1e-12));
}

TEST_CASE("adaptive LOSO recomputes the pilot from training fixations only") {
  const ImageGeometry geom{100, 100};
  auto table = make_table({{"a", {20, 20}},
                           {"a", {35, 50}},
                           {"b", {25, 22}},
                           {"b", {60, 65}},
                           {"b", {80, 80}}});
  const AdaptiveKernelParams kernel{15.0, 40.0};
  auto plan = make_fold_plan(table, FoldScheme::Loso);
  auto eval = evaluate_image(geom, table, kernel, kde_only(), {}, plan);

  // Oracle for subject a's fold: pilot and bandwidths from b's fixations.
  std::vector<Point> a_pts{{20, 20}, {35, 50}};
  std::vector<Point> b_pts{{25, 22}, {60, 65}, {80, 80}};
  auto bw = abramson_bandwidths(pilot_density(b_pts, kernel.h0, geom), kernel.alpha);
  auto scores = adaptive_kde_logdensity(b_pts, bw, a_pts, geom);
  CHECK(eval.per_fixation_lognats[0] == doctest::Approx(scores[0]).epsilon(1e-12));
  CHECK(eval.per_fixation_lognats[1] == doctest::Approx(scores[1]).epsilon(1e-12));
}

TEST_CASE("pooled scores exceed LOSO for clustered data") {
  const ImageGeometry geom{120, 80};
  auto table = clustered_table(4, 6, 7);
  auto mp = kde_uniform(-3.0);
  auto loso = evaluate_image(geom, table, FixedKernelParams{6.0}, mp, {},
                             make_fold_plan(table, FoldScheme::Loso));
  auto pooled = evaluate_image(geom, table, FixedKernelParams{6.0}, mp, {},
                               make_fold_plan(table, FoldScheme::Pooled));
  CHECK(pooled.mean_ll_nats > loso.mean_ll_nats);
}

TEST_CASE("a subject's held-out score ignores its own fixations") {
  const ImageGeometry geom{120, 80};
  auto table = clustered_table(3, 4, 11);
  auto mp = kde_uniform(-2.0);
  auto plan = make_fold_plan(table, FoldScheme::Loso);
  auto base = evaluate_image(geom, table, FixedKernelParams{8.0}, mp, {}, plan);

  // Moving one of s0's other fixations changes nothing about how the rest of
  // s0's fixations are scored, because s0 is excluded from its own fold's
  // training set.
  auto table2 = table;
  table2.rows[1].position = {5.0, 5.0};  // s0's second fixation
  auto plan2 = make_fold_plan(table2, FoldScheme::Loso);
  auto moved = evaluate_image(geom, table2, FixedKernelParams{8.0}, mp, {}, plan2);
  CHECK(moved.per_fixation_lognats[0] ==
        doctest::Approx(base.per_fixation_lognats[0]).epsilon(1e-12));
  CHECK(moved.per_fixation_lognats[2] ==
        doctest::Approx(base.per_fixation_lognats[2]).epsilon(1e-12));
  CHECK(moved.per_fixation_lognats[3] ==
        doctest::Approx(base.per_fixation_lognats[3]).epsilon(1e-12));
  // Other subjects' scores do change: s0 is in their training sets.
  CHECK(moved.per_fixation_lognats[4] != base.per_fixation_lognats[4]);
}

TEST_CASE("row order does not affect per-fixation scores") {
  const ImageGeometry geom{120, 80};
  auto table = clustered_table(3, 4, 19);
  auto mp = kde_uniform(0.5);
  auto plan = make_fold_plan(table, FoldScheme::Loso);
  auto base = evaluate_image(geom, table, AdaptiveKernelParams{10.0, 30.0}, mp, {}, plan);

  std::vector<size_t> perm(table.rows.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  std::mt19937_64 rng(5);
  std::shuffle(perm.begin(), perm.end(), rng);
  FixationTable shuffled;
  shuffled.image_id = table.image_id;
  for (size_t i : perm) shuffled.rows.push_back(table.rows[i]);
  auto plan2 = make_fold_plan(shuffled, FoldScheme::Loso);
  auto eval2 = evaluate_image(geom, shuffled, AdaptiveKernelParams{10.0, 30.0}, mp, {},
                              plan2);
  CHECK(eval2.mean_ll_nats == doctest::Approx(base.mean_ll_nats).epsilon(1e-12));
  for (size_t i = 0; i < perm.size(); ++i)
    CHECK(eval2.per_fixation_lognats[i] ==
          doctest::Approx(base.per_fixation_lognats[perm[i]]).epsilon(1e-12));
}

TEST_CASE("information gain is invariant under uniform image rescaling") {
  DatasetBundle dataset;
  for (int scale : {1, 2}) {
    ImageRecord rec;
    rec.image_id = "img" + std::to_string(scale);
    rec.width = 120 * scale;
    rec.height = 80 * scale;
    dataset.images.push_back(rec);
    auto table = clustered_table(3, 5, 23);
    table.image_id = rec.image_id;
    for (auto& row : table.rows) {
      row.position.x *= scale;
      row.position.y *= scale;
    }
    dataset.fixations[rec.image_id] = std::move(table);
  }

  std::map<std::string, ImageModel> params;
  params["img1"] = {FixedKernelParams{8.0}, kde_uniform(-1.0)};
  params["img2"] = {FixedKernelParams{16.0}, kde_uniform(-1.0)};
  std::map<std::string, ModelComponents> comps{{"img1", {}}, {"img2", {}}};
  auto summary = ioc_summary(dataset, params, FoldScheme::Loso, comps);
  REQUIRE(summary.per_image.size() == 2);
  // Doubling coordinates and the bandwidth shifts both the model LL and the
  // uniform baseline by -log 4, so the gain in bits is unchanged.
  CHECK(summary.per_image[0].ig_bits ==
        doctest::Approx(summary.per_image[1].ig_bits).epsilon(1e-9));
  CHECK(summary.mean_ig_bits ==
        doctest::Approx(summary.per_image[0].ig_bits).epsilon(1e-9));
}

TEST_CASE("summary ordering and aggregate means") {
  DatasetBundle dataset;
  for (const char* id : {"zeta", "alpha", "mid"}) {
    ImageRecord rec;
    rec.image_id = id;
    rec.width = 120;
    rec.height = 80;
    dataset.images.push_back(rec);
    auto table = clustered_table(2, 4, 31 + rec.image_id.size());
    table.image_id = id;
    dataset.fixations[id] = std::move(table);
  }
  std::map<std::string, ImageModel> params;
  std::map<std::string, ModelComponents> comps;
  for (const auto& img : dataset.images) {
    params[img.image_id] = {FixedKernelParams{7.0}, kde_uniform(0.0)};
    comps[img.image_id] = {};
  }
  auto summary = ioc_summary(dataset, params, FoldScheme::Loso, comps);
  REQUIRE(summary.per_image.size() == 3);
  CHECK(summary.per_image[0].image_id == "alpha");
  CHECK(summary.per_image[1].image_id == "mid");
  CHECK(summary.per_image[2].image_id == "zeta");
  double mean_ig = 0.0, mean_ll = 0.0;
  for (const auto& r : summary.per_image) {
    mean_ig += r.ig_bits;
    mean_ll += r.mean_ll_nats;
    const double uniform_bits = std::log2(120.0 * 80.0);
    CHECK(r.ig_bits ==
          doctest::Approx(r.mean_ll_nats / std::log(2.0) + uniform_bits).epsilon(1e-12));
  }
  CHECK(summary.mean_ig_bits == doctest::Approx(mean_ig / 3.0).epsilon(1e-12));
  CHECK(summary.mean_ll_nats == doctest::Approx(mean_ll / 3.0).epsilon(1e-12));
}
