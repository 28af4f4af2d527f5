#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fixdens/optimize.hpp"

using namespace fixdens;

namespace {

FixationTable two_cluster_table(int subjects, int per_subject, uint64_t seed,
                                double sigma = 5.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  FixationTable table;
  table.image_id = "img";
  const Point centers[2] = {{40.0, 40.0}, {110.0, 70.0}};
  for (int s = 0; s < subjects; ++s) {
    for (int f = 0; f < per_subject; ++f) {
      const Point& c = centers[(s + f) % 2];
      double x = std::clamp(c.x + noise(rng), 0.0, 149.9);
      double y = std::clamp(c.y + noise(rng), 0.0, 99.9);
      table.rows.push_back({"s" + std::to_string(s), {x, y}});
    }
  }
  return table;
}

ImageContext make_context(const FixationTable& table, FoldScheme scheme,
                          const ImageGeometry& geom = {150, 100}) {
  ImageContext ctx;
  ctx.image_id = table.image_id;
  ctx.geometry = geom;
  ctx.table = &table;
  ctx.plan = make_fold_plan(table, scheme);
  return ctx;
}

ParamLayout fixed_ku_layout() {
  ParamLayout layout;
  layout.adaptive = false;
  layout.active = {true, false, true, false};
  return layout;
}

ParamLayout adaptive_ku_layout() {
  ParamLayout layout;
  layout.adaptive = true;
  layout.active = {true, false, true, false};
  return layout;
}

}  // namespace

TEST_CASE("layout round-trips parameters through pack") {
  ParamLayout layout;
  layout.adaptive = true;
  layout.active = {true, true, true, false};
  CHECK(layout.dim() == 4);  // log h0, log alpha, cb logit, uniform logit
  AdaptiveKernelParams kp{12.0, 35.0};
  MixtureParams mp;
  mp.active = layout.active;
  mp.logits = {0.0, 1.5, -0.7, 0.0};
  auto theta = layout.pack(kp, mp);
  REQUIRE(theta.size() == 4);
  CHECK(theta[0] == doctest::Approx(std::log(12.0)));
  CHECK(theta[1] == doctest::Approx(std::log(35.0)));
  CHECK(theta[2] == doctest::Approx(1.5));
  CHECK(theta[3] == doctest::Approx(-0.7));
  auto kp2 = std::get<AdaptiveKernelParams>(layout.kernel(theta));
  CHECK(kp2.h0 == doctest::Approx(12.0).epsilon(1e-12));
  CHECK(kp2.alpha == doctest::Approx(35.0).epsilon(1e-12));
  auto mp2 = layout.mixture(theta);
  CHECK(mp2.logits[kKde] == 0.0);
  CHECK(mp2.logits[kCenterBias] == doctest::Approx(1.5));
  CHECK(mp2.logits[kUniform] == doctest::Approx(-0.7));
  CHECK_FALSE(mp2.active[kSaliency]);
}

TEST_CASE("objective equals the cross-validation evaluator exactly") {
  auto table = two_cluster_table(4, 5, 2);
  auto ctx = make_context(table, FoldScheme::Loso);
  for (bool adaptive : {false, true}) {
    ParamLayout layout = adaptive ? adaptive_ku_layout() : fixed_ku_layout();
    KernelParams kernel =
        adaptive ? KernelParams{AdaptiveKernelParams{9.0, 30.0}} : KernelParams{FixedKernelParams{9.0}};
    MixtureParams mp;
    mp.active = layout.active;
    mp.logits[kUniform] = -1.2;
    auto theta = layout.pack(kernel, mp);
    auto obj = objective_and_gradient(ctx, layout, theta);
    auto eval = evaluate_image(ctx.geometry, table, kernel, mp, {}, ctx.plan);
    CHECK(obj.value == doctest::Approx(eval.mean_ll_nats).epsilon(1e-12));
  }
}

TEST_CASE("gradients match central finite differences") {
  auto table = two_cluster_table(3, 5, 7);
  auto ctx = make_context(table, FoldScheme::Loso);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> uh(std::log(4.0), std::log(40.0));
  std::uniform_real_distribution<double> ua(std::log(10.0), std::log(200.0));
  std::uniform_real_distribution<double> ul(-2.5, 2.5);

  for (bool adaptive : {false, true}) {
    ParamLayout layout = adaptive ? adaptive_ku_layout() : fixed_ku_layout();
    for (int trial = 0; trial < 10; ++trial) {
      std::vector<double> theta;
      theta.push_back(uh(rng));
      if (adaptive) theta.push_back(ua(rng));
      theta.push_back(ul(rng));  // uniform logit
      auto obj = objective_and_gradient(ctx, layout, theta);
      for (size_t d = 0; d < theta.size(); ++d) {
        const double eps = 1e-5;
        auto lo = theta, hi = theta;
        lo[d] -= eps;
        hi[d] += eps;
        const double fd = (objective_and_gradient(ctx, layout, hi).value -
                           objective_and_gradient(ctx, layout, lo).value) /
                          (2.0 * eps);
        const double scale = std::max({1e-6, std::abs(fd), std::abs(obj.gradient[d])});
        CHECK(std::abs(obj.gradient[d] - fd) / scale <= 1e-4);
      }
    }
  }
}

TEST_CASE("gradient vanishes at an interior optimum of a 1-d slice") {
  // With only the KDE active and a fixed kernel, the objective is a smooth
  // 1-d function of log h; bracket its maximum and check the gradient there.
  auto table = two_cluster_table(4, 6, 5);
  auto ctx = make_context(table, FoldScheme::Loso);
  ParamLayout layout;
  layout.adaptive = false;
  layout.active = {true, false, false, false};

  double best_lh = 0.0, best_val = -1e300;
  for (int i = 0; i <= 400; ++i) {
    const double lh = std::log(1.0) + (std::log(60.0) - std::log(1.0)) * i / 400.0;
    const double v = objective_and_gradient(ctx, layout, {lh}).value;
    if (v > best_val) {
      best_val = v;
      best_lh = lh;
    }
  }
  // Refine with bisection on the gradient sign.
  double lo = best_lh - 0.05, hi = best_lh + 0.05;
  for (int it = 0; it < 60; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g = objective_and_gradient(ctx, layout, {mid}).gradient[0];
    (g > 0.0 ? lo : hi) = mid;
  }
  const double g_at_opt = objective_and_gradient(ctx, layout, {0.5 * (lo + hi)}).gradient[0];
  CHECK(std::abs(g_at_opt) < 1e-8);
}

TEST_CASE("optimizer recovers the grid-search bandwidth") {
  auto table = two_cluster_table(4, 6, 9);
  auto ctx = make_context(table, FoldScheme::Loso);
  ParamLayout layout;
  layout.adaptive = false;
  layout.active = {true, false, false, false};
  OptimConfig cfg;
  cfg.restarts = 6;
  cfg.seed = 1;
  auto result = optimize_image(ctx, cfg, layout);
  const double h_opt = std::get<FixedKernelParams>(result.kernel).h;

  double best_h = 0.0, best_val = -1e300;
  for (int i = 0; i <= 800; ++i) {
    const double lh = std::log(0.5) + (std::log(200.0) - std::log(0.5)) * i / 800.0;
    const double v = objective_and_gradient(ctx, layout, {lh}).value;
    if (v > best_val) {
      best_val = v;
      best_h = std::exp(lh);
    }
  }
  CHECK(result.objective_nats >= best_val - 1e-6);
  CHECK(h_opt == doctest::Approx(best_h).epsilon(0.02));
}

TEST_CASE("optimization is deterministic for a fixed seed") {
  auto table = two_cluster_table(3, 5, 13);
  auto ctx = make_context(table, FoldScheme::Loso);
  OptimConfig cfg;
  cfg.restarts = 4;
  cfg.seed = 42;
  auto layout = adaptive_ku_layout();
  auto r1 = optimize_image(ctx, cfg, layout);
  auto r2 = optimize_image(ctx, cfg, layout);
  CHECK(r1.objective_nats == r2.objective_nats);
  CHECK(std::get<AdaptiveKernelParams>(r1.kernel).h0 ==
        std::get<AdaptiveKernelParams>(r2.kernel).h0);
  CHECK(std::get<AdaptiveKernelParams>(r1.kernel).alpha ==
        std::get<AdaptiveKernelParams>(r2.kernel).alpha);
  CHECK(r1.mixture.logits == r2.mixture.logits);
  CHECK(r1.restart_objectives == r2.restart_objectives);
}

TEST_CASE("adaptive kernel never scores below the fixed kernel") {
  // The adaptive family contains every fixed kernel (alpha = h * sqrt(pilot)
  // is out of reach, but alpha with a huge pilot bandwidth flattens the
  // pilot, making bandwidths nearly constant), so with enough restarts the
  // optimized adaptive objective should not lose by more than noise.
  auto table = two_cluster_table(4, 6, 21);
  auto ctx = make_context(table, FoldScheme::Loso);
  OptimConfig cfg;
  cfg.restarts = 10;
  cfg.seed = 3;
  auto fixed = optimize_image(ctx, cfg, fixed_ku_layout());
  auto adaptive = optimize_image(ctx, cfg, adaptive_ku_layout());
  CHECK(adaptive.objective_nats >= fixed.objective_nats - 5e-3);
}

TEST_CASE("returned parameters satisfy the minimum-bandwidth constraint") {
  // Tight clusters push bandwidths small; the constraint must still hold.
  auto table = two_cluster_table(3, 6, 31, 0.8);
  auto ctx = make_context(table, FoldScheme::Loso);
  OptimConfig cfg;
  cfg.restarts = 6;
  cfg.seed = 11;
  cfg.h_min = 2.0;
  for (const auto& layout : {fixed_ku_layout(), adaptive_ku_layout()}) {
    auto result = optimize_image(ctx, cfg, layout);
    CHECK(min_effective_bandwidth(ctx, result.kernel) >= cfg.h_min * (1.0 - 1e-9));
  }
}

TEST_CASE("per-image optimization beats a shared global parameter set") {
  // Two images with very different spatial scales: per-image fitting must
  // match or beat the single shared optimum on the average objective.
  auto narrow = two_cluster_table(3, 6, 41, 2.0);
  narrow.image_id = "narrow";
  auto wide = two_cluster_table(3, 6, 43, 14.0);
  wide.image_id = "wide";
  auto ctx_n = make_context(narrow, FoldScheme::Loso);
  auto ctx_w = make_context(wide, FoldScheme::Loso);
  OptimConfig cfg;
  cfg.restarts = 6;
  cfg.seed = 7;
  auto layout = fixed_ku_layout();
  auto global = optimize_global({ctx_n, ctx_w}, cfg, layout);
  auto per_n = optimize_image(ctx_n, cfg, layout);
  auto per_w = optimize_image(ctx_w, cfg, layout);
  const double per_image_mean = 0.5 * (per_n.objective_nats + per_w.objective_nats);
  CHECK(per_image_mean >= global.objective_nats - 1e-9);
  // The scales differ enough that per-image fitting strictly helps.
  CHECK(per_image_mean > global.objective_nats + 1e-3);
}

TEST_CASE("global objective is the unweighted mean of per-image objectives") {
  auto a = two_cluster_table(3, 4, 51);
  a.image_id = "a";
  auto b = two_cluster_table(4, 4, 53);
  b.image_id = "b";
  auto ctx_a = make_context(a, FoldScheme::Loso);
  auto ctx_b = make_context(b, FoldScheme::Loso);
  auto layout = fixed_ku_layout();
  std::vector<double> theta{std::log(10.0), -0.4};
  auto joint = objective_and_gradient(std::vector<ImageContext>{ctx_a, ctx_b}, layout, theta);
  auto oa = objective_and_gradient(ctx_a, layout, theta);
  auto ob = objective_and_gradient(ctx_b, layout, theta);
  CHECK(joint.value == doctest::Approx(0.5 * (oa.value + ob.value)).epsilon(1e-12));
  for (size_t d = 0; d < theta.size(); ++d)
    CHECK(joint.gradient[d] ==
          doctest::Approx(0.5 * (oa.gradient[d] + ob.gradient[d])).epsilon(1e-12));
}

TEST_CASE("degenerate identical fixations stay feasible and finite") {
  FixationTable table;
  table.image_id = "img";
  for (int s = 0; s < 3; ++s)
    for (int f = 0; f < 3; ++f)
      table.rows.push_back({"s" + std::to_string(s), {50.0, 50.0}});
  auto ctx = make_context(table, FoldScheme::Loso, {100, 100});
  OptimConfig cfg;
  cfg.restarts = 4;
  cfg.seed = 2;
  for (const auto& layout : {fixed_ku_layout(), adaptive_ku_layout()}) {
    auto result = optimize_image(ctx, cfg, layout);
    CHECK(std::isfinite(result.objective_nats));
    CHECK(min_effective_bandwidth(ctx, result.kernel) >= cfg.h_min * (1.0 - 1e-9));
  }
}
