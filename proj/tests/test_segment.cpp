#include "doctest.h"

#include <cmath>

#include "cpquant/segment.hpp"
#include "test_util.hpp"

using namespace cpquant;
using testutil::gaussian_eps;
using testutil::gaussian_xs;
using testutil::make_mono_data;
using testutil::vec2;

namespace {

SegmentationConstraints step1() {
  SegmentationConstraints c;
  c.grid_step = 1;
  return c;
}

}  // namespace

TEST_CASE("constraints: derived minimum segment length") {
  SegmentationConstraints c;
  CHECK(c.min_len(100, 2) == 11);  // ceil(100^0.51)
  CHECK(c.min_len(12, 2) == 4);    // floor p + 2 dominates
  c.min_seg_floor = 5;
  CHECK(c.min_len(12, 2) == 5);
  c.min_seg_floor = 2;
  CHECK_THROWS_AS(c.min_len(12, 2), std::invalid_argument);  // < p + 1
  SegmentationConstraints bad;
  bad.min_seg_exponent = 0.5;
  CHECK_THROWS_AS(bad.min_len(100, 2), std::invalid_argument);
  SegmentationConstraints bad2;
  bad2.grid_step = 0;
  CHECK_THROWS_AS(bad2.min_len(100, 2), std::invalid_argument);
}

TEST_CASE("k = 0 equals the whole-sample fit") {
  auto xs = gaussian_xs(30, 11);
  auto eps = gaussian_eps(30, 12, 0.5);
  Dataset d = make_mono_data(xs, {}, {vec2(0.5, 1.0)}, eps);
  FitConfig cfg;
  cfg.seed = 2;
  SegmentedFit fit = fit_k_changepoints(mono_molecular(), d, 0, QuantileLevel(0.5),
                                        step1(), cfg);
  SegmentFit whole = fit_quantile(mono_molecular(), d, {1, 30}, QuantileLevel(0.5), cfg);
  CHECK(fit.k == 0);
  CHECK(fit.breaks.empty());
  CHECK(fit.total_loss == whole.loss);
  CHECK(fit.phis.size() == 1);
  CHECK((fit.phis[0] - whole.phi_hat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("noiseless two-phase data localizes the break exactly") {
  auto xs = gaussian_xs(24, 77);
  Dataset d = make_mono_data(xs, {12}, {vec2(0.5, 1.0), vec2(2.0, -0.8)});
  FitConfig cfg;
  cfg.seed = 5;
  SegmentedFit fit = fit_k_changepoints(mono_molecular(), d, 1, QuantileLevel(0.5),
                                        step1(), cfg);
  REQUIRE(fit.breaks.size() == 1);
  CHECK(fit.breaks[0] == 12);
  CHECK(std::abs(fit.phis[0][0] - 0.5) <= 1e-4);
  CHECK(std::abs(fit.phis[0][1] - 1.0) <= 1e-4);
  CHECK(std::abs(fit.phis[1][0] - 2.0) <= 1e-4);
  CHECK(std::abs(fit.phis[1][1] + 0.8) <= 1e-4);
  CHECK(fit.total_loss <= 1e-6);
}

TEST_CASE("segment cost is the minimum over tested parameters") {
  auto xs = gaussian_xs(20, 31);
  auto eps = gaussian_eps(20, 32, 0.8);
  Dataset d = make_mono_data(xs, {}, {vec2(1.0, 0.5)}, eps);
  FitConfig cfg;
  cfg.seed = 9;
  QuantileLevel tau(0.4);
  double cost = segment_cost(mono_molecular(), d, 3, 18, tau, cfg);
  CHECK(cost >= 0.0);
  Rng rng(404);
  for (int t = 0; t < 20; ++t) {
    VectorXd phi = vec2(rng.uniform(-3.0, 3.0), rng.uniform(-2.0, 2.0));
    CHECK(cost <= total_loss(mono_molecular(), d, phi, tau, {3, 18}) + 1e-12);
  }
  // Single-observation ranges are rejected.
  CHECK_THROWS_AS(segment_cost(mono_molecular(), d, 5, 5, tau, cfg),
                  std::invalid_argument);
}

TEST_CASE("cost table matches per-cell independent refits on toy data") {
  auto xs = gaussian_xs(12, 55);
  auto eps = gaussian_eps(12, 56, 0.3);
  Dataset d = make_mono_data(xs, {6}, {vec2(0.5, 1.0), vec2(2.0, 0.3)}, eps);
  FitConfig cfg;
  cfg.seed = 13;
  QuantileLevel tau(0.5);
  RegressionModel m = mono_molecular();
  SegmentCostCache cache(m, d, Objective::quantile, 0.5, 1, cfg);
  for (int l = 1; l <= 9; ++l) {
    for (int k = l + 3; k <= 12; ++k) {
      double cached = cache.cost(l, k);
      SegmentFit cold = fit_quantile(m, d, {l, k}, tau, cfg);
      CHECK(cached <= cold.loss + 1e-6);
      CHECK(cached >= cold.loss - 1e-6);
    }
  }
}

TEST_CASE("DP equals brute force on random instances") {
  FitConfig cfg;
  SegmentationConstraints c = step1();
  for (int trial = 0; trial < 10; ++trial) {
    int n = 26 + (trial % 3) * 7;
    int k = 1 + trial % 2;
    auto xs = gaussian_xs(n, 600 + trial);
    auto eps = gaussian_eps(n, 700 + trial, 0.4);
    std::vector<int> breaks;
    std::vector<VectorXd> phis;
    if (k == 1) {
      breaks = {n / 2};
      phis = {vec2(0.5, 1.0), vec2(2.0, -0.5)};
    } else {
      breaks = {n / 3, 2 * n / 3};
      phis = {vec2(0.5, 1.0), vec2(2.0, -0.5), vec2(-1.0, 0.8)};
    }
    Dataset d = make_mono_data(xs, breaks, phis, eps);
    cfg.seed = 40 + trial;
    SegmentedFit dp = fit_k_changepoints(mono_molecular(), d, k, QuantileLevel(0.5),
                                         c, cfg);
    SegmentedFit bf = brute_force_changepoints(mono_molecular(), d, k,
                                               QuantileLevel(0.5), c, cfg);
    REQUIRE(dp.breaks.size() == bf.breaks.size());
    for (std::size_t r = 0; r < dp.breaks.size(); ++r) {
      CHECK(dp.breaks[r] == bf.breaks[r]);
    }
    CHECK(std::abs(dp.total_loss - bf.total_loss) <= 1e-9);
  }
}

TEST_CASE("brute force counts the admissible breaks") {
  // n=20, k=1, min_len=5: exactly 11 admissible break positions.
  auto xs = gaussian_xs(20, 808);
  auto eps = gaussian_eps(20, 809, 0.3);
  Dataset d = make_mono_data(xs, {10}, {vec2(0.5, 1.0), vec2(2.0, -0.5)}, eps);
  SegmentationConstraints c = step1();
  c.min_seg_floor = 5;
  CHECK(c.min_len(20, 2) == 5);
  int count = 0;
  for (int b = 1; b < 20; ++b) {
    if (b >= 5 && 20 - b >= 5) ++count;
  }
  CHECK(count == 11);
  FitConfig cfg;
  cfg.seed = 3;
  // A budget of 10 tuples cannot cover the 11 admissible breaks.
  CHECK_THROWS_WITH_AS(
      brute_force_changepoints(mono_molecular(), d, 1, QuantileLevel(0.5), c, cfg, 10),
      "oracle too large", std::runtime_error);
  SegmentedFit bf = brute_force_changepoints(mono_molecular(), d, 1,
                                             QuantileLevel(0.5), c, cfg, 11);
  CHECK(bf.breaks.size() == 1);

  // k = 0 brute force reduces to the whole-sample fit.
  SegmentedFit whole = brute_force_changepoints(mono_molecular(), d, 0,
                                                QuantileLevel(0.5), c, cfg);
  SegmentFit direct = fit_quantile(mono_molecular(), d, {1, 20}, QuantileLevel(0.5), cfg);
  CHECK(whole.total_loss == direct.loss);
}

TEST_CASE("total loss is nonincreasing in k") {
  FitConfig cfg;
  SegmentationConstraints c = step1();
  for (int trial = 0; trial < 6; ++trial) {
    int n = 36;
    auto xs = gaussian_xs(n, 900 + trial);
    auto eps = gaussian_eps(n, 950 + trial, 0.5);
    Dataset d = make_mono_data(xs, {18}, {vec2(0.5, 1.0), vec2(2.5, -0.6)}, eps);
    cfg.seed = 70 + trial;
    double prev = std::numeric_limits<double>::infinity();
    for (int k = 0; k <= 2; ++k) {
      SegmentedFit fit = fit_k_changepoints(mono_molecular(), d, k,
                                            QuantileLevel(0.5), c, cfg);
      CHECK(fit.total_loss <= prev + 1e-9);
      prev = fit.total_loss;
      double sum = 0.0;
      for (const auto& seg : fit.per_segment) sum += seg.loss;
      CHECK(std::abs(sum - fit.total_loss) <= 1e-9);
    }
  }
}

TEST_CASE("returned breaks respect the minimum gap by construction") {
  auto xs = gaussian_xs(40, 1234);
  auto eps = gaussian_eps(40, 1235, 0.6);
  Dataset d = make_mono_data(xs, {20}, {vec2(0.5, 1.0), vec2(2.0, -0.5)}, eps);
  FitConfig cfg;
  cfg.seed = 8;
  SegmentationConstraints c = step1();
  const int min_len = c.min_len(40, 2);
  for (int k = 1; k <= 2; ++k) {
    SegmentedFit fit = fit_k_changepoints(mono_molecular(), d, k, QuantileLevel(0.5),
                                          c, cfg);
    int prev = 0;
    for (std::size_t r = 0; r <= fit.breaks.size(); ++r) {
      int end = r < fit.breaks.size() ? fit.breaks[r] : 40;
      CHECK(end - prev >= min_len);
      prev = end;
    }
  }
}

TEST_CASE("coarse grid plus refinement matches the exact search") {
  auto xs = gaussian_xs(40, 3131);
  auto eps = gaussian_eps(40, 3232, 0.4);
  Dataset d = make_mono_data(xs, {19}, {vec2(0.5, 1.0), vec2(2.5, -0.7)}, eps);
  FitConfig cfg;
  cfg.seed = 55;
  SegmentationConstraints fine = step1();
  SegmentationConstraints coarse = step1();
  coarse.grid_step = 2;
  SegmentedFit exact = fit_k_changepoints(mono_molecular(), d, 1, QuantileLevel(0.5),
                                          fine, cfg);
  SegmentedFit refined = fit_k_changepoints(mono_molecular(), d, 1, QuantileLevel(0.5),
                                            coarse, cfg);
  CHECK(exact.breaks[0] == refined.breaks[0]);
  CHECK(std::abs(exact.total_loss - refined.total_loss) <= 1e-6);
}

TEST_CASE("infeasible segmentations are rejected") {
  auto xs = gaussian_xs(12, 2);
  Dataset d = make_mono_data(xs, {}, {vec2(0.5, 1.0)});
  FitConfig cfg;
  SegmentationConstraints c = step1();
  // min_len = 4 at n=12, so k=2 needs 12 and k=3 needs 16 observations.
  CHECK_NOTHROW(fit_k_changepoints(mono_molecular(), d, 2, QuantileLevel(0.5), c, cfg));
  CHECK_THROWS_WITH_AS(
      fit_k_changepoints(mono_molecular(), d, 3, QuantileLevel(0.5), c, cfg),
      "infeasible segmentation", std::invalid_argument);
  CHECK_THROWS_WITH_AS(
      brute_force_changepoints(mono_molecular(), d, 3, QuantileLevel(0.5), c, cfg),
      "infeasible segmentation", std::invalid_argument);
}

TEST_CASE("least-squares segmentation localizes a noiseless break") {
  auto xs = gaussian_xs(24, 4004);
  Dataset d = make_mono_data(xs, {12}, {vec2(0.5, 1.0), vec2(2.0, -0.8)});
  FitConfig cfg;
  cfg.seed = 6;
  SegmentedFit fit = fit_k_changepoints_ls(mono_molecular(), d, 1, step1(), cfg);
  REQUIRE(fit.breaks.size() == 1);
  CHECK(fit.breaks[0] == 12);
  CHECK(fit.total_loss <= 1e-10);
}

TEST_CASE("DP is deterministic and thread-count independent") {
  auto xs = gaussian_xs(36, 6006);
  auto eps = gaussian_eps(36, 6007, 0.5);
  Dataset d = make_mono_data(xs, {18}, {vec2(0.5, 1.0), vec2(2.0, -0.5)}, eps);
  FitConfig cfg;
  cfg.seed = 77;
  SegmentedFit one = fit_k_changepoints(mono_molecular(), d, 2, QuantileLevel(0.5),
                                        step1(), cfg, 1);
  SegmentedFit two = fit_k_changepoints(mono_molecular(), d, 2, QuantileLevel(0.5),
                                        step1(), cfg, 2);
  REQUIRE(one.breaks.size() == two.breaks.size());
  for (std::size_t r = 0; r < one.breaks.size(); ++r) {
    CHECK(one.breaks[r] == two.breaks[r]);
  }
  CHECK(one.total_loss == two.total_loss);
  for (std::size_t r = 0; r < one.phis.size(); ++r) {
    CHECK((one.phis[r] - two.phis[r]).cwiseAbs().maxCoeff() == 0.0);
  }
}
