#include "tadispatch/solver.hpp"

#include <doctest.h>

#include <cmath>

#include "tadispatch/comm_cost.hpp"
#include "tadispatch/errors.hpp"
#include "tadispatch/rng.hpp"

using namespace tad;

namespace {

const DispatchConfig kRe1{1, 120, 4, 4, 250000.0, 4.0};  // 1 MB per token

Matrix re1_beta_hat() {
  Matrix beta(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) beta.at(i, j) = i == j ? 0.1 : (i / 2 == j / 2 ? 1.0 : 4.0);
  return beta;
}

// Random symmetric-tree beta_hat: one log-uniform value per level plus a
// log-uniform diagonal.
Matrix random_tree_beta(Rng& rng, const Topology& topo) {
  const int p = topo.device_count;
  const size_t num_levels = device_groups(topo, 0).size();
  std::vector<double> level(num_levels);
  for (double& v : level) v = rng.log_uniform(0.1, 32.0);
  const double diag = rng.log_uniform(0.1, 32.0);
  Matrix beta(p, p, 0.0);
  for (int i = 0; i < p; ++i) {
    beta.at(i, i) = diag;
    const auto groups = device_groups(topo, i);
    for (size_t l = 0; l < groups.size(); ++l)
      for (int j : groups[l])
        if (j != i) beta.at(i, j) = level[l];
  }
  return beta;
}

}  // namespace

TEST_CASE("target_homogeneous: uniform chunk and guard") {
  LinkProfile prof;
  prof.alpha = Matrix(4, 4, 0.0);
  prof.beta = Matrix(4, 4, 2.0);
  const TargetPattern t = target_homogeneous(prof, kRe1);
  for (double v : t.dispatch.c.data()) CHECK(v == 30.0);

  const TargetPattern t2 = target_homogeneous(prof, {2, 4, 8, 4, 1, 1});
  for (double v : t2.dispatch.c.data()) CHECK(v == 1.0);

  LinkProfile hetero = prof;
  hetero.beta.at(0, 2) = 4.0;
  CHECK_THROWS_AS(target_homogeneous(hetero, kRe1), ValidationError);
}

TEST_CASE("target_closed_form: RE-1 row values and equalized link costs") {
  const TargetPattern t = target_closed_form(re1_beta_hat(), kRe1);
  CHECK(t.dispatch.c.at(0, 0) == doctest::Approx(104.3478).epsilon(1e-5));
  CHECK(t.dispatch.c.at(0, 1) == doctest::Approx(10.4348).epsilon(1e-5));
  CHECK(t.dispatch.c.at(0, 2) == doctest::Approx(2.6087).epsilon(1e-5));
  CHECK(t.dispatch.c.at(0, 3) == doctest::Approx(2.6087).epsilon(1e-5));
  CHECK(t.dispatch.c.row_sum(0) == doctest::Approx(120.0));
  CHECK(t.feasibility.rows_ok());
  CHECK(t.feasibility.cols_ok());

  const CostReport report = exchange_cost(Matrix(4, 4, 0.0), re1_beta_hat(), t.dispatch);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(report.pair_cost_us.at(i, j) == doctest::Approx(10.4348).epsilon(1e-4));
}

TEST_CASE("target_closed_form: equal beta reduces to the even pattern") {
  Matrix beta(4, 4, 3.0);
  const TargetPattern t = target_closed_form(beta, kRe1);
  for (double v : t.dispatch.c.data()) CHECK(v == doctest::Approx(30.0));
}

TEST_CASE("target_closed_form: [2,2,2] row is proportional to the bandwidths") {
  const Topology topo = parse_topology("[2,2,2]");
  Matrix beta(8, 8);
  const std::vector<double> level{1.0, 4.0, 16.0};
  for (int i = 0; i < 8; ++i) {
    beta.at(i, i) = 0.1;
    const auto groups = device_groups(topo, i);
    for (size_t l = 0; l < groups.size(); ++l)
      for (int j : groups[l])
        if (j != i) beta.at(i, j) = level[l];
  }
  const DispatchConfig cfg{1, 232, 8, 8, 250000.0, 4.0};
  const TargetPattern t = target_closed_form(beta, cfg);

  // proportional to 1/beta row: [10, 1, .25, .25, .0625 x4]
  const std::vector<double> want_ratio{10.0, 1.0, 0.25, 0.25, 0.0625, 0.0625, 0.0625, 0.0625};
  for (int e = 1; e < 8; ++e)
    CHECK(t.dispatch.c.at(0, e) / t.dispatch.c.at(0, 1) ==
          doctest::Approx(want_ratio[static_cast<size_t>(e)] / want_ratio[1]));
  CHECK(t.feasibility.rows_ok());
  CHECK(t.feasibility.cols_ok());

  // LP certifies the bottleneck within 1%
  const TargetPattern lp = lp_oracle(Matrix(8, 8, 0.0), beta, cfg);
  const double cf_cost = exchange_cost(Matrix(8, 8, 0.0), beta, t.dispatch).bottleneck_us;
  const double lp_cost = exchange_cost(Matrix(8, 8, 0.0), beta, lp.dispatch).bottleneck_us;
  CHECK(cf_cost <= 1.01 * lp_cost);
}

TEST_CASE("target_closed_form: rejects non-positive beta") {
  Matrix beta(2, 2, 1.0);
  beta.at(0, 1) = 0.0;
  CHECK_THROWS_AS(target_closed_form(beta, DispatchConfig{1, 4, 2, 2, 1, 1}), ValidationError);
}

TEST_CASE("lp_oracle: homogeneous optimum equals the even bottleneck") {
  Matrix alpha(4, 4, 3.0);
  Matrix beta(4, 4, 2.0);
  const DispatchConfig cfg{1, 128, 4, 4, 250000.0, 4.0};
  const TargetPattern t = lp_oracle(alpha, beta, cfg);
  const double expected = 3.0 + 2.0 * (128.0 / 4.0);  // alpha + beta * kS/P MB
  CHECK(exchange_cost(alpha, beta, t.dispatch).bottleneck_us == doctest::Approx(expected));
  CHECK(t.feasibility.rows_ok(1e-6));
  CHECK(t.feasibility.cols_ok(1e-6));
}

TEST_CASE("lp_oracle: RE-1 with zero latency matches the closed form") {
  const TargetPattern lp = lp_oracle(Matrix(4, 4, 0.0), re1_beta_hat(), kRe1);
  const double lp_cost = exchange_cost(Matrix(4, 4, 0.0), re1_beta_hat(), lp.dispatch).bottleneck_us;
  CHECK(lp_cost == doctest::Approx(120.0 / 11.5).epsilon(1e-6));
}

TEST_CASE("lp_oracle: latency terms push the optimum up; gap is reported") {
  Matrix alpha(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) alpha.at(i, j) = i == j ? 0.0 : (i / 2 == j / 2 ? 5.0 : 50.0);
  const Matrix beta = re1_beta_hat();

  const TargetPattern with_alpha = lp_oracle(alpha, beta, kRe1);
  const double obj_with = exchange_cost(alpha, beta, with_alpha.dispatch).bottleneck_us;
  const double obj_without =
      exchange_cost(Matrix(4, 4, 0.0), beta, lp_oracle(Matrix(4, 4, 0.0), beta, kRe1).dispatch)
          .bottleneck_us;
  CHECK(obj_with > obj_without);

  // closed form ignores alpha; its objective gap against the LP is exposed
  const Topology topo = parse_topology("[2,2]");
  LinkProfile raw;
  raw.alpha = alpha;
  raw.beta = beta;
  SolveOptions opts;
  opts.compute_gap = true;
  const SolveResult res = solve_target(topo, raw, kRe1, opts);
  REQUIRE(res.closed_form_gap.has_value());
  CHECK(*res.closed_form_gap >= -1e-9);
}

TEST_CASE("lp_oracle: rejects oversized instances") {
  Matrix big(32, 32, 1.0);
  CHECK_THROWS_AS(lp_oracle(big, big, DispatchConfig{1, 8, 32, 32, 1, 1}), ValidationError);
}

TEST_CASE("check_constraints: residual accounting") {
  const DispatchMatrix even = even_pattern(kRe1);
  const FeasibilityReport clean = check_constraints(even.c, kRe1);
  CHECK(clean.row_residual == 0.0);
  CHECK(clean.col_residual == 0.0);

  Matrix perturbed = even.c;
  perturbed.at(0, 0) += 1.0;
  perturbed.at(0, 1) -= 1.0;  // row sum kept, two columns off by one token
  const FeasibilityReport r = check_constraints(perturbed, kRe1);
  CHECK(r.row_residual == doctest::Approx(0.0));
  CHECK(r.col_residual == doctest::Approx(1.0 / 120.0));  // one token over k*S/E
}

TEST_CASE("closed form vs LP oracle on random symmetric-tree profiles") {
  Rng rng(2024);
  const std::vector<std::vector<int>> shapes{{2, 2}, {4}, {2, 2, 2}, {2, 4}, {4, 2}, {8}};
  for (int iter = 0; iter < 30; ++iter) {
    const auto& shape = shapes[static_cast<size_t>(rng.uniform_int(0, 5))];
    std::string text = "[";
    for (size_t i = 0; i < shape.size(); ++i) text += (i ? "," : "") + std::to_string(shape[i]);
    text += "]";
    const Topology topo = parse_topology(text);
    const int p = topo.device_count;
    const int experts_per_device = rng.uniform_int(1, 2);
    const DispatchConfig cfg{1, 8 * p, p * experts_per_device, p, 250000.0, 4.0};
    const Matrix beta = random_tree_beta(rng, topo);

    const TargetPattern cf = target_closed_form(beta, cfg);
    CHECK(cf.feasibility.row_residual < 1e-9);
    CHECK(cf.feasibility.col_residual < 1e-9);

    const Matrix zero(p, p, 0.0);
    const double cf_cost = exchange_cost(zero, beta, cf.dispatch).bottleneck_us;
    const double lp_cost =
        exchange_cost(zero, beta, lp_oracle(zero, beta, cfg).dispatch).bottleneck_us;
    CHECK(cf_cost <= 1.01 * lp_cost + 1e-12);

    // equal link costs per row under the closed form
    const CostReport rep = exchange_cost(zero, beta, cf.dispatch);
    double lo = 1e300, hi = 0.0;
    for (double v : rep.pair_cost_us.data()) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    CHECK((hi - lo) / hi < 1e-9);
  }
}

TEST_CASE("bandwidth monotonicity and no expert isolation") {
  const Matrix beta = re1_beta_hat();
  const TargetPattern base = target_closed_form(beta, kRe1);
  for (double v : base.dispatch.c.data()) CHECK(v > 0.0);  // no isolation

  // speeding up the outer level pulls volume toward it
  Matrix faster = beta;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      if (i / 2 != j / 2) faster.at(i, j) = 2.0;
  const TargetPattern quick = target_closed_form(faster, kRe1);
  CHECK(quick.dispatch.c.at(0, 2) > base.dispatch.c.at(0, 2));
  CHECK(quick.dispatch.c.at(0, 0) < base.dispatch.c.at(0, 0));
}

TEST_CASE("bottleneck(even) dominates bottleneck(closed form)") {
  Rng rng(77);
  for (int iter = 0; iter < 25; ++iter) {
    const Topology topo = parse_topology("[2,2]");
    const Matrix beta = random_tree_beta(rng, topo);
    const Matrix zero(4, 4, 0.0);
    const double even_cost = exchange_cost(zero, beta, even_pattern(kRe1)).bottleneck_us;
    const double cf_cost =
        exchange_cost(zero, beta, target_closed_form(beta, kRe1).dispatch).bottleneck_us;
    CHECK(even_cost >= cf_cost - 1e-9);
  }
}

TEST_CASE("solve_target: pipeline routing per topology kind") {
  SUBCASE("homogeneous goes even") {
    const Topology topo = parse_topology(R"({"kind":"homogeneous","structure":[0,1,2,3]})");
    LinkProfile prof;
    prof.alpha = Matrix(4, 4, 0.0);
    prof.beta = Matrix(4, 4, 2.0);
    const SolveResult res = solve_target(topo, prof, kRe1);
    for (double v : res.pattern.dispatch.c.data()) CHECK(v == 30.0);
  }
  SUBCASE("asymmetric trees are merged, smoothed, solved") {
    const Topology topo = parse_topology("[[2,2],[2]]");
    LinkProfile raw;
    raw.alpha = Matrix(6, 6, 0.0);
    raw.beta = Matrix(6, 6, 4.0);
    for (int i = 0; i < 6; ++i) raw.beta.at(i, i) = 0.1;
    // intra pairs fast on the original leaf groups
    for (auto [a, b] : {std::pair{0, 1}, {2, 3}, {4, 5}}) {
      raw.beta.at(a, b) = 1.0;
      raw.beta.at(b, a) = 1.0;
    }
    const DispatchConfig cfg{1, 60, 6, 6, 250000.0, 4.0};
    const SolveResult res = solve_target(topo, raw, cfg);
    CHECK(res.merged);
    CHECK(res.solve_topology.levels == std::vector<int>{3, 2});
    CHECK(res.pattern.feasibility.rows_ok());
    CHECK(res.pattern.dispatch.c.at(0, 1) > res.pattern.dispatch.c.at(0, 2));
  }
  SUBCASE("ring uses the bottleneck-effective profile") {
    const Topology ring = parse_topology(
        R"({"kind":"ring","structure":[0,1,2,3],"edge_beta_us_per_mb":[1,1,1,3]})");
    LinkProfile unused;
    unused.alpha = Matrix(4, 4, 0.0);
    unused.beta = Matrix(4, 4, 1.0);
    const DispatchConfig cfg{1, 40, 4, 4, 250000.0, 4.0};
    const SolveResult res = solve_target(ring, unused, cfg);
    CHECK(res.pattern.feasibility.rows_ok(1e-9));
    CHECK(res.pattern.feasibility.cols_ok(1e-9));
    // the 0-3 link is reached around the ring, so it gets the 1.0 bottleneck
    CHECK(res.pattern.dispatch.c.at(0, 3) == doctest::Approx(res.pattern.dispatch.c.at(0, 1)));
  }
}
