#include "tadispatch/comm_cost.hpp"

#include <doctest.h>

#include <array>
#include <cmath>

#include "tadispatch/errors.hpp"
#include "tadispatch/rng.hpp"

using namespace tad;

namespace {

// One token carries exactly 1 MB.
const DispatchConfig kMbConfig{1, 128, 4, 4, 250000.0, 4.0};

// Measured dispatch times of the [2,2] motivation experiment, even split of
// 128 MB (32 MB per peer): self 144, intra 758, inter 5609/5618.
LinkProfile table1_profile() {
  std::vector<TransferSample> samples = {
      {0, 0, 32.0, 144.0}, {0, 1, 32.0, 758.0}, {0, 2, 32.0, 5609.0}, {0, 3, 32.0, 5618.0}};
  const FittedProfile fitted = fit_profile(samples, 4);
  const Topology topo = parse_topology("[2,2]");
  return fill_partial_profile(fitted.alpha, fitted.beta, &topo);
}

DispatchMatrix uneven_pattern_quarters() {
  // per row: 1/4 self, 1/2 intra neighbor, 1/8 to each cross device
  DispatchMatrix dm;
  dm.config = kMbConfig;
  dm.c = Matrix::from_rows({{32, 64, 16, 16}, {64, 32, 16, 16}, {16, 16, 32, 64}, {16, 16, 64, 32}});
  return dm;
}

}  // namespace

TEST_CASE("pair_cost: zero payload costs alpha") {
  Matrix alpha(2, 2, 7.5);
  Matrix beta(2, 2, 3.0);
  DispatchMatrix dm{Matrix(2, 2, 0.0), {1, 4, 2, 2, 1.0, 4.0}};
  CHECK(pair_cost(alpha, beta, dm, 0, 1) == doctest::Approx(7.5));
}

TEST_CASE("pair_cost: direct arithmetic cross-check") {
  // beta 4 us/MB, 2.609-ish tokens of 1 MB each
  Matrix alpha(4, 4, 0.0);
  Matrix beta(4, 4, 4.0);
  DispatchMatrix dm;
  dm.config = {1, 120, 4, 4, 250000.0, 4.0};
  dm.c = Matrix(4, 4, 0.0);
  const double chunk = 120.0 / (11.5 * 4.0);
  dm.c.at(0, 2) = chunk;
  const double expected = 0.0 + 4.0 * (chunk * 250000.0 * 4.0 / 1e6);
  CHECK(pair_cost(alpha, beta, dm, 0, 2) == doctest::Approx(expected));
  CHECK(pair_cost(alpha, beta, dm, 0, 2) == doctest::Approx(10.435).epsilon(1e-4));
}

TEST_CASE("pair_cost: fitted intra link predicts the doubled chunk within 2%") {
  const LinkProfile prof = table1_profile();
  DispatchMatrix dm;
  dm.config = kMbConfig;
  dm.c = Matrix(4, 4, 0.0);
  dm.c.at(0, 1) = 64.0;  // double chunk on the intra link
  const double predicted = pair_cost(prof.alpha, prof.beta, dm, 0, 1);
  CHECK(std::abs(predicted - 1492.0) / 1492.0 < 0.02);
}

TEST_CASE("exchange_cost: report fields are consistent") {
  const LinkProfile prof = table1_profile();
  const CostReport report = exchange_cost(prof, uneven_pattern_quarters());
  CHECK(report.bottleneck_us == doctest::Approx(report.pair_cost_us.max_value()));
  double send_max = 0.0;
  for (double v : report.per_device_send_us) send_max = std::max(send_max, v);
  CHECK(send_max == doctest::Approx(report.bottleneck_us));
  CHECK(report.total_bytes == doctest::Approx(4 * 128.0 * 1e6));
  // every pair cost at least alpha
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(report.pair_cost_us.at(i, j) >= prof.alpha.at(i, j));
}

TEST_CASE("exchange_cost: even and optimized patterns on the RE-1 profile") {
  // beta_hat rows: diagonal 0.1, intra 1, inter 4; one token = 1 MB
  Matrix beta(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) beta.at(i, j) = i == j ? 0.1 : (i / 2 == j / 2 ? 1.0 : 4.0);
  Matrix alpha(4, 4, 0.0);

  DispatchConfig cfg{1, 120, 4, 4, 250000.0, 4.0};
  const CostReport even = exchange_cost(alpha, beta, even_pattern(cfg));
  CHECK(even.bottleneck_us == doctest::Approx(120.0));  // 4 us/MB * 30 MB

  // water-filled pattern: all link costs equal (certified optimal in the
  // optimizer tests)
  DispatchMatrix opt;
  opt.config = cfg;
  opt.c = Matrix(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int e = 0; e < 4; ++e) opt.c.at(i, e) = 120.0 / (11.5 * beta.at(i, e));
  const CostReport report = exchange_cost(alpha, beta, opt);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j)
      CHECK(report.pair_cost_us.at(i, j) == doctest::Approx(120.0 / 11.5));
  CHECK(report.bottleneck_us == doctest::Approx(10.4348).epsilon(1e-4));
}

TEST_CASE("exchange_cost: size-exchange round adds max alpha") {
  Matrix alpha(2, 2);
  alpha.at(0, 1) = 50.0;
  Matrix beta(2, 2, 1.0);
  DispatchMatrix dm{Matrix(2, 2, 1.0), {1, 2, 2, 2, 1e6, 1.0}};
  const CostReport r0 = exchange_cost(alpha, beta, dm, 0);
  const CostReport r1 = exchange_cost(alpha, beta, dm, 1);
  CHECK(r1.size_exchange_us == doctest::Approx(50.0));
  CHECK(r1.total_estimate_us == doctest::Approx(r0.bottleneck_us + 50.0));
}

TEST_CASE("even_pattern: row and column properties") {
  for (const auto& [k, S, N, P] : std::vector<std::array<int, 4>>{
           {1, 120, 4, 4}, {2, 6, 64, 8}, {2, 4, 8, 4}}) {
    DispatchConfig cfg{k, S, N, P, 16.0, 4.0};
    const DispatchMatrix dm = even_pattern(cfg);
    CHECK(dm.c.at(0, 0) == doctest::Approx(static_cast<double>(k) * S / N));
    const FeasibilityReport feas = check_constraints(dm.c, cfg);
    CHECK(feas.row_residual == doctest::Approx(0.0));
    CHECK(feas.col_residual == doctest::Approx(0.0));
  }
  CHECK(even_pattern({2, 6, 64, 8, 1, 1}).c.at(0, 0) == doctest::Approx(0.1875));
}

TEST_CASE("monotonicity: growing any entry never lowers any pair cost") {
  Rng rng(17);
  for (int iter = 0; iter < 30; ++iter) {
    const int p = 4;
    Matrix alpha(p, p), beta(p, p);
    for (int i = 0; i < p; ++i)
      for (int j = 0; j < p; ++j) {
        alpha.at(i, j) = rng.uniform(0.0, 10.0);
        beta.at(i, j) = rng.uniform(0.1, 10.0);
      }
    DispatchConfig cfg{1, 16, 4, 4, 1e6, 1.0};
    DispatchMatrix dm{Matrix(p, p, 0.0), cfg};
    for (double& v : dm.c.data()) v = rng.uniform(0.0, 5.0);
    const CostReport before = exchange_cost(alpha, beta, dm);
    DispatchMatrix bumped = dm;
    bumped.c.at(rng.uniform_int(0, p - 1), rng.uniform_int(0, p - 1)) += rng.uniform(0.1, 3.0);
    const CostReport after = exchange_cost(alpha, beta, bumped);
    for (size_t q = 0; q < before.pair_cost_us.data().size(); ++q)
      CHECK(after.pair_cost_us.data()[q] >= before.pair_cost_us.data()[q] - 1e-12);
    CHECK(after.bottleneck_us >= before.bottleneck_us - 1e-12);
  }
}

TEST_CASE("scale linearity with zero alpha") {
  Rng rng(18);
  Matrix alpha(4, 4, 0.0), beta(4, 4);
  for (double& v : beta.data()) v = rng.uniform(0.1, 8.0);
  DispatchMatrix dm{Matrix(4, 4, 0.0), {1, 16, 4, 4, 1e6, 1.0}};
  for (double& v : dm.c.data()) v = rng.uniform(0.0, 4.0);
  const CostReport base = exchange_cost(alpha, beta, dm);
  DispatchMatrix scaled = dm;
  for (double& v : scaled.c.data()) v *= 3.25;
  const CostReport after = exchange_cost(alpha, beta, scaled);
  for (size_t q = 0; q < base.pair_cost_us.data().size(); ++q)
    CHECK(after.pair_cost_us.data()[q] == doctest::Approx(3.25 * base.pair_cost_us.data()[q]));
}

TEST_CASE("fit_profile: two-point fits match the Table 1 pairs") {
  // intra link, even row then uneven row
  const FittedProfile intra = fit_profile({{0, 1, 32.0, 758.0}, {0, 1, 64.0, 1492.0}}, 2);
  CHECK(intra.alpha.at(0, 1) == doctest::Approx(24.0));
  CHECK(intra.beta.at(0, 1) == doctest::Approx(22.9375));

  // cross link 0 <-> first device of the far node
  const FittedProfile cross = fit_profile({{0, 1, 32.0, 5609.0}, {0, 1, 16.0, 2835.0}}, 2);
  CHECK(cross.alpha.at(0, 1) == doctest::Approx(61.0));
  CHECK(cross.beta.at(0, 1) == doctest::Approx(173.375));
}

TEST_CASE("fit_profile: exact recovery, origin fits, degenerate cases") {
  SUBCASE("noiseless recovery within 1e-9") {
    Rng rng(21);
    for (int iter = 0; iter < 20; ++iter) {
      const double a = rng.uniform(0.0, 100.0);
      const double b = rng.uniform(0.01, 50.0);
      std::vector<TransferSample> samples;
      for (double size : {1.0, 2.0, 7.5, 32.0}) samples.push_back({0, 1, size, a + b * size});
      const FittedProfile f = fit_profile(samples, 2);
      CHECK(std::abs(f.alpha.at(0, 1) - a) <= 1e-9 * std::max(1.0, a));
      CHECK(std::abs(f.beta.at(0, 1) - b) <= 1e-9 * b);
    }
  }
  SUBCASE("line through the origin") {
    const FittedProfile f = fit_profile({{1, 0, 2.0, 10.0}, {1, 0, 8.0, 40.0}}, 2);
    CHECK(f.alpha.at(1, 0) == doctest::Approx(0.0));
    CHECK(f.beta.at(1, 0) == doctest::Approx(5.0));
  }
  SUBCASE("single message size pins alpha to zero") {
    const FittedProfile f = fit_profile({{0, 1, 32.0, 758.0}}, 2);
    CHECK(f.alpha.at(0, 1) == 0.0);
    CHECK(f.beta.at(0, 1) == doctest::Approx(758.0 / 32.0));
  }
  SUBCASE("negative beta rejected") {
    CHECK_THROWS_AS(fit_profile({{0, 1, 1.0, 10.0}, {0, 1, 2.0, 1.0}}, 2), ValidationError);
  }
}
