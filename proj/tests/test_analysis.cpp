#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "imsa/analysis.hpp"
#include "imsa/meanfield.hpp"
#include "imsa/rng.hpp"
#include "oracles.hpp"

using namespace imsa;

namespace {

// Every way to split n users over m channels, reported as counts.
template <class F>
void each_composition(int n, int m, std::vector<int>& cur, F&& fn) {
  if (static_cast<int>(cur.size()) == m - 1) {
    cur.push_back(n);
    fn(cur);
    cur.pop_back();
    return;
  }
  for (int k = 0; k <= n; ++k) {
    cur.push_back(k);
    each_composition(n - k, m, cur, fn);
    cur.pop_back();
  }
}

double composition_value(const std::vector<int>& counts, const std::vector<double>& theta,
                         const std::vector<double>& rate, int lambda_max) {
  double v = 0.0;
  for (std::size_t m = 0; m < counts.size(); ++m)
    if (counts[m] > 0)
      v += counts[m] * theta[m] * rate[m] * oracle::naive_grab(counts[m], lambda_max);
  return v;
}

std::vector<int> counts_to_allocation(const std::vector<int>& counts) {
  std::vector<int> alloc;
  for (std::size_t m = 0; m < counts.size(); ++m)
    alloc.insert(alloc.end(), counts[m], static_cast<int>(m));
  return alloc;
}

}  // namespace

TEST_CASE("jain index rewards equality", "[analysis]") {
  const std::vector<double> equal = {5, 5, 5};
  CHECK(jain_index(equal).value() == Catch::Approx(1.0));

  const std::vector<double> lone = {10, 0, 0, 0};
  CHECK(jain_index(lone).value() == Catch::Approx(0.25));

  CHECK_FALSE(jain_index(std::vector<double>{}).has_value());
  const std::vector<double> zeros = {0, 0};
  CHECK_FALSE(jain_index(zeros).has_value());

  const std::vector<double> negative = {1, -2};
  CHECK_THROWS_AS(jain_index(negative), std::invalid_argument);
}

TEST_CASE("largest remainder rounding lands on the total", "[analysis]") {
  const std::vector<double> a = {1.5, 1.5, 1.0};
  CHECK(largest_remainder_counts(a, 4) == std::vector<int>({2, 1, 1}));

  const std::vector<double> b = {0.3, 0.3, 0.4};
  CHECK(largest_remainder_counts(b, 1) == std::vector<int>({0, 0, 1}));

  const std::vector<double> c = {2.0, 3.0};
  CHECK(largest_remainder_counts(c, 5) == std::vector<int>({2, 3}));

  auto rng = make_stream(2026, 71);
  std::uniform_real_distribution<double> uni(0.0, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> w(5);
    double sum = 0.0;
    for (double& v : w) sum += v = uni(rng);
    const int total = static_cast<int>(std::ceil(sum));
    const auto counts = largest_remainder_counts(w, total);
    int placed = 0;
    for (std::size_t m = 0; m < w.size(); ++m) {
      CHECK(std::abs(counts[m] - w[m]) < 1.0 + 1e-9);
      placed += counts[m];
    }
    CHECK(placed == total);
  }
}

TEST_CASE("centralized optimum agrees with full enumeration", "[analysis]") {
  SECTION("one channel takes everyone") {
    const auto opt = centralized_optimum(std::vector<double>{0.6}, std::vector<double>{50.0}, 7);
    CHECK(opt.counts == std::vector<int>({7}));
    CHECK(opt.value == Catch::Approx(7 * 0.6 * 50 * oracle::naive_grab(7, 50)));
  }

  SECTION("two identical channels prefer the even split") {
    ContentionConfig two;
    two.lambda_max = 2;
    const auto opt = centralized_optimum(std::vector<double>{0.999999, 0.999999},
                                         std::vector<double>{1.0, 1.0}, 2, two);
    CHECK(opt.counts == std::vector<int>({1, 1}));
    CHECK(opt.value == Catch::Approx(2.0).epsilon(1e-5));
  }

  SECTION("random instances across the small grid") {
    auto rng = make_stream(2026, 72);
    std::uniform_real_distribution<double> th(0.2, 0.9), ra(5.0, 90.0);
    for (int n = 1; n <= 12; ++n)
      for (int m = 1; m <= 4; ++m) {
        std::vector<double> theta(m), rate(m);
        for (double& v : theta) v = th(rng);
        for (double& v : rate) v = ra(rng);
        const auto opt = centralized_optimum(theta, rate, n);
        double best = -1.0;
        std::vector<int> cur;
        each_composition(n, m, cur, [&](const std::vector<int>& counts) {
          best = std::max(best, composition_value(counts, theta, rate, 50));
        });
        CHECK(opt.value == Catch::Approx(best).epsilon(1e-9));
        CHECK(composition_value(opt.counts, theta, rate, 50) ==
              Catch::Approx(opt.value).epsilon(1e-9));
      }
  }
}

TEST_CASE("heterogeneous optimum reduces and verifies", "[analysis]") {
  SECTION("identical users match the counts-only solution") {
    const std::vector<double> theta = {2.0 / 3, 4.0 / 7, 5.0 / 9};
    const std::vector<double> rate = {15, 70, 90};
    const auto table = RateTable::homogeneous(theta, rate, 9);
    const auto het = heterogeneous_optimum(table);
    REQUIRE(het.exact);
    const auto hom = centralized_optimum(theta, rate, 9);
    CHECK(het.value == Catch::Approx(hom.value).epsilon(1e-12));
    std::vector<int> counts(3, 0);
    for (const int c : het.assignment) ++counts[c];
    CHECK(counts == hom.counts);
  }

  SECTION("specialists get their own channels") {
    RateTable t;
    t.theta = {0.5, 0.5};
    t.rate = {{10.0, 0.0}, {0.0, 10.0}};
    const auto opt = heterogeneous_optimum(t);
    REQUIRE(opt.exact);
    CHECK(opt.assignment == std::vector<int>({0, 1}));
  }

  SECTION("local search finds the exhaustive value at N=8") {
    auto rng = make_stream(2026, 73);
    std::uniform_real_distribution<double> th(0.3, 0.8), ra(5.0, 50.0);
    for (int trial = 0; trial < 10; ++trial) {
      RateTable t;
      t.theta = {th(rng), th(rng), th(rng)};
      t.rate.assign(8, std::vector<double>(3));
      for (auto& row : t.rate)
        for (double& v : row) v = ra(rng);
      const auto exact = heterogeneous_optimum(t);
      REQUIRE(exact.exact);
      OptimumOptions opts;
      opts.exhaustive_limit = 0;
      opts.restarts = 40;
      opts.seed = 1000 + trial;
      const auto local = heterogeneous_optimum(t, opts);
      CHECK_FALSE(local.exact);
      CHECK(local.value == Catch::Approx(exact.value).epsilon(1e-9));
    }
  }
}

TEST_CASE("equilibrium check follows the visible-channel rule", "[analysis]") {
  ContentionConfig cfg;
  const std::vector<double> theta = {0.5, 0.5};
  const std::vector<double> rate = {20, 12};

  SECTION("no edges means nothing is visible") {
    const auto t = RateTable::homogeneous(theta, rate, 2);
    SocialGraph g(2);
    const std::vector<int> alloc = {0, 1};
    const auto rep = check_imitation_equilibrium(alloc, g, t, 0.0);
    CHECK(rep.passes);
    CHECK(rep.visible[0].empty());
    CHECK(rep.residual[0] == 0.0);
  }

  SECTION("equal throughputs on a shared channel pass") {
    const auto t = RateTable::homogeneous(theta, rate, 2);
    auto g = make_complete(2);
    const std::vector<int> alloc = {0, 0};
    const auto rep = check_imitation_equilibrium(alloc, g, t, 0.0);
    CHECK(rep.passes);
    CHECK(rep.visible[0] == std::vector<int>({0}));
  }

  SECTION("a visibly better channel fails the check") {
    // User 0 sits where it earns 3; its neighbor's channel would pay 5 at the
    // standing occupancy.
    RateTable t;
    t.theta = {0.5, 0.5};
    t.rate = {{6.0, 10.0}, {6.0, 10.0}};
    auto g = make_complete(2);
    const std::vector<int> alloc = {0, 1};
    const auto rep = check_imitation_equilibrium(alloc, g, t, 0.0);
    CHECK_FALSE(rep.passes);
    CHECK(rep.own_value[0] == Catch::Approx(3.0));
    CHECK(rep.residual[0] == Catch::Approx(2.0));
    CHECK(rep.residual[1] < 0.0);
    CHECK(rep.max_residual() == Catch::Approx(2.0));

    const auto loose = check_imitation_equilibrium(alloc, g, t, 2.5);
    CHECK(loose.passes);
  }
}

TEST_CASE("price of imitation and its bound", "[analysis]") {
  CHECK(price_of_imitation(10.0, 10.0).value() == Catch::Approx(1.0));
  CHECK_FALSE(price_of_imitation(10.0, 0.0).has_value());

  ContentionConfig two;
  two.lambda_max = 2;
  CHECK(poi_lower_bound(4, 2, 2, two) == Catch::Approx(0.5));

  // Homogeneous instance: deterministic-dynamics equilibrium value against
  // the exact counts optimum.
  ContentionConfig eight;
  eight.lambda_max = 8;
  const std::vector<double> theta = {0.6, 0.6, 0.6};
  const std::vector<double> rate = {50, 50, 50};
  const auto spec = MeanFieldSpec::single_cluster(theta, rate, 12, eight);
  const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(1.5));
  const auto res = model.iterate_to_equilibrium(PopulationState::uniform(1, 3));
  REQUIRE(res.converged);
  double eq_value = 0.0;
  for (int m = 0; m < 3; ++m)
    eq_value += model.channel_mass(res.state, m) * model.expected_throughput(m, res.state);
  const auto opt = centralized_optimum(theta, rate, 12, eight);
  const double poi = price_of_imitation(eq_value, opt.value).value();
  CHECK(poi <= 1.0 + 1e-12);
  CHECK(poi >= poi_lower_bound(12, static_cast<int>(res.utilized.size()), 3, eight));
}

TEST_CASE("equal-throughput allocations maximize the jain index", "[analysis]") {
  const std::vector<double> theta = {0.55, 0.55, 0.55};
  const std::vector<double> rate = {40, 40, 40};
  const auto table = RateTable::homogeneous(theta, rate, 6);
  double best = 0.0;
  std::vector<int> cur;
  each_composition(6, 3, cur, [&](const std::vector<int>& counts) {
    const auto u = allocation_throughputs(table, counts_to_allocation(counts));
    const double j = jain_index(u).value();
    best = std::max(best, j);
    double lo = u[0], hi = u[0];
    for (const double v : u) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (hi - lo < 1e-12)
      CHECK(j == Catch::Approx(1.0));
    else
      CHECK(j < 1.0 - 1e-12);
  });
  CHECK(best == Catch::Approx(1.0));
}

TEST_CASE("rounded deterministic equilibria pass the discrete check", "[analysis]") {
  const std::vector<double> theta = {2.0 / 3, 4.0 / 7, 5.0 / 9, 0.5, 0.8};
  const std::vector<double> rate = {15, 70, 90, 40, 100};
  const GrabTable grab{ContentionConfig{}};

  // One-user rounding moves a channel's value by at most this much.
  const auto rounding_eps = [&](const std::vector<int>& occupancy) {
    double eps = 0.0;
    for (std::size_t m = 0; m < occupancy.size(); ++m)
      if (occupancy[m] > 0)
        eps = std::max(eps, theta[m] * rate[m] *
                                (grab(std::max(1, occupancy[m] - 1)) - grab(occupancy[m] + 1)));
    return eps;
  };

  SECTION("single cluster of 150") {
    const auto spec = MeanFieldSpec::single_cluster(theta, rate, 150);
    const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));
    const auto res = model.iterate_to_equilibrium(PopulationState::uniform(1, 5));
    REQUIRE(res.converged);
    std::vector<double> load(5);
    for (int m = 0; m < 5; ++m) load[m] = 150.0 * res.state.x[0][m];
    const auto counts = largest_remainder_counts(load, 150);
    const auto alloc = counts_to_allocation(counts);
    const auto table = RateTable::homogeneous(theta, rate, 150);
    const auto rep =
        check_imitation_equilibrium(alloc, make_complete(150), table, rounding_eps(counts));
    CHECK(rep.passes);
  }

  SECTION("three clusters on a path") {
    MeanFieldSpec spec;
    spec.theta = theta;
    spec.rate = rate;
    spec.z = {50, 50, 50};
    spec.comm = {{1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
    spec.validate();
    const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));
    const auto res = model.iterate_to_equilibrium(PopulationState::uniform(3, 5));
    REQUIRE(res.converged);

    std::vector<int> alloc;
    std::vector<int> occupancy(5, 0);
    for (int k = 0; k < 3; ++k) {
      std::vector<double> load(5);
      for (int m = 0; m < 5; ++m) load[m] = 50.0 * res.state.x[k][m];
      const auto counts = largest_remainder_counts(load, 50);
      for (int m = 0; m < 5; ++m) occupancy[m] += counts[m];
      const auto part = counts_to_allocation(counts);
      alloc.insert(alloc.end(), part.begin(), part.end());
    }
    const auto graph = make_cluster_topology({50, 50, 50}, {{0, 1}, {1, 2}});
    const auto table = RateTable::homogeneous(theta, rate, 150);
    const auto rep =
        check_imitation_equilibrium(alloc, graph, table, 2.0 * rounding_eps(occupancy));
    CHECK(rep.passes);
  }
}

TEST_CASE("metrics reports aggregate an allocation's outcome numbers", "[analysis]") {
  // Two channels with products 10 and 8, four users split evenly.
  const auto t = RateTable::homogeneous({0.5, 0.8}, {20, 10}, 4);
  const std::vector<int> alloc = {0, 0, 1, 1};
  const double g2 = oracle::naive_grab(2, 50);
  const auto opt = centralized_optimum(t.theta, t.rate[0], 4, t.contention);
  const auto r = make_metrics(t, alloc, opt.value);

  REQUIRE(r.user_throughput.size() == 4);
  CHECK(r.user_throughput[0] == Catch::Approx(10.0 * g2));
  CHECK(r.user_throughput[3] == Catch::Approx(8.0 * g2));
  CHECK(r.system_throughput == Catch::Approx(2 * 10.0 * g2 + 2 * 8.0 * g2));
  const double expect_jain = r.system_throughput * r.system_throughput /
                             (4 * (2 * 100 * g2 * g2 + 2 * 64 * g2 * g2));
  REQUIRE(r.jain.has_value());
  CHECK(*r.jain == Catch::Approx(expect_jain));
  CHECK(r.utilized == 2);
  REQUIRE(r.poi.has_value());
  CHECK(*r.poi <= 1.0);
  CHECK(*r.poi >= r.poi_bound);
  CHECK(r.poi_bound == Catch::Approx(4.0 * grab_probability(2.0) / 2.0));

  // Without a reference value there is no efficiency ratio.
  CHECK_FALSE(make_metrics(t, alloc).poi.has_value());
}
