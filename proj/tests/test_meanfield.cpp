#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>
#include <vector>

#include "imsa/meanfield.hpp"
#include "imsa/rng.hpp"
#include "oracles.hpp"

using namespace imsa;

namespace {

// Direct transcription of the population update, sharing no code with the
// library: its own win-probability series, its own triangular cdf, and the
// flow equations written out term by term.
double naive_grab_real(double k, int lambda_max) {
  double acc = 0.0;
  for (int lam = 1; lam <= lambda_max; ++lam)
    acc += std::pow(double(lambda_max - lam) / lambda_max, k - 1.0) / lambda_max;
  return acc;
}

double naive_diff_cdf(double w, double a) {
  if (w <= -2 * a) return 0.0;
  if (w >= 2 * a) return 1.0;
  if (w <= 0) return (2 * a + w) * (2 * a + w) / (8 * a * a);
  return 1.0 - (2 * a - w) * (2 * a - w) / (8 * a * a);
}

std::vector<std::vector<double>> naive_step(const std::vector<std::vector<double>>& x,
                                            const std::vector<double>& theta,
                                            const std::vector<double>& rate,
                                            const std::vector<double>& z,
                                            const std::vector<std::vector<std::uint8_t>>& comm,
                                            int lambda_max, double a) {
  const int kk = static_cast<int>(z.size());
  const int mm = static_cast<int>(theta.size());
  std::vector<double> u(mm);
  for (int m = 0; m < mm; ++m) {
    double mass = 0.0;
    for (int k = 0; k < kk; ++k) mass += z[k] * x[k][m];
    u[m] = theta[m] * rate[m] * naive_grab_real(std::max(1.0, mass), lambda_max);
  }
  std::vector<std::vector<double>> next(kk, std::vector<double>(mm, 0.0));
  for (int k = 0; k < kk; ++k) {
    double zc = 0.0;
    for (int b = 0; b < kk; ++b)
      if (comm[k][b]) zc += z[b];
    std::vector<double> y(mm, 0.0);
    for (int j = 0; j < mm; ++j) {
      for (int b = 0; b < kk; ++b)
        if (comm[k][b]) y[j] += z[b] * x[b][j];
      y[j] /= zc;
    }
    for (int i = 0; i < mm; ++i) {
      double stay = 1.0;
      for (int j = 0; j < mm; ++j) {
        if (j == i) continue;
        const double p = y[j] * naive_diff_cdf(u[j] - u[i], a);
        next[k][j] += x[k][i] * p;
        stay -= p;
      }
      next[k][i] += x[k][i] * stay;
    }
    double sum = 0.0;
    for (const double v : next[k]) sum += v;
    for (double& v : next[k]) v /= sum;
  }
  return next;
}

MeanFieldSpec reference_spec(double population = 150.0) {
  return MeanFieldSpec::single_cluster({2.0 / 3, 4.0 / 7, 5.0 / 9, 0.5, 0.8},
                                       {15, 70, 90, 40, 100}, population);
}

PopulationState random_state(int clusters, int channels, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.01, 1.0);
  PopulationState s;
  s.x.assign(clusters, std::vector<double>(channels));
  for (auto& row : s.x) {
    double sum = 0.0;
    for (double& v : row) sum += v = uni(rng);
    for (double& v : row) v /= sum;
  }
  return s;
}

}  // namespace

TEST_CASE("noise difference cdf matches the triangular closed form", "[meanfield]") {
  const auto q = NoiseDiffCdf::for_uniform(1.0);
  CHECK(q(0.0) == Catch::Approx(0.5).margin(1e-15));
  CHECK(q(1.0) == Catch::Approx(7.0 / 8).margin(1e-15));
  CHECK(q(-1.0) == Catch::Approx(1.0 / 8).margin(1e-15));
  CHECK(q(2.0) == 1.0);
  CHECK(q(-2.0) == 0.0);
  CHECK(q(35.0) == 1.0);

  const auto q4 = NoiseDiffCdf::for_uniform(4.0);
  CHECK(q4(0.0) == Catch::Approx(0.5).margin(1e-15));
  CHECK(q4(4.0) == Catch::Approx(7.0 / 8).margin(1e-15));
  CHECK(q4(8.0) == 1.0);
  double prev = -1.0;
  for (double w = -9.0; w <= 9.0; w += 0.25) {
    const double v = q4(w);
    CHECK(v >= prev);
    prev = v;
  }

  CHECK_THROWS_AS(NoiseDiffCdf::for_uniform(0.0), std::invalid_argument);
  CHECK_THROWS_AS(NoiseDiffCdf::for_uniform(-1.0), std::invalid_argument);
}

TEST_CASE("numeric convolution reproduces the uniform-noise cdf", "[meanfield]") {
  const double a = 4.0;
  const auto exact = NoiseDiffCdf::for_uniform(a);
  const auto numeric =
      NoiseDiffCdf::from_density([a](double) { return 1.0 / (2 * a); }, -a, a, 2049);
  for (double w = -2.5 * a; w <= 2.5 * a; w += 0.09 * a)
    CHECK(numeric(w) == Catch::Approx(exact(w)).margin(2e-4));
}

TEST_CASE("numeric convolution handles a non-uniform density", "[meanfield]") {
  // Tent density on (-1, 1): the difference is still symmetric around zero.
  const auto q =
      NoiseDiffCdf::from_density([](double w) { return 1.0 - std::abs(w); }, -1.0, 1.0);
  CHECK(q(0.0) == Catch::Approx(0.5).margin(1e-4));
  CHECK(q(-2.0) == 0.0);
  CHECK(q(2.0) == 1.0);
  for (double w = 0.1; w < 2.0; w += 0.2)
    CHECK(q(w) + q(-w) == Catch::Approx(1.0).margin(2e-4));
  CHECK(q(0.5) > q(0.25));
  CHECK_THROWS_AS(NoiseDiffCdf::from_density([](double) { return 1.0; }, 1.0, 1.0),
                  std::invalid_argument);
}

TEST_CASE("expected throughput applies the contention factor to channel mass", "[meanfield]") {
  const auto spec = reference_spec(150.0);
  const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));
  const GrabTable grab(spec.contention);

  auto s = PopulationState::uniform(1, 5);
  for (int m = 0; m < 5; ++m) {
    CHECK(model.channel_mass(s, m) == Catch::Approx(30.0));
    CHECK(model.expected_throughput(m, s) ==
          Catch::Approx(spec.theta[m] * spec.rate[m] * grab.at(30.0)).epsilon(1e-12));
  }

  // Less than one expected user on a channel counts as a lone user.
  s.x[0] = {1e-9, 0.25, 0.25, 0.25, 0.25 - 1e-9};
  CHECK(model.expected_throughput(0, s) ==
        Catch::Approx(spec.theta[0] * spec.rate[0]).epsilon(1e-12));
}

TEST_CASE("flow probabilities form stochastic rows", "[meanfield]") {
  const auto spec = reference_spec(150.0);
  const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));

  SECTION("nobody moves toward an empty channel") {
    PopulationState s;
    s.x = {{1.0, 0.0, 0.0, 0.0, 0.0}};
    for (int j = 1; j < 5; ++j) CHECK(model.flow_probability(0, j, 0, s) == 0.0);
    CHECK(model.flow_probability(0, 0, 0, s) == 1.0);
  }

  SECTION("identical channels split the undecided comparison evenly") {
    const auto pair = MeanFieldSpec::single_cluster({0.5, 0.5}, {40, 40}, 60);
    const MeanFieldModel even(pair, NoiseDiffCdf::for_uniform(1.0));
    PopulationState s;
    s.x = {{0.5, 0.5}};
    CHECK(even.flow_probability(0, 1, 0, s) == Catch::Approx(0.25).margin(1e-12));
    CHECK(even.flow_probability(0, 0, 0, s) == Catch::Approx(0.75).margin(1e-12));
  }

  SECTION("rows sum to one on random states") {
    auto rng = make_stream(2026, 61);
    for (int trial = 0; trial < 20; ++trial) {
      const auto s = random_state(1, 5, rng);
      for (int i = 0; i < 5; ++i) {
        double sum = 0.0;
        for (int j = 0; j < 5; ++j) {
          const double p = model.flow_probability(i, j, 0, s);
          CHECK(p >= 0.0);
          sum += p;
        }
        CHECK(sum == Catch::Approx(1.0).margin(1e-12));
      }
    }
  }
}

TEST_CASE("population update matches a term-by-term transcription", "[meanfield]") {
  auto rng = make_stream(2026, 62);

  SECTION("single cluster") {
    const auto spec = reference_spec(150.0);
    const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));
    for (int trial = 0; trial < 25; ++trial) {
      const auto s = random_state(1, 5, rng);
      const auto lib = model.step(s);
      const auto ref =
          naive_step(s.x, spec.theta, spec.rate, spec.z, spec.comm, 50, 4.0);
      for (int m = 0; m < 5; ++m) CHECK(lib.x[0][m] == Catch::Approx(ref[0][m]).margin(1e-12));
    }
  }

  SECTION("three clusters on a path") {
    MeanFieldSpec spec;
    spec.theta = {2.0 / 3, 4.0 / 7, 5.0 / 9, 0.5, 0.8};
    spec.rate = {15, 70, 90, 40, 100};
    spec.z = {40, 70, 40};
    spec.comm = {{1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
    spec.validate();
    const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));
    for (int trial = 0; trial < 25; ++trial) {
      const auto s = random_state(3, 5, rng);
      const auto lib = model.step(s);
      const auto ref =
          naive_step(s.x, spec.theta, spec.rate, spec.z, spec.comm, 50, 4.0);
      for (int k = 0; k < 3; ++k)
        for (int m = 0; m < 5; ++m)
          CHECK(lib.x[k][m] == Catch::Approx(ref[k][m]).margin(1e-12));
    }
  }
}

TEST_CASE("update preserves the simplex and fixes symmetric states", "[meanfield]") {
  SECTION("uniform shares over identical channels do not move") {
    const auto spec = MeanFieldSpec::single_cluster({0.5, 0.5, 0.5, 0.5}, {60, 60, 60, 60}, 120);
    const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(3.0));
    const auto s = PopulationState::uniform(1, 4);
    const auto next = model.step(s);
    for (int m = 0; m < 4; ++m) CHECK(next.x[0][m] == Catch::Approx(0.25).margin(1e-14));
  }

  SECTION("a monomorphic population stays put") {
    const auto spec = reference_spec(150.0);
    const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));
    PopulationState s;
    s.x = {{0.0, 0.0, 0.0, 0.0, 1.0}};
    const auto next = model.step(s);
    CHECK(next.x[0][4] == 1.0);
  }

  SECTION("long trajectories stay on the simplex") {
    const auto spec = reference_spec(150.0);
    const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));
    auto rng = make_stream(2026, 63);
    auto s = random_state(1, 5, rng);
    for (int t = 0; t < 200; ++t) {
      s = model.step(s);
      double sum = 0.0;
      for (const double v : s.x[0]) {
        CHECK(v >= 0.0);
        sum += v;
      }
      CHECK(sum == Catch::Approx(1.0).margin(1e-12));
    }
  }
}

TEST_CASE("each update descends the congestion potential", "[meanfield]") {
  MeanFieldSpec spec;
  spec.theta = {2.0 / 3, 4.0 / 7, 5.0 / 9, 0.5, 0.8};
  spec.rate = {15, 70, 90, 40, 100};
  spec.z = {40, 70, 40};
  spec.comm = {{1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
  spec.validate();
  const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));
  auto rng = make_stream(2026, 64);
  for (int trial = 0; trial < 400; ++trial) {
    const auto s = random_state(3, 5, rng);
    CHECK(model.lyapunov_descent(s) <= 1e-12);
  }
}

TEST_CASE("the dynamics settle where busy channels yield alike", "[meanfield]") {
  SECTION("single large cluster") {
    const auto spec = reference_spec(150.0);
    const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));
    const auto res = model.iterate_to_equilibrium(PopulationState::uniform(1, 5));
    REQUIRE(res.converged);
    CHECK(res.max_descent <= 1e-12);
    CHECK(res.utilized.size() == 5);
    CHECK(res.throughput_spread <= 1e-6 * 80.0);
    // Richer channels hold more users at rest.
    std::vector<double> mass(5);
    for (int m = 0; m < 5; ++m) mass[m] = model.channel_mass(res.state, m);
    CHECK(mass[4] > mass[2]);
    CHECK(mass[2] > mass[1]);
    CHECK(mass[1] > mass[3]);
    CHECK(mass[3] > mass[0]);
  }

  SECTION("connected clusters agree at rest") {
    MeanFieldSpec spec;
    spec.theta = {2.0 / 3, 4.0 / 7, 5.0 / 9, 0.5, 0.8};
    spec.rate = {15, 70, 90, 40, 100};
    spec.z = {50, 50, 50};
    spec.comm = {{1, 1, 0}, {1, 1, 1}, {0, 1, 1}};
    spec.validate();
    const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));
    auto rng = make_stream(2026, 65);
    const auto res = model.iterate_to_equilibrium(random_state(3, 5, rng));
    REQUIRE(res.converged);
    for (int k = 1; k < 3; ++k)
      for (int m = 0; m < 5; ++m)
        CHECK(res.state.x[k][m] == Catch::Approx(res.state.x[0][m]).margin(1e-6));
  }

  SECTION("observer sees every iteration") {
    const auto spec = reference_spec(60.0);
    const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));
    IterateOptions opts;
    long calls = 0, last = 0;
    opts.observer = [&](long it, const PopulationState&, double, double) {
      ++calls;
      last = it;
    };
    const auto res = model.iterate_to_equilibrium(PopulationState::uniform(1, 5), opts);
    CHECK(calls == res.iterations);
    CHECK(last == res.iterations);
  }

  SECTION("iteration cap reports no convergence") {
    const auto spec = reference_spec(150.0);
    const MeanFieldModel model(spec, NoiseDiffCdf::for_uniform(4.0));
    IterateOptions opts;
    opts.max_iters = 3;
    const auto res = model.iterate_to_equilibrium(PopulationState::uniform(1, 5), opts);
    CHECK_FALSE(res.converged);
    CHECK(res.iterations == 3);
  }
}

TEST_CASE("mean field spec validation rejects malformed inputs", "[meanfield]") {
  auto spec = reference_spec(150.0);
  CHECK_NOTHROW(spec.validate());

  auto bad = spec;
  bad.theta[2] = 1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = spec;
  bad.rate.pop_back();
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = spec;
  bad.z[0] = 0.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  bad = spec;
  bad.comm = {{0}};
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);

  MeanFieldSpec lop;
  lop.theta = {0.5, 0.5};
  lop.rate = {10, 20};
  lop.z = {30, 30};
  lop.comm = {{1, 1}, {0, 1}};
  CHECK_THROWS_AS(lop.validate(), std::invalid_argument);
}
