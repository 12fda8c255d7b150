#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <utility>
#include <vector>

#include "imsa/contention.hpp"

namespace imsa {

// Population shares: x[k][m] is the fraction of group k's users sitting on
// channel m.  Rows live on the probability simplex.
struct PopulationState {
  std::vector<std::vector<double>> x;

  static PopulationState uniform(int clusters, int channels) {
    if (clusters < 1 || channels < 1)
      throw std::invalid_argument("population: need at least one cluster and channel");
    PopulationState s;
    s.x.assign(clusters, std::vector<double>(channels, 1.0 / channels));
    return s;
  }

  int clusters() const { return static_cast<int>(x.size()); }
  int channels() const { return x.empty() ? 0 : static_cast<int>(x[0].size()); }

  void validate(double tol = 1e-9) const {
    if (x.empty() || x[0].empty()) throw std::invalid_argument("population: empty state");
    for (const auto& row : x) {
      if (row.size() != x[0].size()) throw std::invalid_argument("population: ragged state");
      double sum = 0.0;
      for (const double v : row) {
        if (v < -tol) throw std::invalid_argument("population: negative share");
        sum += v;
      }
      if (std::abs(sum - 1.0) > tol)
        throw std::invalid_argument("population: cluster shares must sum to 1");
    }
  }

  double max_diff(const PopulationState& o) const {
    double d = 0.0;
    for (int k = 0; k < clusters(); ++k)
      for (int m = 0; m < channels(); ++m) d = std::max(d, std::abs(x[k][m] - o.x[k][m]));
    return d;
  }
};

// CDF of the difference of two independent estimation-noise draws.  Uniform
// noise on (-a, a) has the closed triangular form; any other density goes
// through numeric convolution onto a grid.
class NoiseDiffCdf {
 public:
  static NoiseDiffCdf for_uniform(double half_width) {
    if (!(half_width > 0)) throw std::invalid_argument("noise cdf: half width must be positive");
    NoiseDiffCdf q;
    q.a_ = half_width;
    q.span_ = 2.0 * half_width;
    return q;
  }

  // density f supported on (lower, upper); the difference then lives on
  // (lower - upper, upper - lower).
  template <class F>
  static NoiseDiffCdf from_density(F&& density, double lower, double upper,
                                   int grid_points = 2049) {
    if (!(lower < upper)) throw std::invalid_argument("noise cdf: empty support");
    if (grid_points < 16) throw std::invalid_argument("noise cdf: grid too coarse");
    NoiseDiffCdf q;
    q.span_ = upper - lower;
    const int n = grid_points;
    const double dw = 2.0 * q.span_ / (n - 1);
    const double dv = (upper - lower) / (n - 1);
    std::vector<double> pdf(n, 0.0);
    for (int i = 0; i < n; ++i) {
      const double w = -q.span_ + i * dw;
      double acc = 0.0;
      for (int j = 0; j < n; ++j) {
        const double v = lower + j * dv;
        const double other = w + v;
        if (other <= lower || other >= upper) continue;
        const double f = density(v) * density(other);
        acc += (j == 0 || j == n - 1) ? 0.5 * f : f;
      }
      pdf[i] = acc * dv;
    }
    q.table_.assign(n, 0.0);
    for (int i = 1; i < n; ++i)
      q.table_[i] = q.table_[i - 1] + 0.5 * (pdf[i - 1] + pdf[i]) * dw;
    const double total = q.table_.back();
    if (!(total > 0)) throw std::invalid_argument("noise cdf: density integrates to zero");
    for (double& v : q.table_) v /= total;
    return q;
  }

  double operator()(double w) const {
    if (w <= -span_) return 0.0;
    if (w >= span_) return 1.0;
    if (table_.empty()) {
      // Triangular density on (-2a, 2a).
      const double t = 2.0 * a_;
      if (w <= 0.0) {
        const double u = t + w;
        return u * u / (2.0 * t * t);
      }
      const double u = t - w;
      return 1.0 - u * u / (2.0 * t * t);
    }
    const int n = static_cast<int>(table_.size());
    const double pos = (w + span_) / (2.0 * span_) * (n - 1);
    const int i = std::min(n - 2, static_cast<int>(pos));
    const double frac = pos - i;
    return table_[i] * (1.0 - frac) + table_[i + 1] * frac;
  }

  double half_span() const { return span_; }

 private:
  NoiseDiffCdf() = default;
  double a_ = 0.0;
  double span_ = 0.0;
  std::vector<double> table_;
};

// Channel and population parameters driving the deterministic dynamics.
struct MeanFieldSpec {
  std::vector<double> theta;                    // idle probabilities
  std::vector<double> rate;                     // mean data rates B_m (Mbps)
  std::vector<double> z;                        // users per cluster
  std::vector<std::vector<std::uint8_t>> comm;  // cluster communication, diagonal 1
  ContentionConfig contention;

  int channels() const { return static_cast<int>(theta.size()); }
  int clusters() const { return static_cast<int>(z.size()); }

  static MeanFieldSpec single_cluster(std::vector<double> theta, std::vector<double> rate,
                                      double population, ContentionConfig cfg = {}) {
    MeanFieldSpec s;
    s.theta = std::move(theta);
    s.rate = std::move(rate);
    s.z = {population};
    s.comm = {{1}};
    s.contention = cfg;
    s.validate();
    return s;
  }

  void validate() const {
    contention.validate();
    if (theta.empty() || theta.size() != rate.size())
      throw std::invalid_argument("meanfield: need matching theta and rate lists");
    for (const double t : theta)
      if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("meanfield: theta must lie in (0,1)");
    for (const double b : rate)
      if (!(b > 0.0)) throw std::invalid_argument("meanfield: rates must be positive");
    if (z.empty()) throw std::invalid_argument("meanfield: need at least one cluster");
    for (const double v : z)
      if (!(v > 0.0)) throw std::invalid_argument("meanfield: cluster sizes must be positive");
    if (comm.size() != z.size())
      throw std::invalid_argument("meanfield: comm matrix size mismatch");
    for (std::size_t k = 0; k < comm.size(); ++k) {
      if (comm[k].size() != z.size())
        throw std::invalid_argument("meanfield: comm matrix size mismatch");
      if (!comm[k][k]) throw std::invalid_argument("meanfield: comm diagonal must be set");
      for (std::size_t h = 0; h < comm.size(); ++h)
        if (comm[k][h] != comm[h][k])
          throw std::invalid_argument("meanfield: comm matrix must be symmetric");
    }
  }

  double max_theta_rate() const {
    double best = 0.0;
    for (int m = 0; m < channels(); ++m) best = std::max(best, theta[m] * rate[m]);
    return best;
  }
};

struct IterateOptions {
  double tol = 1e-10;            // max-norm state change per step
  double throughput_tol = -1.0;  // spread over utilized channels; <0 -> 1e-6 * max theta*B
  long max_iters = 1000000;
  double mass_floor = 1e-6;      // utilized means mass above this fraction of the population
  std::function<void(long iter, const PopulationState&, double delta, double descent)> observer;
};

struct EquilibriumResult {
  PopulationState state;
  bool converged = false;
  long iterations = 0;
  double final_delta = 0.0;
  double throughput_spread = 0.0;
  double max_descent = -std::numeric_limits<double>::infinity();
  std::vector<int> utilized;
};

// Deterministic population dynamics over the cluster structure: each period
// a user fraction proportional to the neighborhood share on a better channel
// migrates there, weighted by the probability that the noisy comparison
// favors the move.
class MeanFieldModel {
 public:
  MeanFieldModel(MeanFieldSpec spec, NoiseDiffCdf q)
      : spec_(std::move(spec)), q_(std::move(q)), grab_(spec_.contention, 64) {
    spec_.validate();
    const int k = spec_.clusters();
    group_.resize(k);
    group_pop_.resize(k);
    for (int a = 0; a < k; ++a) {
      double zc = 0.0;
      for (int b = 0; b < k; ++b)
        if (spec_.comm[a][b]) {
          group_[a].push_back(b);
          zc += spec_.z[b];
        }
      group_pop_[a] = zc;
    }
    total_pop_ = 0.0;
    for (const double v : spec_.z) total_pop_ += v;
  }

  const MeanFieldSpec& spec() const { return spec_; }
  const NoiseDiffCdf& noise_cdf() const { return q_; }

  double channel_mass(const PopulationState& s, int m) const {
    double n = 0.0;
    for (int k = 0; k < spec_.clusters(); ++k) n += spec_.z[k] * s.x[k][m];
    return n;
  }

  // U(m, X) = theta_m * B_m * g(mass on m), with the win probability clamped
  // at the single-user value when less than one user sits on the channel.
  double expected_throughput(int m, const PopulationState& s) const {
    const double n = channel_mass(s, m);
    return spec_.theta[m] * spec_.rate[m] * grab_.at(std::max(1.0, n));
  }

  // Per-period probability that a cluster-k user moves from channel i to j.
  double flow_probability(int i, int j, int k, const PopulationState& s) const {
    check_state(s);
    if (i == j) {
      double out = 0.0;
      for (int m = 0; m < spec_.channels(); ++m)
        if (m != i) out += flow_probability(i, m, k, s);
      return 1.0 - out;
    }
    const double ui = expected_throughput(i, s);
    const double uj = expected_throughput(j, s);
    return neighborhood_share(s, k, j) * q_(uj - ui);
  }

  PopulationState step(const PopulationState& s) const {
    check_state(s);
    return step_impl(s, throughputs(s));
  }

  // Directional derivative of the congestion potential along one step;
  // nonpositive whenever the dynamics descend it.
  double lyapunov_descent(const PopulationState& s) const {
    check_state(s);
    const auto u = throughputs(s);
    return descent_impl(s, step_impl(s, u), u);
  }

  EquilibriumResult iterate_to_equilibrium(PopulationState s, IterateOptions opts = {}) const {
    check_state(s);
    s.validate();
    const double ttol =
        opts.throughput_tol < 0 ? 1e-6 * spec_.max_theta_rate() : opts.throughput_tol;
    EquilibriumResult out;
    for (long it = 1; it <= opts.max_iters; ++it) {
      const auto u = throughputs(s);
      PopulationState next = step_impl(s, u);
      const double dd = descent_impl(s, next, u);
      const double delta = next.max_diff(s);
      out.max_descent = std::max(out.max_descent, dd);
      out.iterations = it;
      out.final_delta = delta;
      s = std::move(next);
      if (opts.observer) opts.observer(it, s, delta, dd);
      if (delta <= opts.tol) {
        const auto [spread, utilized] = spread_impl(s, opts.mass_floor);
        if (spread <= ttol) break;
      }
    }
    auto [spread, utilized] = spread_impl(s, opts.mass_floor);
    out.throughput_spread = spread;
    out.utilized = std::move(utilized);
    out.converged = out.final_delta <= opts.tol && spread <= ttol;
    out.state = std::move(s);
    return out;
  }

 private:
  void check_state(const PopulationState& s) const {
    if (s.clusters() != spec_.clusters() || s.channels() != spec_.channels())
      throw std::invalid_argument("meanfield: state shape mismatch");
  }

  std::vector<double> throughputs(const PopulationState& s) const {
    std::vector<double> u(spec_.channels());
    for (int m = 0; m < spec_.channels(); ++m) u[m] = expected_throughput(m, s);
    return u;
  }

  // Share of cluster k's communication neighborhood sitting on channel j.
  double neighborhood_share(const PopulationState& s, int k, int j) const {
    double acc = 0.0;
    for (const int b : group_[k]) acc += spec_.z[b] * s.x[b][j];
    return acc / group_pop_[k];
  }

  PopulationState step_impl(const PopulationState& s, const std::vector<double>& u) const {
    const int kk = spec_.clusters();
    const int mm = spec_.channels();
    // Noisy-comparison win probabilities are cluster independent.
    std::vector<double> win(static_cast<std::size_t>(mm) * mm);
    for (int i = 0; i < mm; ++i)
      for (int j = 0; j < mm; ++j) win[i * mm + j] = q_(u[j] - u[i]);
    PopulationState next;
    next.x.assign(kk, std::vector<double>(mm, 0.0));
    std::vector<double> share(mm);
    for (int k = 0; k < kk; ++k) {
      for (int j = 0; j < mm; ++j) share[j] = neighborhood_share(s, k, j);
      auto& row = next.x[k];
      for (int i = 0; i < mm; ++i) {
        const double xi = s.x[k][i];
        double out = 0.0;
        for (int j = 0; j < mm; ++j) {
          if (j == i) continue;
          const double p = share[j] * win[i * mm + j];
          out += p;
          row[j] += xi * p;
        }
        row[i] += xi * std::max(0.0, 1.0 - out);
      }
      double sum = 0.0;
      for (const double v : row) sum += v;
      for (double& v : row) v /= sum;
    }
    return next;
  }

  // sum_k z_k sum_m -U(m) * (next - s); centering U by its mean removes the
  // cancellation error of the zero-sum rows without changing the value.
  double descent_impl(const PopulationState& s, const PopulationState& next,
                      const std::vector<double>& u) const {
    double ubar = 0.0;
    for (const double v : u) ubar += v;
    ubar /= u.size();
    double dd = 0.0;
    for (int k = 0; k < spec_.clusters(); ++k) {
      double cluster = 0.0;
      for (int m = 0; m < spec_.channels(); ++m)
        cluster += (u[m] - ubar) * (next.x[k][m] - s.x[k][m]);
      dd -= spec_.z[k] * cluster;
    }
    return dd;
  }

  std::pair<double, std::vector<int>> spread_impl(const PopulationState& s,
                                                  double mass_floor) const {
    std::vector<int> utilized;
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
    for (int m = 0; m < spec_.channels(); ++m) {
      if (channel_mass(s, m) > mass_floor * total_pop_) {
        utilized.push_back(m);
        const double u = expected_throughput(m, s);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
      }
    }
    return {utilized.empty() ? 0.0 : hi - lo, utilized};
  }

  MeanFieldSpec spec_;
  NoiseDiffCdf q_;
  GrabTable grab_;
  std::vector<std::vector<int>> group_;  // communicating clusters, self included
  std::vector<double> group_pop_;
  double total_pop_ = 0.0;
};

}  // namespace imsa
