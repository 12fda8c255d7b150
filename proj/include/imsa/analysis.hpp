#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "imsa/channel.hpp"
#include "imsa/contention.hpp"
#include "imsa/rng.hpp"
#include "imsa/social_graph.hpp"

namespace imsa {

// Per-user expected data rates on each channel, with the shared idle
// probabilities: everything needed to price an integer allocation.
struct RateTable {
  std::vector<double> theta;               // per channel
  std::vector<std::vector<double>> rate;   // [user][channel], Mbps; 0 = channel useless to user
  ContentionConfig contention;

  int channels() const { return static_cast<int>(theta.size()); }
  int users() const { return static_cast<int>(rate.size()); }

  static RateTable homogeneous(std::vector<double> theta, const std::vector<double>& rate,
                               int n_users, ContentionConfig cfg = {}) {
    RateTable t;
    t.theta = std::move(theta);
    t.rate.assign(n_users, rate);
    t.contention = cfg;
    t.validate();
    return t;
  }

  void validate() const {
    contention.validate();
    if (theta.empty()) throw std::invalid_argument("rates: need at least one channel");
    for (const double v : theta)
      if (!(v > 0.0 && v < 1.0)) throw std::invalid_argument("rates: theta must lie in (0,1)");
    if (rate.empty()) throw std::invalid_argument("rates: need at least one user");
    for (const auto& row : rate) {
      if (row.size() != theta.size())
        throw std::invalid_argument("rates: user row length must match channel count");
      for (const double v : row)
        if (v < 0.0) throw std::invalid_argument("rates: rates must be nonnegative");
    }
  }
};

// True expected values for a simulated fleet: stationary idle probabilities
// and closed-form mean rates per user and channel.
inline RateTable make_rate_table(const std::vector<ChannelSpec>& channels,
                                 const std::vector<UserRadioSpec>& users,
                                 ContentionConfig cfg = {}) {
  RateTable t;
  t.contention = cfg;
  for (const auto& c : channels) t.theta.push_back(stationary_idle_prob(c));
  t.rate.assign(users.size(), std::vector<double>(channels.size()));
  for (std::size_t n = 0; n < users.size(); ++n)
    for (std::size_t m = 0; m < channels.size(); ++m)
      t.rate[n][m] =
          mean_rate(channels[m], users[n].tx_power_mw, user_mean_gain(channels[m], users[n]));
  t.validate();
  return t;
}

// (sum v)^2 / (N sum v^2); 1 iff all values are equal.  Undefined when every
// value is zero.
inline std::optional<double> jain_index(std::span<const double> values) {
  if (values.empty()) return std::nullopt;
  double sum = 0.0, sq = 0.0;
  for (const double v : values) {
    if (v < 0.0) throw std::invalid_argument("jain: values must be nonnegative");
    sum += v;
    sq += v * v;
  }
  if (sq == 0.0) return std::nullopt;
  return sum * sum / (double(values.size()) * sq);
}

// Throughput of each user under an integer allocation, priced at the
// allocation's own occupancy.
inline std::vector<double> allocation_throughputs(const RateTable& t,
                                                  std::span<const int> allocation) {
  t.validate();
  if (allocation.size() != static_cast<std::size_t>(t.users()))
    throw std::invalid_argument("allocation: one channel per user required");
  std::vector<int> count(t.channels(), 0);
  for (const int c : allocation) {
    if (c < 0 || c >= t.channels()) throw std::invalid_argument("allocation: channel out of range");
    ++count[c];
  }
  const GrabTable grab(t.contention, std::max(64, t.users()));
  std::vector<double> u(t.users());
  for (int n = 0; n < t.users(); ++n) {
    const int c = allocation[n];
    u[n] = t.theta[c] * t.rate[n][c] * grab(count[c]);
  }
  return u;
}

struct EquilibriumReport {
  std::vector<int> allocation;
  std::vector<int> occupancy;
  std::vector<std::vector<int>> visible;  // channels held by each user's neighbors
  std::vector<double> own_value;
  std::vector<double> residual;  // best visible alternative minus own; <= epsilon passes
  double epsilon = 0.0;
  bool passes = false;

  double max_residual() const {
    double r = -std::numeric_limits<double>::infinity();
    for (const double v : residual) r = std::max(r, v);
    return r;
  }
};

// No user may see a strictly better channel (beyond epsilon) among those its
// neighbors currently hold, priced at the standing occupancy.
inline EquilibriumReport check_imitation_equilibrium(std::span<const int> allocation,
                                                     const SocialGraph& graph,
                                                     const RateTable& t, double epsilon) {
  t.validate();
  if (epsilon < 0) throw std::invalid_argument("equilibrium: epsilon must be nonnegative");
  if (graph.size() != t.users())
    throw std::invalid_argument("equilibrium: graph size must match the user count");
  EquilibriumReport rep;
  rep.allocation.assign(allocation.begin(), allocation.end());
  rep.epsilon = epsilon;
  rep.own_value = allocation_throughputs(t, allocation);
  rep.occupancy.assign(t.channels(), 0);
  for (const int c : allocation) ++rep.occupancy[c];

  const GrabTable grab(t.contention, std::max(64, t.users()));
  rep.visible.resize(t.users());
  rep.residual.assign(t.users(), 0.0);
  rep.passes = true;
  for (int n = 0; n < t.users(); ++n) {
    std::vector<int> seen;
    for (const int peer : graph.neighborhood(n)) seen.push_back(allocation[peer]);
    std::sort(seen.begin(), seen.end());
    seen.erase(std::unique(seen.begin(), seen.end()), seen.end());
    rep.visible[n] = seen;
    double best = -std::numeric_limits<double>::infinity();
    for (const int m : seen)
      if (m != allocation[n]) best = std::max(best, t.theta[m] * t.rate[n][m] * grab(rep.occupancy[m]));
    // A user with no visible alternative is satisfied by definition.
    rep.residual[n] = std::isinf(best) ? 0.0 : best - rep.own_value[n];
    if (rep.residual[n] > epsilon) rep.passes = false;
  }
  return rep;
}

struct AllocationOptimum {
  std::vector<int> counts;
  double value = 0.0;
};

// Exact maximizer of sum_m k_m theta_m B_m g(k_m) over integer compositions
// of n_users, by dynamic programming over (channel, users placed).
inline AllocationOptimum centralized_optimum(std::span<const double> theta,
                                             std::span<const double> rate, int n_users,
                                             ContentionConfig cfg = {}) {
  if (theta.empty() || theta.size() != rate.size())
    throw std::invalid_argument("optimum: need matching theta and rate lists");
  if (n_users < 1) throw std::invalid_argument("optimum: need at least one user");
  const int mm = static_cast<int>(theta.size());
  const GrabTable grab(cfg, std::max(64, n_users));
  std::vector<double> yield(n_users + 1, 0.0);
  for (int k = 1; k <= n_users; ++k) yield[k] = double(k) * grab(k);

  constexpr double kUnset = -std::numeric_limits<double>::infinity();
  std::vector<double> best(n_users + 1, kUnset);
  best[0] = 0.0;
  std::vector<std::vector<int>> take(mm, std::vector<int>(n_users + 1, 0));
  for (int m = 0; m < mm; ++m) {
    std::vector<double> next(n_users + 1, kUnset);
    for (int used = 0; used <= n_users; ++used) {
      if (best[used] == kUnset) continue;
      for (int k = 0; used + k <= n_users; ++k) {
        const double v = best[used] + theta[m] * rate[m] * yield[k];
        if (v > next[used + k]) {
          next[used + k] = v;
          take[m][used + k] = k;
        }
      }
    }
    best = std::move(next);
  }

  AllocationOptimum out;
  out.value = best[n_users];
  out.counts.assign(mm, 0);
  int left = n_users;
  for (int m = mm - 1; m >= 0; --m) {
    out.counts[m] = take[m][left];
    left -= out.counts[m];
  }
  return out;
}

struct AssignmentOptimum {
  std::vector<int> assignment;
  double value = 0.0;
  bool exact = false;
};

struct OptimumOptions {
  int exhaustive_limit = 10;  // full enumeration up to this many users
  int restarts = 20;          // local-search restarts beyond it
  std::uint64_t seed = 0;
};

namespace detail {

inline double assignment_value(const RateTable& t, const GrabTable& grab,
                               std::span<const int> assignment) {
  std::vector<int> count(t.channels(), 0);
  std::vector<double> weight(t.channels(), 0.0);
  for (int n = 0; n < t.users(); ++n) {
    ++count[assignment[n]];
    weight[assignment[n]] += t.rate[n][assignment[n]];
  }
  double v = 0.0;
  for (int m = 0; m < t.channels(); ++m)
    if (count[m] > 0) v += t.theta[m] * weight[m] * grab(count[m]);
  return v;
}

inline void exhaustive_assignments(const RateTable& t, const GrabTable& grab, int user,
                                   std::vector<int>& current, std::vector<int>& count,
                                   std::vector<double>& weight, AssignmentOptimum& best) {
  if (user == t.users()) {
    double v = 0.0;
    for (int m = 0; m < t.channels(); ++m)
      if (count[m] > 0) v += t.theta[m] * weight[m] * grab(count[m]);
    if (v > best.value || best.assignment.empty()) {
      best.value = v;
      best.assignment = current;
    }
    return;
  }
  for (int m = 0; m < t.channels(); ++m) {
    current[user] = m;
    ++count[m];
    weight[m] += t.rate[user][m];
    exhaustive_assignments(t, grab, user + 1, current, count, weight, best);
    --count[m];
    weight[m] -= t.rate[user][m];
  }
}

inline double local_search_pass(const RateTable& t, const GrabTable& grab,
                                std::vector<int>& assign) {
  const int nn = t.users(), mm = t.channels();
  std::vector<int> count(mm, 0);
  std::vector<double> weight(mm, 0.0);
  for (int n = 0; n < nn; ++n) {
    ++count[assign[n]];
    weight[assign[n]] += t.rate[n][assign[n]];
  }
  const auto term = [&](int m, int k, double w) {
    return k > 0 ? t.theta[m] * w * grab(k) : 0.0;
  };
  bool improved = true;
  while (improved) {
    improved = false;
    // Move one user to another channel.
    for (int n = 0; n < nn; ++n) {
      const int i = assign[n];
      for (int j = 0; j < mm; ++j) {
        if (j == i) continue;
        const double delta = term(i, count[i] - 1, weight[i] - t.rate[n][i]) +
                             term(j, count[j] + 1, weight[j] + t.rate[n][j]) -
                             term(i, count[i], weight[i]) - term(j, count[j], weight[j]);
        if (delta > 1e-12) {
          --count[i];
          weight[i] -= t.rate[n][i];
          ++count[j];
          weight[j] += t.rate[n][j];
          assign[n] = j;
          improved = true;
          break;
        }
      }
    }
    // Swap two users across their channels; counts stay put.
    for (int n = 0; n < nn; ++n)
      for (int u = n + 1; u < nn; ++u) {
        const int i = assign[n], j = assign[u];
        if (i == j) continue;
        const double delta = t.theta[i] * grab(count[i]) * (t.rate[u][i] - t.rate[n][i]) +
                             t.theta[j] * grab(count[j]) * (t.rate[n][j] - t.rate[u][j]);
        if (delta > 1e-12) {
          weight[i] += t.rate[u][i] - t.rate[n][i];
          weight[j] += t.rate[n][j] - t.rate[u][j];
          std::swap(assign[n], assign[u]);
          improved = true;
        }
      }
  }
  return assignment_value(t, grab, assign);
}

}  // namespace detail

// Maximize total throughput with per-user rates: exact for small fleets,
// best-of-restarts local search (move and swap neighborhoods) beyond that.
inline AssignmentOptimum heterogeneous_optimum(const RateTable& t, OptimumOptions opts = {}) {
  t.validate();
  const int nn = t.users();
  const GrabTable grab(t.contention, std::max(64, nn));
  AssignmentOptimum best;
  if (nn <= opts.exhaustive_limit) {
    std::vector<int> current(nn, 0), count(t.channels(), 0);
    std::vector<double> weight(t.channels(), 0.0);
    detail::exhaustive_assignments(t, grab, 0, current, count, weight, best);
    best.exact = true;
    return best;
  }
  auto rng = make_stream(opts.seed, stream::optimum);
  std::uniform_int_distribution<int> pick(0, t.channels() - 1);
  for (int r = 0; r < std::max(1, opts.restarts); ++r) {
    std::vector<int> assign(nn);
    for (int n = 0; n < nn; ++n) assign[n] = pick(rng);
    const double v = detail::local_search_pass(t, grab, assign);
    if (best.assignment.empty() || v > best.value) {
      best.value = v;
      best.assignment = std::move(assign);
    }
  }
  best.exact = false;
  return best;
}

inline std::optional<double> price_of_imitation(double equilibrium_value, double optimum_value) {
  if (!(optimum_value > 0)) return std::nullopt;
  return equilibrium_value / optimum_value;
}

// N g(N/Z) / M with the real-argument contention factor.
inline double poi_lower_bound(int n_users, int utilized, int n_channels,
                              ContentionConfig cfg = {}) {
  if (n_users < 1 || utilized < 1 || n_channels < 1)
    throw std::invalid_argument("bound: counts must be positive");
  return double(n_users) * grab_probability(double(n_users) / utilized, cfg) / n_channels;
}

// Aggregate outcome numbers for one standing allocation: per-user expected
// throughput, the system total, fairness, channel utilization, and how the
// total compares to a reference optimum when one is supplied.
struct MetricsReport {
  std::vector<double> user_throughput;
  double system_throughput = 0.0;
  std::optional<double> jain;
  int utilized = 0;
  std::optional<double> poi;
  double poi_bound = 0.0;
};

inline MetricsReport make_metrics(const RateTable& t, std::span<const int> allocation,
                                  std::optional<double> optimum_value = std::nullopt) {
  MetricsReport r;
  r.user_throughput = allocation_throughputs(t, allocation);
  for (const double u : r.user_throughput) r.system_throughput += u;
  r.jain = jain_index(r.user_throughput);
  std::vector<char> used(static_cast<std::size_t>(t.channels()), 0);
  for (const int c : allocation) used[static_cast<std::size_t>(c)] = 1;
  for (const char f : used) r.utilized += f;
  if (optimum_value) r.poi = price_of_imitation(r.system_throughput, *optimum_value);
  if (!allocation.empty() && r.utilized > 0)
    r.poi_bound = poi_lower_bound(static_cast<int>(allocation.size()), r.utilized, t.channels(),
                                  t.contention);
  return r;
}

// Round fractional channel loads to integers that sum to total, largest
// fractional parts first (ties to the lowest index).
inline std::vector<int> largest_remainder_counts(std::span<const double> weights, int total) {
  if (total < 0) throw std::invalid_argument("rounding: total must be nonnegative");
  std::vector<int> counts(weights.size(), 0);
  std::vector<std::pair<double, int>> rem;
  long placed = 0;
  for (std::size_t m = 0; m < weights.size(); ++m) {
    if (weights[m] < 0) throw std::invalid_argument("rounding: weights must be nonnegative");
    counts[m] = static_cast<int>(std::floor(weights[m]));
    placed += counts[m];
    rem.push_back({weights[m] - counts[m], static_cast<int>(m)});
  }
  if (placed > total) throw std::invalid_argument("rounding: weights exceed the total");
  std::stable_sort(rem.begin(), rem.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (long i = 0; placed < total; ++placed, ++i)
    ++counts[rem[static_cast<std::size_t>(i) % rem.size()].second];
  return counts;
}

}  // namespace imsa
