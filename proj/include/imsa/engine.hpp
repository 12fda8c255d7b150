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
#include <utility>
#include <vector>

#include "imsa/channel.hpp"
#include "imsa/contention.hpp"
#include "imsa/estimation.hpp"
#include "imsa/rng.hpp"
#include "imsa/social_graph.hpp"

namespace imsa {

// homogeneous: everyone shares the channel statistics, so users exchange
// their throughput estimates directly.  heterogeneous: per-user data rates,
// so users exchange only the congestion factor and project it onto their own
// channel statistics gathered during an initial full scan.
enum class EngineMode { homogeneous, heterogeneous };

// mle: per-slot sensing feeds the estimator pipeline.  abstract_noise: the
// per-period estimate is the exact expected throughput plus one noise draw,
// which is the abstraction the deterministic population model analyzes.
enum class EstimateSource { mle, abstract_noise };

struct EngineConfig {
  long periods = 500;
  int slots_per_period = 100;
  int enquiry_fanout = 1;  // peers asked per period; best strict improvement wins
  int delay = 0;           // peer reports arrive this many periods late
  EngineMode mode = EngineMode::homogeneous;
  EstimateSource source = EstimateSource::mle;
  NoiseModel noise;        // abstract_noise only
  ContentionConfig contention;
  int window = 100;        // sliding occupancy window for the convergence reading
  double convergence_eps = 0.02;

  void validate() const {
    if (periods < 1) throw std::invalid_argument("engine: need at least one period");
    if (slots_per_period < 1) throw std::invalid_argument("engine: need at least one slot");
    if (enquiry_fanout < 1) throw std::invalid_argument("engine: fanout must be at least 1");
    if (delay < 0) throw std::invalid_argument("engine: delay must be nonnegative");
    if (window < 1) throw std::invalid_argument("engine: window must be positive");
    if (!(convergence_eps > 0)) throw std::invalid_argument("engine: epsilon must be positive");
    noise.validate();
    contention.validate();
    if (source == EstimateSource::abstract_noise && mode == EngineMode::heterogeneous)
      throw std::invalid_argument("engine: abstract estimates require the homogeneous mode");
  }
};

struct SimulationInput {
  std::vector<ChannelSpec> channels;
  std::vector<UserRadioSpec> users;
  SocialGraph graph = SocialGraph(1);
  std::vector<int> initial_channel;  // empty means a uniform draw per user

  int num_channels() const { return static_cast<int>(channels.size()); }
  int num_users() const { return static_cast<int>(users.size()); }

  void validate() const {
    if (channels.empty()) throw std::invalid_argument("simulation: need at least one channel");
    for (std::size_t m = 0; m < channels.size(); ++m) {
      channels[m].validate();
      if (channels[m].id != static_cast<int>(m))
        throw std::invalid_argument("simulation: channel ids must match their positions");
    }
    if (users.empty()) throw std::invalid_argument("simulation: need at least one user");
    for (std::size_t n = 0; n < users.size(); ++n) {
      users[n].validate(channels.size());
      if (users[n].id != static_cast<int>(n))
        throw std::invalid_argument("simulation: user ids must match their positions");
    }
    if (graph.size() != num_users())
      throw std::invalid_argument("simulation: graph size must match the user count");
    if (!initial_channel.empty()) {
      if (initial_channel.size() != users.size())
        throw std::invalid_argument("simulation: initial channel list size mismatch");
      for (const int c : initial_channel)
        if (c < 0 || c >= num_channels())
          throw std::invalid_argument("simulation: initial channel out of range");
    }
  }
};

// What one user would tell an enquirer about a given period.
struct PeriodRecord {
  int channel = -1;
  double estimate = 0.0;  // the user's throughput estimate for that period
  double grab = 1.0;      // the user's congestion estimate on that channel
};

struct PeerReport {
  int channel = -1;
  double estimate = 0.0;
};

// Move to the best-reporting peer's channel iff its estimate strictly beats
// the user's own; ties among peers resolve to the lowest channel index.
inline int imitation_decision(int own_channel, double own_estimate,
                              std::span<const PeerReport> peers) {
  int best_channel = -1;
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& p : peers)
    if (p.estimate > best || (p.estimate == best && best_channel >= 0 && p.channel < best_channel)) {
      best = p.estimate;
      best_channel = p.channel;
    }
  return (best_channel >= 0 && best > own_estimate) ? best_channel : own_channel;
}

// A peer's congestion report projected onto the enquirer's own channel
// statistics from its scan table.
inline double heterogeneous_projection(double idle_prob, double mean_rate, double peer_grab) {
  return idle_prob * mean_rate * peer_grab;
}

// Which period's records an enquiry at the end of `period` reads; reports
// older than the run clamp to the first period.
inline long delayed_source(long period, int delay) {
  return std::max<long>(1, period - delay);
}

struct SimulationTrace {
  long periods = 0;
  int users = 0;
  int channels = 0;
  std::vector<std::vector<int>> channel_of;      // [period][user]
  std::vector<std::vector<double>> estimate_of;  // [period][user], end-of-period value
  std::vector<std::vector<double>> realized;     // [period][user], mean rate over the period
  std::vector<std::vector<int>> occupancy;       // [period][channel]
  std::vector<double> mean_realized;             // [user], horizon average
  std::vector<std::vector<ChannelEstimate>> final_estimates;  // [user][channel]
  std::vector<double> window_occupancy;          // [channel], fraction over the last window
  long converged_at = -1;  // first period where consecutive windows agree; -1 if never

  // Mean occupancy fraction per channel over periods (first, last].
  std::vector<double> occupancy_window(long first, long last) const {
    std::vector<double> f(channels, 0.0);
    for (long t = first; t < last; ++t)
      for (int m = 0; m < channels; ++m) f[m] += occupancy[t][m];
    const double scale = 1.0 / (double(last - first) * users);
    for (double& v : f) v *= scale;
    return f;
  }
};

namespace detail {

class Engine {
 public:
  Engine(const SimulationInput& in, const EngineConfig& cfg, std::uint64_t seed)
      : in_(in), cfg_(cfg), grab_(cfg.contention) {
    in_.validate();
    cfg_.validate();
    n_ = in_.num_users();
    m_ = in_.num_channels();
    user_rng_.reserve(n_);
    for (int u = 0; u < n_; ++u) user_rng_.push_back(make_stream(seed, stream::user_base + u));
    channel_rng_.reserve(m_);
    for (int c = 0; c < m_; ++c)
      channel_rng_.push_back(make_stream(seed, stream::channel_base + c));
    neighbors_.resize(n_);
    for (int u = 0; u < n_; ++u) neighbors_[u] = in_.graph.neighborhood(u);
    estimates_.assign(n_, std::vector<ChannelEstimate>(m_));
    state_.assign(m_, std::nullopt);
    if (cfg_.source == EstimateSource::abstract_noise) {
      true_theta_.resize(m_);
      for (int c = 0; c < m_; ++c) true_theta_[c] = stationary_idle_prob(in_.channels[c]);
      true_rate_.assign(n_, std::vector<double>(m_));
      for (int u = 0; u < n_; ++u)
        for (int c = 0; c < m_; ++c)
          true_rate_[u][c] = mean_rate(in_.channels[c], in_.users[u].tx_power_mw,
                                       user_mean_gain(in_.channels[c], in_.users[u]));
    }
  }

  SimulationTrace run() {
    const long horizon = cfg_.periods;
    SimulationTrace tr;
    tr.periods = horizon;
    tr.users = n_;
    tr.channels = m_;
    tr.channel_of.assign(horizon, std::vector<int>(n_));
    tr.estimate_of.assign(horizon, std::vector<double>(n_));
    tr.realized.assign(horizon, std::vector<double>(n_));
    tr.occupancy.assign(horizon, std::vector<int>(m_, 0));

    current_ = first_channels();
    const long ring = cfg_.delay + 1;
    records_.assign(ring, std::vector<PeriodRecord>(n_));
    const bool het = cfg_.mode == EngineMode::heterogeneous;
    std::vector<double> own(n_);

    for (long t = 1; t <= horizon; ++t) {
      auto& occ = tr.occupancy[t - 1];
      for (int u = 0; u < n_; ++u) ++occ[current_[u]];

      if (cfg_.source == EstimateSource::mle)
        run_slots(occ, tr.realized[t - 1], own);
      else
        run_abstract(occ, tr.realized[t - 1], own);

      auto& rec = records_[t % ring];
      for (int u = 0; u < n_; ++u) {
        const int c = current_[u];
        rec[u] = {c, own[u], estimates_[u][c].grab_prob};
        tr.channel_of[t - 1][u] = c;
        tr.estimate_of[t - 1][u] = own[u];
      }

      const bool scanning = het && t <= m_;
      if (scanning) {
        if (t < horizon)
          for (int u = 0; u < n_; ++u) current_[u] = scan_channel(u, t);
        continue;
      }
      if (t == horizon) break;

      const auto& src = records_[delayed_source(t, cfg_.delay) % ring];
      std::vector<PeerReport> reports;
      for (int u = 0; u < n_; ++u) {
        const auto& nbr = neighbors_[u];
        if (nbr.empty()) continue;
        reports.clear();
        std::uniform_int_distribution<int> pick(0, static_cast<int>(nbr.size()) - 1);
        for (int f = 0; f < cfg_.enquiry_fanout; ++f) {
          const auto& r = src[nbr[pick(user_rng_[u])]];
          if (het) {
            const auto& e = estimates_[u][r.channel];
            reports.push_back(
                {r.channel, heterogeneous_projection(e.idle_prob, e.mean_rate, r.grab)});
          } else {
            reports.push_back({r.channel, r.estimate});
          }
        }
        current_[u] = imitation_decision(current_[u], own[u], reports);
      }
    }

    tr.mean_realized.assign(n_, 0.0);
    for (long t = 0; t < horizon; ++t)
      for (int u = 0; u < n_; ++u) tr.mean_realized[u] += tr.realized[t][u];
    for (double& v : tr.mean_realized) v /= double(horizon);
    tr.final_estimates = std::move(estimates_);

    const long w = cfg_.window;
    tr.window_occupancy = tr.occupancy_window(std::max<long>(0, horizon - w), horizon);
    for (long t = 2 * w; t <= horizon; ++t) {
      const auto prev = tr.occupancy_window(t - 2 * w, t - w);
      const auto curr = tr.occupancy_window(t - w, t);
      double diff = 0.0;
      for (int c = 0; c < m_; ++c) diff = std::max(diff, std::abs(curr[c] - prev[c]));
      if (diff < cfg_.convergence_eps) {
        tr.converged_at = t;
        break;
      }
    }
    return tr;
  }

 private:
  std::vector<int> first_channels() {
    std::vector<int> ch(n_);
    if (cfg_.mode == EngineMode::heterogeneous) {
      // Scan stage: every user visits each channel once, in its own order.
      scan_order_.assign(n_, {});
      for (int u = 0; u < n_; ++u) {
        scan_order_[u].resize(m_);
        std::iota(scan_order_[u].begin(), scan_order_[u].end(), 0);
        std::shuffle(scan_order_[u].begin(), scan_order_[u].end(), user_rng_[u]);
        ch[u] = scan_order_[u][0];
      }
    } else if (!in_.initial_channel.empty()) {
      ch = in_.initial_channel;
    } else {
      std::uniform_int_distribution<int> pick(0, m_ - 1);
      for (int u = 0; u < n_; ++u) ch[u] = pick(user_rng_[u]);
    }
    return ch;
  }

  // Channel for scan period t+1; after the scan users stay until imitation
  // moves them.
  int scan_channel(int u, long t) const {
    return t < m_ ? scan_order_[u][t] : current_[u];
  }

  void run_slots(const std::vector<int>& occ, std::vector<double>& realized,
                 std::vector<double>& own) {
    std::vector<std::vector<int>> on(m_);
    for (int c = 0; c < m_; ++c) on[c].reserve(occ[c]);
    for (int u = 0; u < n_; ++u) on[current_[u]].push_back(u);
    if (logs_.size() != static_cast<std::size_t>(n_)) logs_.resize(n_);
    for (int u = 0; u < n_; ++u) logs_[u].clear();

    std::uniform_int_distribution<int> backoff(1, cfg_.contention.lambda_max);
    std::vector<int> draws;
    for (int slot = 0; slot < cfg_.slots_per_period; ++slot) {
      for (int c = 0; c < m_; ++c) {
        state_[c] = sample_state(in_.channels[c], state_[c], channel_rng_[c]);
        const bool idle = state_[c] == ChannelState::idle;
        if (!idle) {
          for (const int u : on[c]) logs_[u].push(false, false, 0.0);
          continue;
        }
        draws.resize(on[c].size());
        for (std::size_t i = 0; i < on[c].size(); ++i)
          draws[i] = backoff(user_rng_[on[c][i]]);
        const auto win = unique_min_index(draws);
        for (std::size_t i = 0; i < on[c].size(); ++i) {
          const int u = on[c][i];
          if (win && *win == i)
            logs_[u].push(true, true, sample_rate(in_.channels[c], in_.users[u], user_rng_[u]));
          else
            logs_[u].push(true, false, 0.0);
        }
      }
    }

    for (int u = 0; u < n_; ++u) {
      auto& est = estimates_[u][current_[u]];
      if (const auto g = estimate_grab_prob(logs_[u])) est.grab_prob = *g;
      est = estimate_idle_prob(logs_[u], est);
      est = estimate_mean_rate(logs_[u], est);
      own[u] = estimate_throughput(est);
      double sum = 0.0;
      for (const double b : logs_[u].rate_mbps) sum += b;
      realized[u] = sum / cfg_.slots_per_period;
    }
  }

  void run_abstract(const std::vector<int>& occ, std::vector<double>& realized,
                    std::vector<double>& own) {
    for (int u = 0; u < n_; ++u) {
      const int c = current_[u];
      const double g = grab_(occ[c]);
      const double value = true_theta_[c] * true_rate_[u][c] * g;
      realized[u] = value;
      own[u] = apply_noise(value, cfg_.noise, user_rng_[u]);
      auto& est = estimates_[u][c];
      est.idle_prob = true_theta_[c];
      est.mean_rate = true_rate_[u][c];
      est.grab_prob = g;
    }
  }

  SimulationInput in_;
  EngineConfig cfg_;
  GrabTable grab_;
  int n_ = 0, m_ = 0;
  std::vector<Rng> user_rng_, channel_rng_;
  std::vector<std::vector<int>> neighbors_;
  std::vector<std::vector<ChannelEstimate>> estimates_;
  std::vector<std::optional<ChannelState>> state_;
  std::vector<ObservationLog> logs_;
  std::vector<int> current_;
  std::vector<std::vector<PeriodRecord>> records_;
  std::vector<std::vector<int>> scan_order_;
  std::vector<double> true_theta_;
  std::vector<std::vector<double>> true_rate_;
};

}  // namespace detail

inline SimulationTrace run_simulation(const SimulationInput& in, const EngineConfig& cfg,
                                      std::uint64_t seed) {
  return detail::Engine(in, cfg, seed).run();
}

}  // namespace imsa
