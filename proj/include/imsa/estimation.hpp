#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "imsa/rng.hpp"

namespace imsa {

// What one user saw during one period's slots on a single channel.
struct ObservationLog {
  std::vector<std::uint8_t> idle;     // S(tau): channel sensed idle
  std::vector<std::uint8_t> grabbed;  // I(tau): this user won the slot
  std::vector<double> rate_mbps;      // b(tau): rate when grabbed, else 0

  void clear() {
    idle.clear();
    grabbed.clear();
    rate_mbps.clear();
  }

  void push(bool s, bool i, double b) {
    if (i && !s) throw std::invalid_argument("observation: grab on a busy slot");
    if (b > 0.0 && !i) throw std::invalid_argument("observation: rate without a grab");
    if (b < 0.0) throw std::invalid_argument("observation: negative rate");
    idle.push_back(s ? 1 : 0);
    grabbed.push_back(i ? 1 : 0);
    rate_mbps.push_back(i ? b : 0.0);
  }

  std::size_t slots() const { return idle.size(); }
};

// One user's running estimates for one channel.  idle_prob and mean_rate are
// means of per-period maximum-likelihood estimates; grab_prob is the most
// recent period's estimate (the contender count changes every period, so
// averaging across periods would mix different regimes).
struct ChannelEstimate {
  double idle_prob = 0.5;   // theta-tilde
  double mean_rate = 0.0;   // B-tilde (Mbps)
  double grab_prob = 1.0;   // g-tilde
  int idle_periods = 0;     // periods folded into idle_prob
  int rate_periods = 0;     // periods folded into mean_rate
};

// g-tilde = (slots grabbed) / (slots idle).  A period where the channel was
// never idle carries no contention information: the caller keeps the
// previous value.
inline std::optional<double> estimate_grab_prob(const ObservationLog& log) {
  long s = 0, i = 0;
  for (std::size_t t = 0; t < log.slots(); ++t) {
    s += log.idle[t];
    i += log.grabbed[t];
  }
  if (s == 0) return std::nullopt;
  return static_cast<double>(i) / static_cast<double>(s);
}

// Fold theta-hat = (idle slots) / L into the running per-period mean.
inline ChannelEstimate estimate_idle_prob(const ObservationLog& log, ChannelEstimate prior) {
  if (log.slots() == 0) throw std::invalid_argument("estimate_idle_prob: empty log");
  long s = 0;
  for (const auto v : log.idle) s += v;
  const double theta_hat = static_cast<double>(s) / static_cast<double>(log.slots());
  prior.idle_prob =
      (prior.idle_prob * prior.idle_periods + theta_hat) / (prior.idle_periods + 1);
  prior.idle_periods += 1;
  return prior;
}

// Fold B-hat = (sum of grabbed rates) / (number of grabs) into the running
// per-period mean.  A period without a grab has no rate samples and leaves
// the estimate untouched.
inline ChannelEstimate estimate_mean_rate(const ObservationLog& log, ChannelEstimate prior) {
  long i = 0;
  double b = 0.0;
  for (std::size_t t = 0; t < log.slots(); ++t) {
    i += log.grabbed[t];
    b += log.rate_mbps[t];
  }
  if (i == 0) return prior;
  const double rate_hat = b / static_cast<double>(i);
  prior.mean_rate =
      (prior.mean_rate * prior.rate_periods + rate_hat) / (prior.rate_periods + 1);
  prior.rate_periods += 1;
  return prior;
}

inline double estimate_throughput(double grab_prob, double idle_prob, double mean_rate) {
  return idle_prob * mean_rate * grab_prob;
}

inline double estimate_throughput(const ChannelEstimate& e) {
  return estimate_throughput(e.grab_prob, e.idle_prob, e.mean_rate);
}

// Zero-mean estimation noise, uniform on (-half_width, half_width).  Used by
// the abstract estimator mode, where measured throughput is modeled as the
// true value plus one draw of this noise.
struct NoiseModel {
  double half_width = 0.0;  // 0 disables noise

  void validate() const {
    if (half_width < 0) throw std::invalid_argument("noise: half width must be nonnegative");
  }

  double lower() const { return -half_width; }
  double upper() const { return half_width; }

  double density(double w) const {
    if (half_width == 0.0) return 0.0;
    return (w > lower() && w < upper()) ? 1.0 / (2.0 * half_width) : 0.0;
  }

  double sample(Rng& rng) const {
    if (half_width == 0.0) return 0.0;
    std::uniform_real_distribution<double> u(lower(), upper());
    return u(rng);
  }
};

inline double apply_noise(double value, const NoiseModel& m, Rng& rng) {
  return value + m.sample(rng);
}

// Default noise scale: 5% of the best channel's mean throughput theta * B.
inline NoiseModel default_noise(std::span<const double> theta_times_rate) {
  double best = 0.0;
  for (const double v : theta_times_rate) best = std::max(best, v);
  return NoiseModel{0.05 * best};
}

}  // namespace imsa
