#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "imsa/math.hpp"
#include "imsa/rng.hpp"

namespace imsa {

enum class ChannelState : std::uint8_t { busy = 0, idle = 1 };
enum class IdleKind : std::uint8_t { iid, markov };

inline double dbm_to_mw(double dbm) { return std::pow(10.0, dbm / 10.0); }

// A licensed channel as seen by the secondary network.  Under the iid model
// each slot is idle with probability theta.  Under the markov model the
// per-slot state follows a two-state chain with P(busy -> idle) = p and
// P(idle -> busy) = q, whose stationary idle probability is p / (p + q).
struct ChannelSpec {
  int id = 0;
  double bandwidth_mhz = 10.0;     // zeta
  IdleKind kind = IdleKind::iid;
  double theta = 0.5;              // idle probability (iid only)
  double p = 0.0;                  // markov: busy -> idle
  double q = 0.0;                  // markov: idle -> busy
  double noise_power_mw = 1e-10;   // upsilon
  double mean_gain = 1.0;          // default exponential-fading mean, h-bar

  void validate() const {
    if (!(bandwidth_mhz > 0)) throw std::invalid_argument("channel: bandwidth must be positive");
    if (!(noise_power_mw > 0)) throw std::invalid_argument("channel: noise power must be positive");
    if (!(mean_gain > 0)) throw std::invalid_argument("channel: mean gain must be positive");
    if (kind == IdleKind::iid) {
      if (!(theta > 0.0 && theta < 1.0))
        throw std::invalid_argument("channel: theta must lie in (0,1)");
    } else {
      if (!(p > 0.0 && p <= 1.0) || !(q > 0.0 && q <= 1.0))
        throw std::invalid_argument("channel: markov p, q must lie in (0,1]");
      if (p == 1.0 && q == 1.0)
        throw std::invalid_argument("channel: p = q = 1 alternates deterministically");
    }
  }
};

// Markov chain with a requested stationary idle probability theta and mixing
// rate mu in (0,1]: p = mu * theta, q = mu * (1 - theta).
inline ChannelSpec make_markov_channel(int id, double bandwidth_mhz, double theta, double mu,
                                       double noise_power_mw) {
  if (!(mu > 0.0 && mu <= 1.0)) throw std::invalid_argument("channel: mu must lie in (0,1]");
  if (!(theta > 0.0 && theta < 1.0)) throw std::invalid_argument("channel: theta must lie in (0,1)");
  ChannelSpec c;
  c.id = id;
  c.bandwidth_mhz = bandwidth_mhz;
  c.kind = IdleKind::markov;
  c.theta = theta;
  c.p = mu * theta;
  c.q = mu * (1.0 - theta);
  c.noise_power_mw = noise_power_mw;
  c.validate();
  return c;
}

inline double stationary_idle_prob(const ChannelSpec& c) {
  if (c.kind == IdleKind::iid) return c.theta;
  if (!(c.p + c.q > 0)) throw std::invalid_argument("channel: p + q must be positive");
  return c.p / (c.p + c.q);
}

// Next slot state.  prev is the state of the previous slot; pass nullopt for
// the first slot, which draws from the stationary distribution.
inline ChannelState sample_state(const ChannelSpec& c, std::optional<ChannelState> prev, Rng& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (c.kind == IdleKind::iid || !prev)
    return u(rng) < stationary_idle_prob(c) ? ChannelState::idle : ChannelState::busy;
  if (*prev == ChannelState::idle)
    return u(rng) < c.q ? ChannelState::busy : ChannelState::idle;
  return u(rng) < c.p ? ChannelState::idle : ChannelState::busy;
}

// Transmitter-side parameters of one secondary user.  mean_gain lists the
// per-channel fading means; leave it empty to fall back to each channel's
// default.
struct UserRadioSpec {
  int id = 0;
  double tx_power_mw = 100.0;  // eta
  std::vector<double> mean_gain;

  void validate(std::size_t n_channels) const {
    if (!(tx_power_mw > 0)) throw std::invalid_argument("user: tx power must be positive");
    if (!mean_gain.empty() && mean_gain.size() != n_channels)
      throw std::invalid_argument("user: mean_gain size must match channel count");
    for (const double h : mean_gain)
      if (!(h > 0)) throw std::invalid_argument("user: mean gain must be positive");
  }
};

// Shannon rate in Mbps of a transmission over an idle channel with
// instantaneous gain h:  b = zeta * log2(1 + eta * h / upsilon).
inline double rate_from_gain(const ChannelSpec& c, double tx_power_mw, double h) {
  if (h < 0) throw std::invalid_argument("rate_from_gain: gain must be nonnegative");
  return c.bandwidth_mhz * std::log2(1.0 + tx_power_mw * h / c.noise_power_mw);
}

inline double user_mean_gain(const ChannelSpec& c, const UserRadioSpec& u) {
  return u.mean_gain.empty() ? c.mean_gain : u.mean_gain.at(static_cast<std::size_t>(c.id));
}

// Draw the instantaneous rate for one grabbed slot; gains are exponential
// with the user's per-channel mean.
inline double sample_rate(const ChannelSpec& c, const UserRadioSpec& u, Rng& rng) {
  std::exponential_distribution<double> h(1.0 / user_mean_gain(c, u));
  return rate_from_gain(c, u.tx_power_mw, h(rng));
}

// Mean of rate_from_gain over exponential gains with mean hbar:
//   E[b] = (zeta / ln 2) * e^(1/s) * E1(1/s),   s = eta * hbar / upsilon.
inline double mean_rate(const ChannelSpec& c, double tx_power_mw, double hbar) {
  if (!(hbar > 0)) throw std::invalid_argument("mean_rate: hbar must be positive");
  const double s = tx_power_mw * hbar / c.noise_power_mw;
  return c.bandwidth_mhz / std::log(2.0) * expx_e1(1.0 / s);
}

// Fading mean that makes the channel's average rate hit target_mbps.
// Scenarios specify channels by mean data rate; the fading model wants a
// gain, so invert the monotone map numerically.
inline double calibrate_mean_gain(const ChannelSpec& c, double tx_power_mw, double target_mbps) {
  if (!(target_mbps > 0)) throw std::invalid_argument("calibrate_mean_gain: target must be positive");
  double lo = c.noise_power_mw / tx_power_mw;  // s = 1
  double hi = lo;
  while (mean_rate(c, tx_power_mw, lo) > target_mbps) lo *= 0.5;
  while (mean_rate(c, tx_power_mw, hi) < target_mbps) hi *= 2.0;
  return bisect_increasing([&](double h) { return mean_rate(c, tx_power_mw, h); }, lo, hi,
                           target_mbps);
}

}  // namespace imsa
