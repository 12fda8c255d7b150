#pragma once

#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "imsa/rng.hpp"

namespace imsa {

struct ContentionConfig {
  int lambda_max = 50;  // backoff window {1, ..., lambda_max}

  void validate() const {
    if (lambda_max < 1) throw std::invalid_argument("contention: lambda_max must be >= 1");
  }
};

// Probability that a given one of k contenders draws the strictly smallest
// backoff value:
//   g(k) = sum_{l=1}^{L} (1/L) * ((L-l)/L)^(k-1),   L = lambda_max.
// Defined for real k >= 1 (population masses need not be integers), with the
// l = L term read as 1 when k = 1 and 0 otherwise.  g(1) = 1, g is strictly
// decreasing in k, and k*g(k) <= 1.
inline double grab_probability(double k, const ContentionConfig& cfg = {}) {
  cfg.validate();
  if (!(k >= 1.0)) throw std::invalid_argument("grab_probability: k must be >= 1");
  const int L = cfg.lambda_max;
  double s = (k == 1.0) ? 1.0 : 0.0;
  for (int l = 1; l < L; ++l) {
    s += std::exp((k - 1.0) * std::log(static_cast<double>(L - l) / L));
  }
  return s / L;
}

// Precomputed g(k) values for integer k, plus cached logarithms for fast
// real-valued evaluation.  Immutable after construction, so concurrent
// readers are fine.
class GrabTable {
 public:
  explicit GrabTable(ContentionConfig cfg = {}, int k_max = 1024) : cfg_(cfg) {
    cfg_.validate();
    if (k_max < 1) throw std::invalid_argument("GrabTable: k_max must be >= 1");
    table_.resize(static_cast<std::size_t>(k_max) + 1, 0.0);
    for (int k = 1; k <= k_max; ++k) table_[k] = grab_probability(k, cfg_);
    log_ratio_.reserve(cfg_.lambda_max - 1);
    for (int l = 1; l < cfg_.lambda_max; ++l)
      log_ratio_.push_back(std::log(static_cast<double>(cfg_.lambda_max - l) / cfg_.lambda_max));
  }

  double operator()(int k) const {
    if (k < 1) throw std::invalid_argument("GrabTable: k must be >= 1");
    if (k < static_cast<int>(table_.size())) return table_[k];
    return grab_probability(k, cfg_);
  }

  double at(double k) const {
    if (!(k >= 1.0)) throw std::invalid_argument("GrabTable: k must be >= 1");
    double s = (k == 1.0) ? 1.0 : 0.0;
    for (const double lr : log_ratio_) s += std::exp((k - 1.0) * lr);
    return s / cfg_.lambda_max;
  }

  const ContentionConfig& config() const { return cfg_; }

 private:
  ContentionConfig cfg_;
  std::vector<double> table_;
  std::vector<double> log_ratio_;
};

// Index of the strictly smallest entry, or nullopt when the minimum is shared.
inline std::optional<std::size_t> unique_min_index(std::span<const int> draws) {
  std::optional<std::size_t> best;
  int best_val = 0;
  bool tie = false;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    if (!best || draws[i] < best_val) {
      best = i;
      best_val = draws[i];
      tie = false;
    } else if (draws[i] == best_val) {
      tie = true;
    }
  }
  if (!best || tie) return std::nullopt;
  return best;
}

// One contention round: every contender draws a backoff uniformly from
// {1, ..., lambda_max}; the unique minimum wins, a shared minimum wastes the
// slot.  Returns the winner's id.
inline std::optional<int> run_contention(std::span<const int> contender_ids,
                                         const ContentionConfig& cfg, Rng& rng) {
  cfg.validate();
  if (contender_ids.empty()) return std::nullopt;
  std::uniform_int_distribution<int> backoff(1, cfg.lambda_max);
  std::optional<int> winner;
  int best_val = cfg.lambda_max + 1;
  bool tie = false;
  for (const int id : contender_ids) {
    const int v = backoff(rng);
    if (v < best_val) {
      best_val = v;
      winner = id;
      tie = false;
    } else if (v == best_val) {
      tie = true;
    }
  }
  if (tie) return std::nullopt;
  return winner;
}

}  // namespace imsa
