#pragma once

#include <cstdint>
#include <random>

namespace imsa {

using Rng = std::mt19937_64;

// Independent random stream derived from a master seed.  Every user and
// every channel draws from its own stream, so results do not depend on the
// order in which the simulation loop visits them.
inline Rng make_stream(std::uint64_t master, std::uint64_t stream, std::uint64_t substream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master),
                    static_cast<std::uint32_t>(master >> 32),
                    static_cast<std::uint32_t>(stream),
                    static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(substream),
                    static_cast<std::uint32_t>(substream >> 32)};
  return Rng(seq);
}

// Stream id blocks used by the simulation engine and scenario setup.
namespace stream {
constexpr std::uint64_t graph = 1;
constexpr std::uint64_t hetero_rates = 2;
constexpr std::uint64_t clustering = 3;
constexpr std::uint64_t optimum = 4;
constexpr std::uint64_t channel_base = 1u << 20;
constexpr std::uint64_t user_base = 1u << 24;
}  // namespace stream

}  // namespace imsa
