#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace wingkit {

using Engine = std::mt19937_64;

// Derives an independent seed for a named consumer of randomness. Streams
// are keyed by (root, purpose, index) so a new consumer never shifts the
// draws seen by existing ones.
std::uint64_t stream_seed(std::uint64_t root, std::string_view purpose,
                          std::uint64_t index = 0);

Engine make_engine(std::uint64_t root, std::string_view purpose,
                   std::uint64_t index = 0);

// Stateless 64-bit mixer (splitmix64 finalizer).
std::uint64_t mix64(std::uint64_t x);

// Uniform in [0, 1) from a hash of the arguments; used where per-pixel
// randomness must not depend on evaluation order.
double hash_unit(std::uint64_t a, std::uint64_t b, std::uint64_t c);

}  // namespace wingkit
