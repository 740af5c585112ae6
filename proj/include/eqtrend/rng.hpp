#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace eqtrend {

using Engine = std::mt19937_64;

// Independent sub-stream for (seed, stream...). Parallel kernels key
// engines by job index, never by thread id.
Engine make_engine(std::uint64_t seed, std::initializer_list<std::uint64_t> stream);

}  // namespace eqtrend
