#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "onlinebev/tensor.hpp"

namespace obev {

using Rng = std::mt19937_64;

// Uniform in [0, 1) from the top 53 bits; avoids depending on the standard
// library's distribution implementations for the hot paths.
inline double uniform01(Rng& rng)
{
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi)
{
    return lo + (hi - lo) * uniform01(rng);
}

inline double normal(Rng& rng)
{
    // Box-Muller; u1 in (0, 1].
    const double u1 = 1.0 - uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// splitmix64 finaliser, used to derive independent stream seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b)
{
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline Tensor uniform_tensor(Shape shape, Rng& rng, double lo, double hi)
{
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = uniform(rng, lo, hi);
    return t;
}

inline Tensor normal_tensor(Shape shape, Rng& rng, double stddev = 1.0)
{
    Tensor t(std::move(shape));
    for (auto& v : t.values()) v = stddev * normal(rng);
    return t;
}

}  // namespace obev
