#pragma once

#include <cstdint>
#include <random>

namespace hec {

constexpr std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed of population member `index`; depends on nothing but (master, index).
constexpr std::uint64_t child_seed(std::uint64_t master, std::uint64_t index)
{
    return splitmix64(master ^ splitmix64(index + 1));
}

// Independent random streams used while simulating one ADC.
enum class Stream : std::uint64_t {
    mismatch = 1,
    delta,
    cal_phase,
    cal_noise,
    eval_phase,
    eval_noise,
};

inline std::mt19937_64 make_engine(std::uint64_t seed, Stream stream)
{
    return std::mt19937_64(splitmix64(seed + 0x632be59bd9b4e019ULL * static_cast<std::uint64_t>(stream)));
}

} // namespace hec
