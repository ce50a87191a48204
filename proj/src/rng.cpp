#include "canonsys/rng.hpp"

#include <bit>
#include <random>

namespace canonsys {

std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value) {
    return mix64(seed ^ mix64(value + 0x632be59bd9b4e019ULL));
}

std::uint64_t hash_string(std::string_view s) {
    // FNV-1a, then mixed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return mix64(h);
}

std::uint64_t double_bits(double x) {
    if (x == 0.0) x = 0.0;  // fold -0 into +0
    return std::bit_cast<std::uint64_t>(x);
}

std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = mix64(seed);
    for (std::uint64_t k : keys) h = hash_combine(h, k);
    return h;
}

SplitMix64::result_type SplitMix64::operator()() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

double keyed_normal(std::uint64_t key) {
    SplitMix64 gen(key);
    std::normal_distribution<double> normal(0.0, 1.0);
    return normal(gen);
}

}  // namespace canonsys
