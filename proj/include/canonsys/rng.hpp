#pragma once

#include <cstdint>
#include <initializer_list>
#include <limits>
#include <string_view>

namespace canonsys {

// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x);

std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);

std::uint64_t hash_string(std::string_view s);

std::uint64_t double_bits(double x);

// Deterministic sub-seed derived from a seed and a list of keys.
std::uint64_t derive_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

// Minimal URBG; cheap to construct, so it can be seeded per key.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()();

private:
    std::uint64_t state_;
};

// Standard normal variate that depends only on the key.
double keyed_normal(std::uint64_t key);

}  // namespace canonsys
