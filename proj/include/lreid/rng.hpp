#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace lreid {

// Counter-based deterministic generator. Every stochastic call site derives
// its own stream from a label, so draws in one stream never perturb another
// and module evaluation order cannot change results.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    // Derive an independent child stream. Labels are free-form; convention
    // is a path-like string such as "world/SC1/outfits".
    Rng stream(std::string_view label) const;

    std::uint64_t next_u64();

    // Uniform in [0, 1).
    double uniform();
    // Uniform in [lo, hi).
    double uniform(double lo, double hi);
    // Standard normal via Box-Muller; one draw consumes two uniforms.
    double gaussian();
    double gaussian(double mean, double sigma);
    // Uniform integer in [lo, hi).
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(i)));
            std::swap(v[i - 1], v[j]);
        }
    }

    // Sample k distinct values from [0, n) in draw order.
    std::vector<int> sample_without_replacement(int n, int k);

    std::uint64_t key() const { return key_; }

private:
    Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace lreid
