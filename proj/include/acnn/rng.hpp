#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <vector>

namespace acnn {

namespace detail {

// splitmix64 finalizer; also used to derive independent substreams.
inline std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace detail

// Small self-contained generator so that every stream is bit-reproducible
// across platforms and standard-library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform in {0, ..., n-1}; modulo bias is negligible for the sizes used here.
    std::uint64_t uniform_index(std::uint64_t n) { return n ? next_u64() % n : 0; }

    // Box-Muller, two fresh draws per call.
    double normal(double mean = 0.0, double stddev = 1.0) {
        const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return mean + stddev * r * std::cos(2.0 * M_PI * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    std::vector<int> permutation(int n) {
        std::vector<int> p(static_cast<std::size_t>(n));
        std::iota(p.begin(), p.end(), 0);
        shuffle(p);
        return p;
    }

private:
    std::uint64_t state_;
};

// Derives a substream seed from (seed, tags...). Seeding per purpose keeps
// streams independent, so e.g. the data-shuffling stream is shared across
// ablation variants even when a variant draws extra randomness elsewhere.
template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t seed, Tags... tags) {
    std::uint64_t h = detail::mix64(seed);
    ((h = detail::mix64(h ^ static_cast<std::uint64_t>(tags))), ...);
    return h;
}

// Stream purposes (tags for derive_seed).
enum class Stream : std::uint64_t {
    init = 1,
    shuffle = 2,
    augment = 3,
    dropout = 4,
    ordering = 5,
    data_gen = 6,
};

template <typename... Tags>
std::uint64_t derive_seed(std::uint64_t seed, Stream s, Tags... tags) {
    return derive_seed(seed, static_cast<std::uint64_t>(s), tags...);
}

}  // namespace acnn
