#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace lqg {

// Counter-based random numbers. Every draw is a pure function of
// (master seed, stream label, replica, counter...), so parallel replica
// decomposition never changes the values drawn and any cell of a virtual
// white-noise lattice can be evaluated independently.

namespace rng_detail {

inline constexpr std::uint64_t golden = 0x9e3779b97f4a7c15ull;

// SplitMix64 finalizer.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
    return mix64(h + golden + (v ^ (h << 6)));
}

}

// Well-known stream labels. Keeping them in one place guards against two
// subsystems accidentally sharing a stream.
enum class stream : std::uint64_t {
    band_noise = 1,
    calibration = 2,
    bm_path = 3,
    poisson = 4,
    u_config = 5,
    u_field = 6,
    gmc_variance = 7,
    walk_mc = 8,
    bootstrap = 9,
    cluster_field = 10,
    generic = 11,
};

// An immutable key identifying a random stream; derive sub-keys with
// chain(), draw values with u64(counter).
struct rng_key {
    std::uint64_t state;

    static rng_key root(std::uint64_t seed, stream label) {
        return {rng_detail::combine(rng_detail::mix64(seed ^ 0x6a09e667f3bcc908ull),
                                    static_cast<std::uint64_t>(label))};
    }
    rng_key chain(std::uint64_t v) const { return {rng_detail::combine(state, v)}; }
    rng_key chain(std::int64_t a, std::int64_t b) const {
        return {rng_detail::combine(rng_detail::combine(state, static_cast<std::uint64_t>(a)),
                                    static_cast<std::uint64_t>(b))};
    }
    std::uint64_t u64(std::uint64_t counter) const {
        return rng_detail::mix64(state + counter * rng_detail::golden);
    }
};

// Uniform in (0,1]; never returns 0 so it is safe inside log().
inline double uniform_open(const rng_key& k, std::uint64_t ctr) {
    return (static_cast<double>(k.u64(ctr) >> 11) + 1.0) * 0x1.0p-53;
}

// Uniform in [0,1).
inline double uniform(const rng_key& k, std::uint64_t ctr) {
    return static_cast<double>(k.u64(ctr) >> 11) * 0x1.0p-53;
}

// One standard normal per (key, index) via Box-Muller; two uniforms consumed.
inline double gaussian(const rng_key& k, std::uint64_t idx) {
    const double u1 = uniform_open(k, 2 * idx);
    const double u2 = uniform(k, 2 * idx + 1);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

// Sequential generator view over a key, for code that wants a cursor.
class rng_stream {
  public:
    explicit rng_stream(rng_key key) : key_(key) {}
    std::uint64_t next_u64() { return key_.u64(ctr_++); }
    double next_uniform() { return (static_cast<double>(next_u64() >> 11)) * 0x1.0p-53; }
    double next_uniform_open() { return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53; }
    double next_gaussian() {
        const double u1 = next_uniform_open();
        const double u2 = next_uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }
    // Poisson count; exact for any mean. Large means split by additivity,
    // small ones use Knuth's product method.
    std::uint64_t next_poisson(double mean) {
        std::uint64_t total = 0;
        while (mean > 30.0) {
            double half = mean * 0.5;
            total += next_poisson_small_(half);
            mean -= half;
        }
        return total + next_poisson_small_(mean);
    }

  private:
    std::uint64_t next_poisson_small_(double mean) {
        if (mean <= 0.0) return 0;
        const double limit = std::exp(-mean);
        double prod = 1.0;
        std::uint64_t n = 0;
        do {
            prod *= next_uniform_open();
            if (prod <= limit) break;
            ++n;
        } while (true);
        return n;
    }

    rng_key key_;
    std::uint64_t ctr_ = 0;
};

}
