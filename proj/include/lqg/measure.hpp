#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <tuple>

#include "lqg/field.hpp"
#include "lqg/geometry.hpp"

namespace lqg {

enum class measure_normalization : std::uint32_t { lqg = 0, gmc = 1 };

// Cell masses of the volume measure built from a field grid. Nodes whose
// mollification circle does not fit in the window carry mass zero; the
// margin width is recorded so callers can stay inside it.
struct measure_grid {
    lattice lat;
    grid2<double> masses;
    double gamma = 0.0;
    double epsilon = 0.0;
    measure_normalization normalization = measure_normalization::lqg;
    double total_mass = 0.0;
    int margin_cells = 0;
};

namespace measure_detail {

inline void check_gamma(double gamma) {
    // gamma = 0 is the documented flat baseline (unit masses, unit weights);
    // anything else outside (0,2) is rejected.
    if (gamma < 0.0 || gamma >= 2.0)
        throw parameter_error("gamma", "(0,2)", "gamma must lie in (0,2)");
}

// Monte Carlo variance of the mollified field at a reference cell, cached
// per configuration. The smooth part of the covariance has no closed form
// for the implemented kernel, so the GMC normalization measures it once:
// >= 10^4 replicas of a small field patch around a reference point.
inline double gmc_circle_variance(int band_a, int band_b, double spacing, double epsilon,
                                  const field_config& cfg, int n_nodes) {
    struct key_t {
        int a, b, nodes, factor;
        std::int64_t sp, eps;
        bool operator<(const key_t& o) const {
            return std::tie(a, b, nodes, factor, sp, eps) <
                   std::tie(o.a, o.b, o.nodes, o.factor, o.sp, o.eps);
        }
    };
    static std::mutex mu;
    static std::map<key_t, double> cache;
    const key_t key{band_a, band_b, n_nodes, cfg.noise_factor,
                    static_cast<std::int64_t>(spacing * 1e15),
                    static_cast<std::int64_t>(epsilon * 1e15)};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }

    constexpr int n_replicas = 10000;
    // Seed fixed by the configuration, not by the caller's field: the
    // normalizer is part of the measure definition and must reproduce.
    const std::uint64_t var_seed =
        rng_key::root(0xc0ffee, stream::gmc_variance).chain(band_a, band_b).state ^
        static_cast<std::uint64_t>(key.eps);
    const rect window = rect::centered({0.0, 0.0}, epsilon + 4 * spacing);
    double sum = 0.0, sum2 = 0.0;
    for (int r = 0; r < n_replicas; ++r) {
        const auto f = sample_star_field(band_a, band_b, window, spacing,
                                         rng_key{var_seed}.chain(r).state, cfg);
        const double v = circle_average(f, {0.0, 0.0}, epsilon, n_nodes);
        sum += v;
        sum2 += v * v;
    }
    const double mean = sum / n_replicas;
    const double var = sum2 / n_replicas - mean * mean;
    {
        std::lock_guard<std::mutex> lock(mu);
        cache[key] = var;
    }
    return var;
}

}

/// Build the volume measure from a field:
///   lqg:  mass = eps^{gamma^2/2} e^{gamma h_eps(z)} spacing^2
///   gmc:  mass = e^{gamma h_eps(z) - (gamma^2/2) Var h_eps} spacing^2
/// with h_eps the circle average of the field at the cell center.
inline measure_grid build_measure(const field_grid& field, double gamma, double epsilon,
                                  measure_normalization norm = measure_normalization::lqg,
                                  int n_nodes = 64) {
    measure_detail::check_gamma(gamma);
    const double sp = field.spacing();
    if (epsilon < 2.0 * sp * (1.0 - 1e-12))
        throw resolution_error("build_measure: epsilon below 2*spacing");
    const double ratio = epsilon / sp;
    const double l2 = std::log2(ratio);
    if (std::abs(l2 - std::round(l2)) > 1e-9)
        throw parameter_error("epsilon", "spacing * 2^k",
                              "epsilon must be a dyadic multiple of the grid spacing");

    measure_grid m;
    m.lat = field.lat;
    m.masses = grid2<double>(m.lat.nx, m.lat.ny, 0.0);
    m.gamma = gamma;
    m.epsilon = epsilon;
    m.normalization = norm;
    m.margin_cells = static_cast<int>(std::ceil(epsilon / sp)) + 1;

    double log_prefactor;
    if (norm == measure_normalization::lqg) {
        log_prefactor = 0.5 * gamma * gamma * std::log(epsilon);
    } else {
        const double var =
            (gamma == 0.0) ? 0.0
                           : measure_detail::gmc_circle_variance(field.band_a, field.band_b, sp,
                                                                 epsilon, field.config, n_nodes);
        log_prefactor = -0.5 * gamma * gamma * var;
    }
    const double cell_area = sp * sp;

    for (int j = m.margin_cells; j < m.lat.ny - m.margin_cells; ++j)
        for (int i = m.margin_cells; i < m.lat.nx - m.margin_cells; ++i) {
            const double h = circle_average(field, m.lat.pos(i, j), epsilon, n_nodes);
            m.masses.at(i, j) = std::exp(gamma * h + log_prefactor) * cell_area;
        }
    for (double v : m.masses.v) m.total_mass += v;
    return m;
}

/// Sum of cell masses over a mask. Additive over disjoint masks.
inline double region_volume(const measure_grid& m, const cell_mask& mask) {
    if (!mask.same_shape(m.lat.nx, m.lat.ny))
        throw shape_error("region_volume: mask dimensions do not match the measure grid");
    double acc = 0.0;
    for (std::size_t n = 0; n < mask.bits.size(); ++n)
        if (mask.bits[n]) acc += m.masses.v[n];
    return acc;
}

// ---- containers and CSV -----------------------------------------------------

inline void save_measure(const measure_grid& m, std::ostream& os) {
    using namespace io_detail;
    write_bytes(os, "LQGM", 4);
    write_pod<std::uint32_t>(os, 1);
    write_pod<double>(os, m.gamma);
    write_pod<double>(os, m.epsilon);
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(m.normalization));
    write_pod<double>(os, m.lat.spacing);
    write_pod<double>(os, m.lat.origin.x);
    write_pod<double>(os, m.lat.origin.y);
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.lat.nx));
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(m.lat.ny));
    write_pod<double>(os, m.total_mass);
    write_pod<std::int32_t>(os, m.margin_cells);
    write_bytes(os, m.masses.v.data(), m.masses.v.size() * sizeof(double));
}

inline measure_grid load_measure(std::istream& is) {
    using namespace io_detail;
    expect_magic(is, "LQGM");
    if (read_pod<std::uint32_t>(is) != 1) throw error("LQGM: unsupported version");
    measure_grid m;
    m.gamma = read_pod<double>(is);
    m.epsilon = read_pod<double>(is);
    m.normalization = static_cast<measure_normalization>(read_pod<std::uint32_t>(is));
    m.lat.spacing = read_pod<double>(is);
    m.lat.origin.x = read_pod<double>(is);
    m.lat.origin.y = read_pod<double>(is);
    m.lat.nx = static_cast<int>(read_pod<std::uint64_t>(is));
    m.lat.ny = static_cast<int>(read_pod<std::uint64_t>(is));
    m.total_mass = read_pod<double>(is);
    m.margin_cells = read_pod<std::int32_t>(is);
    m.masses = grid2<double>(m.lat.nx, m.lat.ny);
    is.read(reinterpret_cast<char*>(m.masses.v.data()),
            static_cast<std::streamsize>(m.masses.v.size() * sizeof(double)));
    if (!is) throw error("LQGM: truncated payload");
    return m;
}

}
