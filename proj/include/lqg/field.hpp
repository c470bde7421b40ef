#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include "lqg/errors.hpp"
#include "lqg/fft.hpp"
#include "lqg/geometry.hpp"
#include "lqg/kernel.hpp"
#include "lqg/rng.hpp"

namespace lqg {

// Scale-band fields phi_n synthesized from space-time white noise convolved
// with the bump kernel over t in [e^{-n}, e^{-(n-1)}]. The noise lives on a
// virtual infinite lattice of spacing e^{-n}/noise_factor whose cell values
// are a pure function of (seed, band, quadrature node, cell index): grids
// over different windows, and isolated-point evaluations, all see the same
// realization for equal seeds.

struct field_config {
    int noise_factor = 16;  // noise lattice cells per band scale e^{-n}

    double noise_spacing(int band) const {
        return std::exp(-static_cast<double>(band)) / noise_factor;
    }
};

struct singularity {
    vec2 center;
    double alpha = 0.0;
    double cap_radius = 0.0;
};

struct band_field {
    int band_index = 0;
    lattice lat;
    grid2<double> values;
    std::vector<double> quadrature_nodes;
};

struct field_grid {
    lattice lat;
    grid2<double> values;
    int band_a = 0, band_b = 0;
    std::vector<singularity> singularities;
    bool unit_circle_normalized = false;
    std::uint64_t seed = 0;
    field_config config;

    double spacing() const { return lat.spacing; }
    rect window() const { return lat.bounds(); }
    double value_at(const vec2& p) const { return bilinear(values, lat, p); }
};

namespace field_detail {

inline rng_key band_noise_key(std::uint64_t seed, int band, int node) {
    return rng_key::root(seed, stream::band_noise)
        .chain(static_cast<std::uint64_t>(band))
        .chain(static_cast<std::uint64_t>(node));
}

// White-noise cells are generated in Box-Muller pairs (the sine and cosine
// halves belong to horizontally adjacent cells), which halves the
// transcendental work of bulk fills. Cell values remain a pure function of
// (band key, global cell index).
struct noise_pair {
    double even, odd;
};

inline noise_pair noise_cell_pair(const rng_key& row_key, std::int64_t pair_index) {
    const rng_key k = row_key.chain(static_cast<std::uint64_t>(pair_index));
    const double u1 = uniform_open(k, 0);
    const double u2 = uniform(k, 1);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return {radius * std::cos(angle), radius * std::sin(angle)};
}

// Cursor over one noise row; consecutive queries reuse the current pair.
struct noise_row {
    rng_key row_key;
    std::int64_t cached_pair = std::numeric_limits<std::int64_t>::min();
    noise_pair cached{};

    noise_row(const rng_key& band_key, std::int64_t cj) : row_key(band_key.chain(cj)) {}

    double value(std::int64_t ci) {
        const std::int64_t pair = ci >> 1;  // arithmetic shift: floor pairing
        if (pair != cached_pair) {
            cached = noise_cell_pair(row_key, pair);
            cached_pair = pair;
        }
        return (ci & 1) ? cached.odd : cached.even;
    }
};

inline double noise_cell_value(const rng_key& band_key, std::int64_t ci, std::int64_t cj) {
    noise_row row(band_key, cj);
    return row.value(ci);
}

// Output lattice spanning `window` at `spacing`, anchored at window.lo.
inline lattice make_lattice(const rect& window, double spacing) {
    lattice lat;
    lat.origin = window.lo;
    lat.spacing = spacing;
    lat.nx = static_cast<int>(std::floor(window.width() / spacing + 1e-9)) + 1;
    lat.ny = static_cast<int>(std::floor(window.height() / spacing + 1e-9)) + 1;
    return lat;
}

// Band realization on its own noise lattice, covering `window` expanded by
// the kernel radius so every value inside `window` sees its full stencil.
struct band_patch {
    double delta = 0.0;            // noise spacing
    std::int64_t ci0 = 0, cj0 = 0; // global index of patch cell (0,0)
    int ncx = 0, ncy = 0;
    grid2<double> values;          // band field at noise-lattice nodes

    vec2 pos(int i, int j) const {
        return {(ci0 + i) * delta, (cj0 + j) * delta};
    }
    double interpolate(const vec2& p) const {
        const double gx = p.x / delta - ci0;
        const double gy = p.y / delta - cj0;
        const int i = static_cast<int>(std::floor(gx));
        const int j = static_cast<int>(std::floor(gy));
        if (i < 0 || j < 0 || i > ncx - 2 || j > ncy - 2)
            throw out_of_domain_error("band_patch: interpolation outside synthesized patch");
        const double fx = gx - i, fy = gy - j;
        return values.at(i, j) * (1 - fx) * (1 - fy) + values.at(i + 1, j) * fx * (1 - fy) +
               values.at(i, j + 1) * (1 - fx) * fy + values.at(i + 1, j + 1) * fx * fy;
    }
};

// Kernel spectra depend only on (band, node, transform shape, spacing), so
// replicas share them.
struct kernel_spectrum_cache {
    std::mutex mu;
    std::map<std::tuple<int, int, int, int>, std::shared_ptr<fft::complex_buffer>> entries;

    static kernel_spectrum_cache& instance() {
        static kernel_spectrum_cache c;
        return c;
    }
};

// Spectral synthesis of one band over `window`. The four quadrature-node
// noise fields are transformed, multiplied by their kernel spectra and
// summed, so each band costs four forward transforms and one inverse.
inline band_patch synthesize_band(int n, const rect& window, std::uint64_t seed,
                                  const field_config& cfg) {
    const kernel_spec kernel;
    const auto nodes = band_quadrature::nodes(n);
    const double t_max = nodes.back().t;
    const double rad_max = t_max * kernel.support_radius;  // kernel radius at coarsest t

    band_patch patch;
    patch.delta = cfg.noise_spacing(n);
    const double pad = rad_max + 2 * patch.delta;
    patch.ci0 = static_cast<std::int64_t>(std::floor((window.lo.x - pad) / patch.delta));
    patch.cj0 = static_cast<std::int64_t>(std::floor((window.lo.y - pad) / patch.delta));
    const auto ci1 = static_cast<std::int64_t>(std::ceil((window.hi.x + pad) / patch.delta));
    const auto cj1 = static_cast<std::int64_t>(std::ceil((window.hi.y + pad) / patch.delta));
    patch.ncx = static_cast<int>(ci1 - patch.ci0) + 1;
    patch.ncy = static_cast<int>(cj1 - patch.cj0) + 1;

    const int fx = fft::next_fft_size(patch.ncx);
    const int fy = fft::next_fft_size(patch.ncy);
    const std::size_t n_real = static_cast<std::size_t>(fx) * fy;
    const std::size_t n_cplx = static_cast<std::size_t>(fx / 2 + 1) * fy;

    fft::real_buffer work(n_real);
    fft::complex_buffer spec(n_cplx);
    fft::complex_buffer acc(n_cplx);
    std::memset(acc.get(), 0, sizeof(fftw_complex) * n_cplx);

    for (int j = 0; j < band_quadrature::nodes_per_band; ++j) {
        const rng_key key = band_noise_key(seed, n, j);
        // White noise: cell integral is delta * N(0,1).
        std::memset(work.get(), 0, sizeof(double) * n_real);
        for (int cy = 0; cy < patch.ncy; ++cy) {
            noise_row row(key, patch.cj0 + cy);
            double* dst = work.get() + static_cast<std::size_t>(cy) * fx;
            for (int cx = 0; cx < patch.ncx; ++cx) dst[cx] = row.value(patch.ci0 + cx);
        }
        fft::forward_r2c(fx, fy, work.get(), spec.get());

        // Kernel image for this node, wrapped into the transform grid. In
        // noise-lattice units the geometry depends only on (noise_factor,
        // node, transform shape) -- the band index scales out -- so the
        // spectrum is cached across bands and replicas with n-independent
        // bytes.
        std::shared_ptr<fft::complex_buffer> kspec;
        const auto cache_key = std::make_tuple(cfg.noise_factor, j, fx, fy);
        {
            auto& cache = kernel_spectrum_cache::instance();
            std::lock_guard<std::mutex> lock(cache.mu);
            auto it = cache.entries.find(cache_key);
            if (it != cache.entries.end()) kspec = it->second;
        }
        if (!kspec) {
            // Kernel radius in noise cells: rho = t / delta, canonical form.
            const double rho = cfg.noise_factor *
                               std::exp((j + 0.5) / static_cast<double>(band_quadrature::nodes_per_band));
            const int rc = static_cast<int>(std::ceil(rho * kernel.support_radius));
            std::memset(work.get(), 0, sizeof(double) * n_real);
            for (int dy = -rc; dy <= rc; ++dy) {
                const int wy = (dy % fy + fy) % fy;
                for (int dx = -rc; dx <= rc; ++dx) {
                    const double kv =
                        kernel.from_r2((dx * dx + dy * dy) / (rho * rho));
                    if (kv == 0.0) continue;
                    const int wx = (dx % fx + fx) % fx;
                    work.get()[static_cast<std::size_t>(wy) * fx + wx] = kv;
                }
            }
            kspec = std::make_shared<fft::complex_buffer>(n_cplx);
            fft::forward_r2c(fx, fy, work.get(), kspec->get());
            auto& cache = kernel_spectrum_cache::instance();
            std::lock_guard<std::mutex> lock(cache.mu);
            cache.entries.emplace(cache_key, kspec);
        }

        const double coeff = nodes[j].weight * patch.delta / n_real;  // includes FFTW 1/N
        for (std::size_t m = 0; m < n_cplx; ++m) {
            const double ar = spec.get()[m][0], ai = spec.get()[m][1];
            const double br = kspec->get()[m][0] * coeff, bi = kspec->get()[m][1] * coeff;
            acc.get()[m][0] += ar * br - ai * bi;
            acc.get()[m][1] += ar * bi + ai * br;
        }
    }

    fft::backward_c2r(fx, fy, acc.get(), work.get());
    patch.values = grid2<double>(patch.ncx, patch.ncy);
    for (int cy = 0; cy < patch.ncy; ++cy)
        for (int cx = 0; cx < patch.ncx; ++cx)
            patch.values.at(cx, cy) = work.get()[static_cast<std::size_t>(cy) * fx + cx];
    return patch;
}

inline void check_band_window(int n, const rect& window, double spacing) {
    const double scale = std::exp(-static_cast<double>(n));
    if (spacing > scale / 8.0 * (1.0 + 1e-12))
        throw resolution_error("band " + std::to_string(n) + ": spacing " +
                               std::to_string(spacing) + " too coarse, need <= e^-n/8 = " +
                               std::to_string(scale / 8.0));
    const kernel_spec kernel;
    const double rad = std::exp(-static_cast<double>(n - 1)) * kernel.support_radius;
    if (window.width() < rad || window.height() < rad)
        throw out_of_domain_error("band " + std::to_string(n) +
                                  ": window smaller than the kernel support at this scale");
}

}

/// Sample the scale-n band field over `window` at `spacing` (<= e^{-n}/8).
inline band_field sample_band_field(int n, const rect& window, double spacing,
                                    std::uint64_t seed, const field_config& cfg = {}) {
    if (n < 1) throw parameter_error("band", ">= 1", "band index must be positive");
    field_detail::check_band_window(n, window, spacing);

    band_field out;
    out.band_index = n;
    out.lat = field_detail::make_lattice(window, spacing);
    out.values = grid2<double>(out.lat.nx, out.lat.ny);
    for (const auto& nd : band_quadrature::nodes(n)) out.quadrature_nodes.push_back(nd.t);

    const auto patch = field_detail::synthesize_band(n, out.lat.bounds(), seed, cfg);
    for (int j = 0; j < out.lat.ny; ++j)
        for (int i = 0; i < out.lat.nx; ++i)
            out.values.at(i, j) = patch.interpolate(out.lat.pos(i, j));
    return out;
}

/// Sample phi_{a,b} = phi_{a+1} + ... + phi_b over `window`. a >= b gives the
/// identically-zero field. Bit-identical to summing sample_band_field results
/// for the same seed in band order.
inline field_grid sample_star_field(int a, int b, const rect& window, double spacing,
                                    std::uint64_t seed, const field_config& cfg = {}) {
    if (a < 0) throw parameter_error("band_a", ">= 0", "initial band must be >= 0");
    field_grid out;
    out.lat = field_detail::make_lattice(window, spacing);
    out.values = grid2<double>(out.lat.nx, out.lat.ny, 0.0);
    out.band_a = a;
    out.band_b = b;
    out.seed = seed;
    out.config = cfg;
    if (a >= b) return out;  // zero field by convention

    field_detail::check_band_window(b, window, spacing);
    for (int n = a + 1; n <= b; ++n) {
        const auto patch = field_detail::synthesize_band(n, out.lat.bounds(), seed, cfg);
        for (int j = 0; j < out.lat.ny; ++j)
            for (int i = 0; i < out.lat.nx; ++i)
                out.values.at(i, j) += patch.interpolate(out.lat.pos(i, j));
    }
    return out;
}

/// Mean of the bilinearly interpolated field over n_nodes equally spaced
/// points of the circle |z - center| = radius.
inline double circle_average(const field_grid& field, const vec2& center, double radius,
                             int n_nodes = 64) {
    if (n_nodes < 64)
        throw precondition_error("circle_average: need at least 64 nodes");
    if (radius < 2.0 * field.spacing() * (1.0 - 1e-12))
        throw precondition_error("circle_average: radius below 2*spacing");
    double acc = 0.0;
    for (int m = 0; m < n_nodes; ++m) {
        const double th = 2.0 * std::numbers::pi * m / n_nodes;
        const vec2 p{center.x + radius * std::cos(th), center.y + radius * std::sin(th)};
        acc += field.value_at(p);  // throws out_of_domain_error if the circle exits
    }
    return acc / n_nodes;
}

/// Add a log singularity alpha*log|z - center|^{-1}, clamped inside
/// cap_radius (default 2*spacing) so grid masses stay finite.
inline field_grid add_log_singularity(field_grid field, const vec2& center, double alpha,
                                      double cap_radius = 0.0) {
    if (!field.window().contains(center))
        throw out_of_domain_error("add_log_singularity: center outside window");
    if (cap_radius == 0.0) cap_radius = 2.0 * field.spacing();
    if (cap_radius < field.spacing())
        throw precondition_error("add_log_singularity: cap_radius below grid spacing");
    for (int j = 0; j < field.lat.ny; ++j)
        for (int i = 0; i < field.lat.nx; ++i) {
            const double r = std::max(dist(field.lat.pos(i, j), center), cap_radius);
            field.values.at(i, j) += alpha * std::log(1.0 / r);
        }
    field.singularities.push_back({center, alpha, cap_radius});
    return field;
}

/// Shift the whole field by a constant.
inline field_grid shift_field(field_grid field, double c) {
    for (auto& v : field.values.v) v += c;
    return field;
}

/// Apply the large-scale normalization convention: subtract the average of
/// the field over the unit circle (requires the circle inside the window).
inline void normalize_unit_circle(field_grid& field) {
    const double m = circle_average(field, {0.0, 0.0}, 1.0, 256);
    for (auto& v : field.values.v) v -= m;
    field.unit_circle_normalized = true;
}

// Evaluation of phi_{a,b} at isolated points by direct quadrature of the
// noise integral over the kernel's support cylinder. Shares the virtual
// noise lattice with the grid synthesizer: same seed, same realization.
class point_field_sampler {
  public:
    point_field_sampler(std::uint64_t seed, field_config cfg = {}) : seed_(seed), cfg_(cfg) {}

    double eval_band(int n, const vec2& p) const {
        const kernel_spec kernel;
        const double delta = cfg_.noise_spacing(n);
        double total = 0.0;
        for (int j = 0; j < band_quadrature::nodes_per_band; ++j) {
            const auto nd = band_quadrature::nodes(n)[j];
            const double rad = nd.t * kernel.support_radius;
            const rng_key key = field_detail::band_noise_key(seed_, n, j);
            const auto ci0 = static_cast<std::int64_t>(std::floor((p.x - rad) / delta));
            const auto ci1 = static_cast<std::int64_t>(std::ceil((p.x + rad) / delta));
            const auto cj0 = static_cast<std::int64_t>(std::floor((p.y - rad) / delta));
            const auto cj1 = static_cast<std::int64_t>(std::ceil((p.y + rad) / delta));
            const double inv_t2 = 1.0 / (nd.t * nd.t);
            double acc = 0.0;
            for (std::int64_t cj = cj0; cj <= cj1; ++cj) {
                const double dy = p.y - cj * delta;
                field_detail::noise_row row(key, cj);
                for (std::int64_t ci = ci0; ci <= ci1; ++ci) {
                    const double dx = p.x - ci * delta;
                    const double kv = kernel.from_r2((dx * dx + dy * dy) * inv_t2);
                    if (kv == 0.0) continue;
                    acc += kv * row.value(ci);
                }
            }
            total += nd.weight * delta * acc;
        }
        return total;
    }

    // phi_{a,b}(p); zero when a >= b.
    double eval_range(int a, int b, const vec2& p) const {
        double acc = 0.0;
        for (int n = a + 1; n <= b; ++n) acc += eval_band(n, p);
        return acc;
    }

    std::uint64_t seed() const { return seed_; }
    const field_config& config() const { return cfg_; }

  private:
    std::uint64_t seed_;
    field_config cfg_;
};

// ---- flat binary container ("LQGF") ----------------------------------------

namespace io_detail {

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}
template <class T>
void write_pod(std::ostream& os, const T& v) {
    write_bytes(os, &v, sizeof(T));
}
template <class T>
T read_pod(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw error("container: truncated stream");
    return v;
}
inline void expect_magic(std::istream& is, const char* magic) {
    char m[4];
    is.read(m, 4);
    if (!is || std::memcmp(m, magic, 4) != 0)
        throw error(std::string("container: bad magic, expected ") + magic);
}

}

inline void save_field(const field_grid& f, std::ostream& os) {
    using namespace io_detail;
    static_assert(std::endian::native == std::endian::little,
                  "container format is little-endian");
    write_bytes(os, "LQGF", 4);
    write_pod<std::uint32_t>(os, 1);
    write_pod<std::int32_t>(os, f.band_a);
    write_pod<std::int32_t>(os, f.band_b);
    write_pod<double>(os, f.lat.spacing);
    write_pod<double>(os, f.lat.origin.x);
    write_pod<double>(os, f.lat.origin.y);
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(f.lat.nx));
    write_pod<std::uint64_t>(os, static_cast<std::uint64_t>(f.lat.ny));
    write_pod<std::uint32_t>(os, static_cast<std::uint32_t>(f.singularities.size()));
    for (const auto& s : f.singularities) {
        write_pod<double>(os, s.center.x);
        write_pod<double>(os, s.center.y);
        write_pod<double>(os, s.alpha);
        write_pod<double>(os, s.cap_radius);
    }
    write_bytes(os, f.values.v.data(), f.values.v.size() * sizeof(double));
}

inline field_grid load_field(std::istream& is) {
    using namespace io_detail;
    expect_magic(is, "LQGF");
    const auto version = read_pod<std::uint32_t>(is);
    if (version != 1) throw error("LQGF: unsupported version");
    field_grid f;
    f.band_a = read_pod<std::int32_t>(is);
    f.band_b = read_pod<std::int32_t>(is);
    f.lat.spacing = read_pod<double>(is);
    f.lat.origin.x = read_pod<double>(is);
    f.lat.origin.y = read_pod<double>(is);
    f.lat.nx = static_cast<int>(read_pod<std::uint64_t>(is));
    f.lat.ny = static_cast<int>(read_pod<std::uint64_t>(is));
    const auto ns = read_pod<std::uint32_t>(is);
    for (std::uint32_t k = 0; k < ns; ++k) {
        singularity s;
        s.center.x = read_pod<double>(is);
        s.center.y = read_pod<double>(is);
        s.alpha = read_pod<double>(is);
        s.cap_radius = read_pod<double>(is);
        f.singularities.push_back(s);
    }
    f.values = grid2<double>(f.lat.nx, f.lat.ny);
    is.read(reinterpret_cast<char*>(f.values.v.data()),
            static_cast<std::streamsize>(f.values.v.size() * sizeof(double)));
    if (!is) throw error("LQGF: truncated payload");
    return f;
}

inline void save_field(const field_grid& f, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw error("cannot open " + path);
    save_field(f, os);
}

inline field_grid load_field(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw error("cannot open " + path);
    return load_field(is);
}

}
