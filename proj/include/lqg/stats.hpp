#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "lqg/errors.hpp"
#include "lqg/geometry.hpp"
#include "lqg/rng.hpp"

namespace lqg {

inline double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / v.size();
}

inline double variance_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / (v.size() - 1);
}

inline double median_of(std::vector<double> v) {
    if (v.empty()) throw error("median of empty sample");
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// Standard normal CDF.
inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

struct line_fit {
    double slope = 0.0;
    double intercept = 0.0;
    double slope_stderr = 0.0;
};

inline line_fit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
    const auto n = x.size();
    if (n < 2 || y.size() != n) throw error("fit_line: need >= 2 paired points");
    double sx = 0, sy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / n, my = sy / n;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < n; ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx == 0.0) throw error("fit_line: degenerate abscissae");
    line_fit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    if (n > 2) {
        double ss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const double r = y[i] - (f.intercept + f.slope * x[i]);
            ss += r * r;
        }
        f.slope_stderr = std::sqrt(ss / (n - 2) / sxx);
    }
    return f;
}

// Percentile bootstrap half-width (95%) for a statistic of one sample.
template <class Stat>
double bootstrap_halfwidth(const std::vector<double>& sample, Stat&& stat, int n_boot,
                           std::uint64_t seed) {
    if (sample.size() < 2 || n_boot < 8) return 0.0;
    std::vector<double> reps(n_boot);
    std::vector<double> resampled(sample.size());
    for (int b = 0; b < n_boot; ++b) {
        rng_stream rs(rng_key::root(seed, stream::bootstrap).chain(b));
        for (std::size_t i = 0; i < sample.size(); ++i)
            resampled[i] = sample[static_cast<std::size_t>(rs.next_uniform() * sample.size()) %
                                  sample.size()];
        reps[b] = stat(resampled);
    }
    std::sort(reps.begin(), reps.end());
    const auto lo = reps[static_cast<std::size_t>(0.025 * (n_boot - 1))];
    const auto hi = reps[static_cast<std::size_t>(0.975 * (n_boot - 1))];
    return 0.5 * (hi - lo);
}

// Exact Euclidean distance transform (Felzenszwalb-Huttenlocher), squared
// distances in cell units to the nearest zero cell; used for inscribed radii.
namespace edt_detail {

inline void edt_1d(const std::vector<double>& f, std::vector<double>& d) {
    const int n = static_cast<int>(f.size());
    d.assign(n, 0.0);
    std::vector<int> v(n);
    std::vector<double> z(n + 1);
    int k = 0;
    v[0] = 0;
    z[0] = -1e300;
    z[1] = 1e300;
    for (int q = 1; q < n; ++q) {
        double s;
        while (true) {
            s = ((f[q] + q * q) - (f[v[k]] + v[k] * v[k])) / (2.0 * q - 2.0 * v[k]);
            if (s <= z[k]) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = 1e300;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        d[q] = (q - v[k]) * (q - v[k]) + f[v[k]];
    }
}

}

inline grid2<double> squared_distance_transform(const cell_mask& mask) {
    const int nx = mask.nx, ny = mask.ny;
    grid2<double> d(nx, ny);
    constexpr double big = 1e300;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) d.at(i, j) = mask.get(i, j) ? big : 0.0;
    std::vector<double> col(ny), out(ny);
    for (int i = 0; i < nx; ++i) {
        for (int j = 0; j < ny; ++j) col[j] = d.at(i, j);
        edt_detail::edt_1d(col, out);
        for (int j = 0; j < ny; ++j) d.at(i, j) = out[j];
    }
    std::vector<double> row(nx), rout(nx);
    for (int j = 0; j < ny; ++j) {
        for (int i = 0; i < nx; ++i) row[i] = d.at(i, j);
        edt_detail::edt_1d(row, rout);
        for (int i = 0; i < nx; ++i) d.at(i, j) = rout[i];
    }
    return d;
}

// Largest inscribed Euclidean radius of a mask, in physical units. The
// boundary of the window counts as complement so truncated masks do not
// overstate their radius.
inline double inscribed_radius(const cell_mask& mask, double spacing) {
    const auto d2 = squared_distance_transform(mask);
    double best = 0.0;
    for (int j = 0; j < mask.ny; ++j)
        for (int i = 0; i < mask.nx; ++i)
            if (mask.get(i, j)) {
                const double edge =
                    1.0 + std::min(std::min(i, mask.nx - 1 - i), std::min(j, mask.ny - 1 - j));
                best = std::max(best, std::min(d2.at(i, j), edge * edge));
            }
    return std::sqrt(best) * spacing;
}

// Euclidean diameter of a mask via its convex hull (rotating calipers are
// unnecessary at these sizes; the hull keeps it quadratic-safe).
inline double mask_diameter(const cell_mask& mask, const lattice& lat) {
    std::vector<vec2> pts;
    for (int j = 0; j < mask.ny; ++j)
        for (int i = 0; i < mask.nx; ++i)
            if (mask.get(i, j)) {
                // Only boundary cells of the mask matter for the diameter.
                bool edge = i == 0 || j == 0 || i == mask.nx - 1 || j == mask.ny - 1;
                if (!edge) {
                    edge = !mask.get(i - 1, j) || !mask.get(i + 1, j) || !mask.get(i, j - 1) ||
                           !mask.get(i, j + 1);
                }
                if (edge) pts.push_back(lat.pos(i, j));
            }
    if (pts.size() < 2) return 0.0;
    std::sort(pts.begin(), pts.end(), [](const vec2& a, const vec2& b) {
        return a.x < b.x || (a.x == b.x && a.y < b.y);
    });
    auto cross = [](const vec2& o, const vec2& a, const vec2& b) {
        return (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x);
    };
    std::vector<vec2> hull(2 * pts.size());
    std::size_t k = 0;
    for (const auto& p : pts) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], p) <= 0) --k;
        hull[k++] = p;
    }
    const std::size_t lower = k + 1;
    for (auto it = pts.rbegin() + 1; it != pts.rend(); ++it) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], *it) <= 0) --k;
        hull[k++] = *it;
    }
    hull.resize(k > 0 ? k - 1 : 0);
    double best = 0.0;
    for (std::size_t a = 0; a < hull.size(); ++a)
        for (std::size_t b = a + 1; b < hull.size(); ++b)
            best = std::max(best, dist(hull[a], hull[b]));
    return best;
}

}
