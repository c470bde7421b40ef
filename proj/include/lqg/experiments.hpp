#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <tuple>
#include <vector>

#include "lqg/cluster.hpp"
#include "lqg/field.hpp"
#include "lqg/lbm.hpp"
#include "lqg/measure.hpp"
#include "lqg/metric.hpp"
#include "lqg/parallel.hpp"
#include "lqg/stats.hpp"
#include "lqg/voronoi.hpp"

namespace lqg {

// Desk-scale measurements: scaling fits, moment and tail estimation,
// Minkowski counts, flat-disk integrals and inscribed-ball statistics.
// gamma = 0 runs every pipeline against the flat baseline (zero field,
// calibration 1, Lebesgue masses).

// Field/measure/metric stack shared by the experiments.
struct pipeline_config {
    double gamma = std::sqrt(8.0 / 3.0);
    double d_gamma = 4.0;
    int resolution = 256;      // cells per side of the analysis window
    double half_width = 1.15;  // analysis window is [-hw, hw]^2
    int band_a = 0;
    int band_b = -1;  // -1: deepest band resolvable at this resolution
    double epsilon_factor = 4.0;
    bool normalize_field = true;  // unit-circle average subtracted
    bool calibrate = true;
    double calibration = 1.0;  // used when calibrate is false
    int n_cal_samples = 200;
    measure_normalization norm = measure_normalization::lqg;
    field_config field_cfg{};

    double spacing() const { return 2.0 * half_width / resolution; }
    double epsilon() const { return epsilon_factor * spacing(); }
    int bands() const {
        if (gamma == 0.0) return band_a;  // flat: zero field via empty band range
        if (band_b >= 0) return band_b;
        return static_cast<int>(std::floor(std::log(1.0 / (8.0 * spacing()))));
    }
    void validate() const {
        if (gamma < 0.0 || gamma >= 2.0)
            throw parameter_error("gamma", "(0,2)", "gamma must lie in (0,2); 0 is the flat baseline");
        if (gamma > 0.0 && d_gamma <= 2.0)
            throw parameter_error("d_gamma", "> 2", "dimension input must exceed 2");
        if (resolution < 16)
            throw parameter_error("resolution", ">= 16", "resolution too small");
        if (epsilon_factor < 2.0)
            throw parameter_error("epsilon_factor", ">= 2", "mollification needs >= 2 cells");
    }
};

namespace exp_detail {

inline std::uint64_t replica_seed(std::uint64_t master, const char* tag, int replica) {
    rng_key k = rng_key::root(master, stream::generic);
    for (const char* c = tag; *c; ++c) k = k.chain(static_cast<std::uint64_t>(*c));
    return k.chain(replica).state;
}

inline field_grid make_field(const pipeline_config& pc, std::uint64_t fseed) {
    const rect win = rect::centered({0.0, 0.0}, pc.half_width);
    field_grid f =
        sample_star_field(pc.band_a, pc.bands(), win, pc.spacing(), fseed, pc.field_cfg);
    if (pc.normalize_field && pc.gamma != 0.0) normalize_unit_circle(f);
    return f;
}

// Calibration constants are expensive (n_cal field replicas plus targeted
// shortest-path queries), so they are computed once per configuration and
// shared process-wide.
inline double pipeline_calibration(const pipeline_config& pc, std::uint64_t seed, int threads) {
    if (!pc.calibrate || pc.gamma == 0.0) return pc.calibration;
    struct key_t {
        double g, d, hw;
        int res, a, b, ncal, nf, norm;
        std::uint64_t seed;
        bool operator<(const key_t& o) const {
            return std::tie(g, d, hw, res, a, b, ncal, nf, norm, seed) <
                   std::tie(o.g, o.d, o.hw, o.res, o.a, o.b, o.ncal, o.nf, o.norm, o.seed);
        }
    };
    static std::mutex mu;
    static std::map<key_t, double> cache;
    const key_t key{pc.gamma,         pc.d_gamma,           pc.half_width,
                    pc.resolution,    pc.band_a,            pc.bands(),
                    pc.n_cal_samples, pc.field_cfg.noise_factor,
                    pc.normalize_field ? 1 : 0, seed};
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    field_grid proto = make_field(pc, exp_detail::replica_seed(seed, "calproto", 0));
    const double c =
        calibrate_constant(proto, pc.gamma, pc.d_gamma, pc.n_cal_samples, seed, threads);
    std::lock_guard<std::mutex> lock(mu);
    cache[key] = c;
    return c;
}

inline metric_graph make_graph(const pipeline_config& pc, const field_grid& f, double cal) {
    metric_graph g = build_metric_graph(f, pc.gamma, pc.gamma == 0.0 ? 4.0 : pc.d_gamma);
    g.set_calibration(cal);
    return g;
}

inline void check_ladder(const std::vector<double>& ladder, const char* name) {
    if (ladder.size() < 4)
        throw parameter_error(name, ">= 4 values", "scale ladder needs at least 4 scales");
    const auto [lo, hi] = std::minmax_element(ladder.begin(), ladder.end());
    if (*hi / *lo < 10.0 * (1.0 - 1e-9))
        throw parameter_error(name, "span >= 1 decade", "scale ladder must span a decade");
}

}

struct scaling_fit {
    std::vector<double> scales;
    std::vector<double> medians;       // median statistic per scale
    std::vector<double> discard_rate;  // fraction of discarded samples per scale
    double slope = 0.0;
    double intercept = 0.0;
    double ci_halfwidth = 0.0;
    int n_replicas = 0;
};

namespace exp_detail {

// Median-based log-log fit with a replica bootstrap for the slope CI.
// `samples[r][s]` may hold NaN for discarded entries.
inline scaling_fit fit_from_samples(const std::vector<double>& scales,
                                    const std::vector<std::vector<double>>& samples,
                                    std::uint64_t seed, double max_discard = 0.2) {
    const int R = static_cast<int>(samples.size());
    const int S = static_cast<int>(scales.size());
    scaling_fit out;
    out.scales = scales;
    out.n_replicas = R;
    std::vector<std::vector<double>> per_scale(S);
    for (int s = 0; s < S; ++s) {
        for (int r = 0; r < R; ++r)
            if (!std::isnan(samples[r][s])) per_scale[s].push_back(samples[r][s]);
        const double discard = 1.0 - static_cast<double>(per_scale[s].size()) / R;
        out.discard_rate.push_back(discard);
        if (discard > max_discard)
            throw resolution_error(
                "scaling fit: more than 20% of samples discarded at scale " +
                std::to_string(scales[s]) +
                "; enlarge the window or refine the resolution");
        out.medians.push_back(median_of(per_scale[s]));
    }
    std::vector<double> lx(S), ly(S);
    for (int s = 0; s < S; ++s) {
        lx[s] = std::log(scales[s]);
        ly[s] = std::log(out.medians[s]);
    }
    const auto fit = fit_line(lx, ly);
    out.slope = fit.slope;
    out.intercept = fit.intercept;

    // Bootstrap over replicas.
    const int n_boot = 200;
    std::vector<double> slopes;
    slopes.reserve(n_boot);
    for (int b = 0; b < n_boot; ++b) {
        rng_stream rs(rng_key::root(seed, stream::bootstrap).chain(b));
        std::vector<std::vector<double>> med(S);
        for (int r = 0; r < R; ++r) {
            const int rr = static_cast<int>(rs.next_uniform() * R) % R;
            for (int s = 0; s < S; ++s)
                if (!std::isnan(samples[rr][s])) med[s].push_back(samples[rr][s]);
        }
        bool ok = true;
        std::vector<double> by(S);
        for (int s = 0; s < S && ok; ++s) {
            if (med[s].empty())
                ok = false;
            else
                by[s] = std::log(median_of(med[s]));
        }
        if (ok) slopes.push_back(fit_line(lx, by).slope);
    }
    if (slopes.size() > 8) {
        std::sort(slopes.begin(), slopes.end());
        const auto lo = slopes[static_cast<std::size_t>(0.025 * (slopes.size() - 1))];
        const auto hi = slopes[static_cast<std::size_t>(0.975 * (slopes.size() - 1))];
        out.ci_halfwidth = 0.5 * (hi - lo);
    }
    return out;
}

}

/// Volume of metric balls about the origin across an s-ladder; fits the
/// median log-volume against log s. Truncated balls are discarded.
inline scaling_fit volume_scaling_fit(const pipeline_config& pc,
                                      const std::vector<double>& s_ladder, int n_replicas,
                                      std::uint64_t seed, int threads = 1) {
    pc.validate();
    exp_detail::check_ladder(s_ladder, "s_ladder");
    const double cal = exp_detail::pipeline_calibration(pc, seed, threads);
    std::vector<std::vector<double>> vols(n_replicas,
                                          std::vector<double>(s_ladder.size(), 0.0));
    parallel_for(n_replicas, threads, [&](int r) {
        const auto f = exp_detail::make_field(pc, exp_detail::replica_seed(seed, "vol", r));
        const auto g = exp_detail::make_graph(pc, f, cal);
        const auto m = build_measure(f, pc.gamma, pc.epsilon(), pc.norm);
        for (std::size_t s = 0; s < s_ladder.size(); ++s) {
            const auto ball = metric_ball(g, {0.0, 0.0}, s_ladder[s]);
            vols[r][s] = ball.truncated ? std::nan("") : region_volume(m, ball);
        }
    });
    return exp_detail::fit_from_samples(s_ladder, vols, seed);
}

/// Quantum exit times of metric balls across an s-ladder; fits median tau
/// against s. dt = 0 picks 4 * spacing^2.
inline scaling_fit exit_time_scaling_fit(const pipeline_config& pc,
                                         const std::vector<double>& s_ladder, int n_replicas,
                                         double dt, std::uint64_t seed, int threads = 1,
                                         int n_paths = 3) {
    pc.validate();
    exp_detail::check_ladder(s_ladder, "s_ladder");
    const double cal = exp_detail::pipeline_calibration(pc, seed, threads);
    const double step = dt > 0.0 ? dt : 4.0 * pc.spacing() * pc.spacing();
    std::vector<std::vector<double>> taus(
        static_cast<std::size_t>(n_replicas) * n_paths,
        std::vector<double>(s_ladder.size(), std::nan("")));
    parallel_for(n_replicas, threads, [&](int r) {
        const auto f = exp_detail::make_field(pc, exp_detail::replica_seed(seed, "exit", r));
        const auto g = exp_detail::make_graph(pc, f, cal);
        for (std::size_t s = 0; s < s_ladder.size(); ++s) {
            const auto ball = metric_ball(g, {0.0, 0.0}, s_ladder[s]);
            if (ball.truncated) continue;
            for (int p = 0; p < n_paths; ++p) {
                const auto res = lbm_exit_time(
                    {0.0, 0.0}, s_ladder[s], f, g, pc.gamma, pc.epsilon(), step,
                    exp_detail::replica_seed(seed, "exitpath", r * 1024 + p));
                if (res.valid) taus[static_cast<std::size_t>(r) * n_paths + p][s] = res.tau;
            }
        }
    });
    return exp_detail::fit_from_samples(s_ladder, taus, seed);
}

struct minkowski_counts {
    std::vector<double> eps;
    std::vector<double> cover_median;  // N_eps
    std::vector<std::vector<double>> cover;            // [replica][eps]
    std::vector<std::vector<double>> pack;             // [replica][eps], with_packing only
    std::vector<std::vector<double>> cover_2eps;       // [replica][eps], with_packing only
    scaling_fit fit;  // slope of log N_eps vs log 1/eps
};

namespace exp_detail {

// Greedy cover of `region` by metric balls of radius eps centered at the
// first uncovered cell in row-major order. Returns the centers.
inline std::vector<int> greedy_cover(const metric_graph& g, const cell_mask& region,
                                     double eps) {
    std::vector<std::uint8_t> covered(g.n_nodes(), 0);
    std::vector<int> centers;
    auto& sc = metric_detail::thread_scratch();
    for (std::size_t n = 0; n < region.bits.size(); ++n) {
        if (!region.bits[n] || covered[n]) continue;
        centers.push_back(static_cast<int>(n));
        metric_detail::run_dijkstra(g, {{static_cast<int>(n), 0.0}}, nullptr, eps, -1, sc,
                                    [&](int u, double) {
                                        covered[u] = 1;
                                        return true;
                                    });
    }
    return centers;
}

// Maximal eps-packing (centers in region, pairwise distance > 2 eps) seeded
// with the 2eps-cover centers; the seeding realizes the classical coupling
// M_eps >= N_{2eps} per instance.
inline std::vector<int> greedy_packing(const metric_graph& g, const cell_mask& region,
                                       double eps, const std::vector<int>& seeds) {
    std::vector<std::uint8_t> blocked(g.n_nodes(), 0);  // within 2eps of a chosen center
    std::vector<int> centers;
    auto& sc = metric_detail::thread_scratch();
    auto take = [&](int n) {
        centers.push_back(n);
        metric_detail::run_dijkstra(g, {{n, 0.0}}, nullptr, 2.0 * eps, -1, sc,
                                    [&](int u, double) {
                                        blocked[u] = 1;
                                        return true;
                                    });
    };
    for (int n : seeds)
        if (!blocked[n]) take(n);
    for (std::size_t n = 0; n < region.bits.size(); ++n)
        if (region.bits[n] && !blocked[n]) take(static_cast<int>(n));
    return centers;
}

}

/// Cover counts N_eps of a centered square region by metric balls, with an
/// optional packing/cover pair per level. The fitted slope of log N_eps vs
/// log(1/eps) estimates the Minkowski dimension.
inline minkowski_counts minkowski_estimate(const pipeline_config& pc, double region_half_width,
                                           const std::vector<double>& eps_ladder, int n_replicas,
                                           std::uint64_t seed, int threads = 1,
                                           bool with_packing = false) {
    pc.validate();
    exp_detail::check_ladder(eps_ladder, "eps_ladder");
    const double cal = exp_detail::pipeline_calibration(pc, seed, threads);

    minkowski_counts out;
    out.eps = eps_ladder;
    out.cover.assign(n_replicas, std::vector<double>(eps_ladder.size(), std::nan("")));
    if (with_packing) {
        out.pack.assign(n_replicas, std::vector<double>(eps_ladder.size(), std::nan("")));
        out.cover_2eps.assign(n_replicas, std::vector<double>(eps_ladder.size(), std::nan("")));
    }

    parallel_for(n_replicas, threads, [&](int r) {
        const auto f = exp_detail::make_field(pc, exp_detail::replica_seed(seed, "mink", r));
        const auto g = exp_detail::make_graph(pc, f, cal);
        cell_mask region(g.nx(), g.ny());
        region.kind = "minkowski_region";
        for (int j = 0; j < g.ny(); ++j)
            for (int i = 0; i < g.nx(); ++i) {
                const vec2 p = g.lat().pos(i, j);
                if (std::abs(p.x) <= region_half_width && std::abs(p.y) <= region_half_width)
                    region.set(i, j);
            }
        for (std::size_t s = 0; s < eps_ladder.size(); ++s) {
            const double eps = eps_ladder[s];
            const auto cov = exp_detail::greedy_cover(g, region, eps);
            out.cover[r][s] = static_cast<double>(cov.size());
            if (with_packing) {
                const auto cov2 = exp_detail::greedy_cover(g, region, 2.0 * eps);
                const auto pack = exp_detail::greedy_packing(g, region, eps, cov2);
                out.cover_2eps[r][s] = static_cast<double>(cov2.size());
                out.pack[r][s] = static_cast<double>(pack.size());
            }
        }
    });

    std::vector<double> inv_eps(eps_ladder.size());
    for (std::size_t s = 0; s < eps_ladder.size(); ++s) inv_eps[s] = 1.0 / eps_ladder[s];
    out.fit = exp_detail::fit_from_samples(inv_eps, out.cover, seed);
    for (std::size_t s = 0; s < eps_ladder.size(); ++s)
        out.cover_median.push_back(out.fit.medians[s]);
    return out;
}

enum class ball_kind { metric_unit, euclidean_unit };

struct moment_row {
    int resolution = 0;
    int k = 0;
    double moment = 0.0;
    double ci_lo = 0.0, ci_hi = 0.0;
    double discard_rate = 0.0;
    int n_valid = 0;
};

/// Empirical k-th moments of ball volumes across a resolution ladder:
/// metric_unit uses the calibrated unit metric ball, euclidean_unit the unit
/// disk. Truncated metric balls are discarded (abort beyond 20%).
inline std::vector<moment_row> ball_moment_estimate(pipeline_config pc, int k, ball_kind kind,
                                                    const std::vector<int>& resolutions,
                                                    int n_replicas, std::uint64_t seed,
                                                    int threads = 1) {
    if (k < 1) throw parameter_error("k", ">= 1", "moment order must be a positive integer");
    std::vector<moment_row> rows;
    for (int res : resolutions) {
        pc.resolution = res;
        pc.validate();
        const double cal = kind == ball_kind::metric_unit
                               ? exp_detail::pipeline_calibration(pc, seed, threads)
                               : 1.0;
        std::vector<double> vols(n_replicas, std::nan(""));
        parallel_for(n_replicas, threads, [&](int r) {
            const auto f =
                exp_detail::make_field(pc, exp_detail::replica_seed(seed, "moment", r * 131 + res));
            const auto m = build_measure(f, pc.gamma, pc.epsilon(), pc.norm);
            if (kind == ball_kind::euclidean_unit) {
                cell_mask disk(m.lat.nx, m.lat.ny);
                disk.kind = "euclidean_unit";
                for (int j = 0; j < m.lat.ny; ++j)
                    for (int i = 0; i < m.lat.nx; ++i)
                        if (m.lat.pos(i, j).norm() <= 1.0) disk.set(i, j);
                vols[r] = region_volume(m, disk);
            } else {
                const auto g = exp_detail::make_graph(pc, f, cal);
                const auto ball = metric_ball(g, {0.0, 0.0}, 1.0);
                if (!ball.truncated) vols[r] = region_volume(m, ball);
            }
        });
        std::vector<double> valid;
        for (double v : vols)
            if (!std::isnan(v)) valid.push_back(v);
        const double discard = 1.0 - static_cast<double>(valid.size()) / n_replicas;
        if (discard > 0.2)
            throw resolution_error("ball_moment_estimate: more than 20% truncated at resolution " +
                                   std::to_string(res));
        std::vector<double> powered(valid.size());
        for (std::size_t i = 0; i < valid.size(); ++i) powered[i] = std::pow(valid[i], k);
        moment_row row;
        row.resolution = res;
        row.k = k;
        row.n_valid = static_cast<int>(valid.size());
        row.discard_rate = discard;
        row.moment = mean_of(powered);
        const double hw = bootstrap_halfwidth(
            powered, [](const std::vector<double>& v) { return mean_of(v); }, 200,
            seed ^ static_cast<std::uint64_t>(res));
        row.ci_lo = row.moment - hw;
        row.ci_hi = row.moment + hw;
        rows.push_back(row);
    }
    return rows;
}

struct inscribed_row {
    double s = 0.0;         // quantum radius
    double diameter = 0.0;  // Euclidean diameter of the ball
    double inscribed = 0.0; // largest inscribed Euclidean radius
};

/// Per-ball (diameter, inscribed Euclidean radius) pairs across a radius
/// ladder, plus the slope of log inscribed vs log diameter.
inline std::pair<std::vector<inscribed_row>, double> inscribed_radius_stat(
    const pipeline_config& pc, const std::vector<double>& s_ladder, int n_balls,
    std::uint64_t seed, int threads = 1) {
    pc.validate();
    const double cal = exp_detail::pipeline_calibration(pc, seed, threads);
    std::vector<inscribed_row> rows(static_cast<std::size_t>(n_balls) * s_ladder.size());
    std::vector<std::uint8_t> valid(rows.size(), 0);
    parallel_for(n_balls, threads, [&](int r) {
        const auto f = exp_detail::make_field(pc, exp_detail::replica_seed(seed, "inscribed", r));
        const auto g = exp_detail::make_graph(pc, f, cal);
        for (std::size_t s = 0; s < s_ladder.size(); ++s) {
            const auto ball = metric_ball(g, {0.0, 0.0}, s_ladder[s]);
            if (ball.truncated || ball.count() < 4) continue;
            const std::size_t idx = static_cast<std::size_t>(r) * s_ladder.size() + s;
            rows[idx] = {s_ladder[s], mask_diameter(ball, g.lat()),
                         inscribed_radius(ball, g.lat().spacing)};
            valid[idx] = 1;
        }
    });
    std::vector<inscribed_row> kept;
    std::vector<double> lx, ly;
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (valid[i] && rows[i].inscribed > 0.0 && rows[i].diameter > 0.0) {
            kept.push_back(rows[i]);
            lx.push_back(std::log(rows[i].diameter));
            ly.push_back(std::log(rows[i].inscribed));
        }
    double slope = 0.0;
    if (lx.size() >= 2) slope = fit_line(lx, ly).slope;
    return {kept, slope};
}

struct tail_row {
    double threshold = 0.0;
    double p_ge = 0.0, p_ge_se = 0.0;
    double p_le = 0.0, p_le_se = 0.0;
};

/// Empirical survival and lower-tail curves of ball volumes.
inline std::vector<tail_row> tail_curve(const pipeline_config& pc, ball_kind kind,
                                        std::vector<double> thresholds, int n_replicas,
                                        std::uint64_t seed, int threads = 1) {
    pc.validate();
    std::sort(thresholds.begin(), thresholds.end());
    const double cal = kind == ball_kind::metric_unit
                           ? exp_detail::pipeline_calibration(pc, seed, threads)
                           : 1.0;
    std::vector<double> vols(n_replicas, std::nan(""));
    parallel_for(n_replicas, threads, [&](int r) {
        const auto f = exp_detail::make_field(pc, exp_detail::replica_seed(seed, "tail", r));
        const auto m = build_measure(f, pc.gamma, pc.epsilon(), pc.norm);
        if (kind == ball_kind::euclidean_unit) {
            cell_mask disk(m.lat.nx, m.lat.ny);
            for (int j = 0; j < m.lat.ny; ++j)
                for (int i = 0; i < m.lat.nx; ++i)
                    if (m.lat.pos(i, j).norm() <= 1.0) disk.set(i, j);
            vols[r] = region_volume(m, disk);
        } else {
            const auto g = exp_detail::make_graph(pc, f, cal);
            const auto ball = metric_ball(g, {0.0, 0.0}, 1.0);
            if (!ball.truncated) vols[r] = region_volume(m, ball);
        }
    });
    std::vector<double> valid;
    for (double v : vols)
        if (!std::isnan(v)) valid.push_back(v);
    std::vector<tail_row> rows;
    const double n = static_cast<double>(valid.size());
    for (double t : thresholds) {
        tail_row row;
        row.threshold = t;
        double ge = 0, le = 0;
        for (double v : valid) {
            if (v >= t) ge += 1;
            if (v <= t) le += 1;
        }
        row.p_ge = ge / n;
        row.p_le = le / n;
        row.p_ge_se = std::sqrt(std::max(row.p_ge * (1 - row.p_ge), 0.0) / n);
        row.p_le_se = std::sqrt(std::max(row.p_le * (1 - row.p_le), 0.0) / n);
        rows.push_back(row);
    }
    return rows;
}

struct uk_result {
    double value = 0.0;
    double std_error = 0.0;
    bool divergence_flag = false;
    std::int64_t n_samples = 0;
};

/// Importance-sampled Monte Carlo of the flat configuration integral
///   u_k(r) = int_{(r D)^k} prod_{i<j} |z_i - z_j|^{-gamma^2} dz.
/// k >= 4/gamma^2 marks the estimate divergent (no exception); a quarter-wise
/// Cauchy check can also raise the flag.
inline uk_result euclidean_uk_mc(int k, double gamma, double r, std::int64_t n_samples,
                                 std::uint64_t seed, int threads = 1) {
    if (k < 1) throw parameter_error("k", ">= 1", "need at least one point");
    if (gamma <= 0.0 || gamma >= 2.0)
        throw parameter_error("gamma", "(0,2)", "gamma must lie in (0,2)");
    if (r <= 0.0) throw parameter_error("r", "> 0", "disk radius must be positive");

    uk_result out;
    out.n_samples = n_samples;
    out.divergence_flag = static_cast<double>(k) >= 4.0 / (gamma * gamma);
    if (k == 1) {
        out.value = std::numbers::pi * r * r;
        return out;
    }
    const double g2 = gamma * gamma;
    const double r_min = 1e-9 * r;
    const double exponent = 1.0 - g2;
    std::vector<double> vals(n_samples);
    parallel_for(static_cast<int>(n_samples), threads, [&](int t) {
        rng_stream rs(rng_key::root(seed, stream::u_config).chain(t));
        const auto draw =
            cluster_detail::draw_configuration(k, r, 2.0 * r, exponent, r_min, rs);
        bool inside = true;
        for (const auto& p : draw.pts)
            if (p.norm() > r) inside = false;
        double log_f = 0.0;
        if (inside)
            for (int i = 0; i < k && inside; ++i)
                for (int j = i + 1; j < k; ++j) {
                    const double d = dist(draw.pts[i], draw.pts[j]);
                    if (d == 0.0) {
                        inside = false;
                        break;
                    }
                    log_f -= g2 * std::log(d);
                }
        vals[t] = inside ? std::exp(log_f - draw.log_density) : 0.0;
    });
    double sum = 0.0, sum2 = 0.0;
    for (double v : vals) {
        sum += v;
        sum2 += v * v;
    }
    out.value = sum / n_samples;
    out.std_error = std::sqrt(std::max(sum2 / n_samples - out.value * out.value, 0.0) /
                              static_cast<double>(n_samples));
    // Cauchy check across quarters of the stream.
    const std::int64_t q = n_samples / 4;
    if (q > 100) {
        std::vector<double> qmeans(4, 0.0);
        for (int b = 0; b < 4; ++b) {
            for (std::int64_t i = b * q; i < (b + 1) * q; ++i) qmeans[b] += vals[i];
            qmeans[b] /= static_cast<double>(q);
        }
        const double lo = *std::min_element(qmeans.begin(), qmeans.end());
        const double hi = *std::max_element(qmeans.begin(), qmeans.end());
        if (lo <= 0.0 || hi / lo > 4.0) out.divergence_flag = true;
    }
    return out;
}

/// Iterative self-consistency estimate of the dimension: refit the volume
/// scaling slope starting from d0 = 2 + gamma^2/2 until |change| < 0.1 or
/// five rounds. An estimate, never ground truth.
inline double self_consistent_dgamma(pipeline_config pc, const std::vector<double>& s_ladder,
                                     int n_replicas, std::uint64_t seed, int threads = 1) {
    double d = 2.0 + pc.gamma * pc.gamma / 2.0;
    for (int iter = 0; iter < 5; ++iter) {
        pc.d_gamma = std::max(d, 2.0 + 1e-6);
        const auto fit = volume_scaling_fit(pc, s_ladder, n_replicas, seed + iter, threads);
        if (std::abs(fit.slope - d) < 0.1) return fit.slope;
        d = fit.slope;
    }
    return d;
}

}
