#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "lqg/field.hpp"
#include "lqg/geometry.hpp"
#include "lqg/metric.hpp"
#include "lqg/rng.hpp"

namespace lqg {

// Liouville Brownian motion: an Euler planar Brownian path plus the quantum
// clock F(t) accumulated along it.

struct planar_path {
    std::vector<double> times;     // strictly increasing, starting at 0
    std::vector<vec2> positions;
    double dt = 0.0;
    bool capped = false;  // max-step guard hit; experiments discard these
};

struct quantum_clock {
    std::vector<double> values;  // F aligned to the path's times, F[0] = 0
    double epsilon = 0.0;
    double gamma = 0.0;
};

/// Euler simulation with i.i.d. centered Gaussian steps of variance dt per
/// coordinate, truncated at the first position where `stop` holds.
inline planar_path simulate_bm_path(const vec2& start, double dt,
                                    const std::function<bool(const vec2&)>& stop,
                                    std::uint64_t seed,
                                    std::int64_t max_steps = 20'000'000) {
    if (dt <= 0.0) throw parameter_error("dt", "> 0", "step size must be positive");
    planar_path path;
    path.dt = dt;
    path.times.push_back(0.0);
    path.positions.push_back(start);
    if (stop(start)) return path;

    rng_stream rs(rng_key::root(seed, stream::bm_path));
    const double sigma = std::sqrt(dt);
    vec2 p = start;
    for (std::int64_t step = 1; step <= max_steps; ++step) {
        p.x += sigma * rs.next_gaussian();
        p.y += sigma * rs.next_gaussian();
        path.times.push_back(step * dt);
        path.positions.push_back(p);
        if (stop(p)) return path;
    }
    path.capped = true;
    return path;
}

/// Quantum clock F(t) = int_0^t eps^{gamma^2/2} e^{gamma h_eps(B_s)} ds by
/// trapezoidal accumulation, h_eps the circle average of the field.
inline quantum_clock quantum_clock_along(const planar_path& path, const field_grid& field,
                                         double gamma, double epsilon, int n_nodes = 64) {
    if (epsilon < 2.0 * field.spacing() * (1.0 - 1e-12))
        throw resolution_error("quantum_clock: epsilon below 2*spacing");
    quantum_clock clock;
    clock.epsilon = epsilon;
    clock.gamma = gamma;
    clock.values.reserve(path.times.size());
    clock.values.push_back(0.0);
    const double logpref = 0.5 * gamma * gamma * std::log(epsilon);
    auto rate = [&](const vec2& p) {
        return std::exp(gamma * circle_average(field, p, epsilon, n_nodes) + logpref);
    };
    if (path.times.empty()) return clock;
    double prev_rate = rate(path.positions[0]);
    for (std::size_t i = 1; i < path.times.size(); ++i) {
        const double cur = rate(path.positions[i]);
        const double dt = path.times[i] - path.times[i - 1];
        clock.values.push_back(clock.values.back() + 0.5 * dt * (prev_rate + cur));
        prev_rate = cur;
    }
    return clock;
}

struct exit_time_result {
    double tau = 0.0;
    bool valid = false;  // false: truncated ball or capped path
};

/// Quantum time to leave the metric ball of radius s about z: the clock value
/// at the first path time the walk leaves the precomputed ball mask, with the
/// final partial step resolved at sub-cell granularity and accumulated as a
/// partial trapezoid.
inline exit_time_result lbm_exit_time(const vec2& z, double s, const field_grid& field,
                                      const metric_graph& graph, double gamma, double epsilon,
                                      double dt, std::uint64_t seed, int n_nodes = 64) {
    if (s == 0.0) return {0.0, true};
    const cell_mask ball = metric_ball(graph, z, s);
    if (ball.truncated) return {0.0, false};

    const lattice& lat = graph.lat();
    auto in_ball = [&](const vec2& p) {
        const int i = static_cast<int>(std::round((p.x - lat.origin.x) / lat.spacing));
        const int j = static_cast<int>(std::round((p.y - lat.origin.y) / lat.spacing));
        if (i < 0 || j < 0 || i >= lat.nx || j >= lat.ny) return false;
        return ball.get(i, j);
    };

    const auto path = simulate_bm_path(z, dt, [&](const vec2& p) { return !in_ball(p); }, seed);
    if (path.capped) return {0.0, false};

    const double logpref = 0.5 * gamma * gamma * std::log(epsilon);
    auto rate = [&](const vec2& p) {
        return std::exp(gamma * circle_average(field, p, epsilon, n_nodes) + logpref);
    };

    try {
        double F = 0.0;
        double prev_rate = rate(path.positions[0]);
        const std::size_t last = path.positions.size() - 1;
        for (std::size_t i = 1; i < last; ++i) {
            const double cur = rate(path.positions[i]);
            F += 0.5 * dt * (prev_rate + cur);
            prev_rate = cur;
        }
        // Final segment: locate the crossing at sub-cell granularity and add
        // the partial trapezoid up to the crossing fraction.
        const vec2 a = path.positions[last - 1], b = path.positions[last];
        const double seg = dist(a, b);
        double frac = 1.0;
        const int n_sub = std::max(2, static_cast<int>(std::ceil(seg / (0.5 * lat.spacing))));
        for (int m = 1; m <= n_sub; ++m) {
            const double f = static_cast<double>(m) / n_sub;
            if (!in_ball({a.x + f * (b.x - a.x), a.y + f * (b.y - a.y)})) {
                frac = f;
                break;
            }
        }
        const double exit_rate = rate({a.x + frac * (b.x - a.x), a.y + frac * (b.y - a.y)});
        F += 0.5 * frac * dt * (prev_rate + exit_rate);
        return {F, true};
    } catch (const out_of_domain_error&) {
        // The walk's mollification circle left the window before exiting the
        // ball; the sample cannot be scored.
        return {0.0, false};
    }
}

}
