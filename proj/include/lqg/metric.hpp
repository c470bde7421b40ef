#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <mutex>
#include <optional>
#include <queue>
#include <unordered_map>
#include <vector>

#include "lqg/field.hpp"
#include "lqg/geometry.hpp"
#include "lqg/parallel.hpp"

namespace lqg {

/// Built-in dimension table; only gamma = sqrt(8/3) ships a value.
inline std::optional<double> builtin_dgamma(double gamma) {
    if (std::abs(gamma - std::sqrt(8.0 / 3.0)) < 1e-9) return 4.0;
    return std::nullopt;
}

// Grid graph with weights spacing * e^{xi * field(midpoint)} / calibration on
// the 8-connected lattice (diagonals length sqrt(2)*spacing). The field at an
// edge midpoint is the linear interpolant along the edge, (f_u + f_v)/2, so
// edge weights depend only on their endpoint cells and internal metrics are
// exactly local.
class metric_graph {
  public:
    std::shared_ptr<const field_grid> field;
    double gamma = 0.0, d_gamma = 0.0, xi = 0.0, Q = 0.0;
    double calibration = 1.0;

    const lattice& lat() const { return field->lat; }
    int nx() const { return field->lat.nx; }
    int ny() const { return field->lat.ny; }
    std::size_t n_nodes() const { return field->values.size(); }

    int node_of(const vec2& p) const {
        const int i = static_cast<int>(std::round((p.x - lat().origin.x) / lat().spacing));
        const int j = static_cast<int>(std::round((p.y - lat().origin.y) / lat().spacing));
        if (i < 0 || j < 0 || i >= nx() || j >= ny())
            throw out_of_domain_error("metric_graph: point outside window");
        return j * nx() + i;
    }
    vec2 pos_of(int node) const { return lat().pos(node % nx(), node / nx()); }

    // Half-exponent factor per node; weight(u,v) = len * hf[u] * hf[v] / cal.
    grid2<double> half_factor;

    double edge_weight(int u, int v, double len) const {
        return len * half_factor.v[u] * half_factor.v[v] * inv_cal_;
    }
    void set_calibration(double c) {
        calibration = c;
        inv_cal_ = 1.0 / c;
    }

    // Cache of full distance fields keyed by source node (unrestricted,
    // uncapped queries only). Held behind a shared_ptr so graphs stay
    // copyable; per-source fields are immutable once published.
    struct dist_cache {
        std::mutex mu;
        std::unordered_map<int, std::shared_ptr<const std::vector<double>>> fields;
    };
    std::shared_ptr<dist_cache> cache = std::make_shared<dist_cache>();

  private:
    double inv_cal_ = 1.0;
};

namespace metric_detail {

// Reusable Dijkstra arrays with epoch-stamped validity, so repeated ball
// queries on large grids cost no reset.
struct scratch {
    std::vector<double> dist;
    std::vector<std::uint32_t> stamp;
    std::vector<std::uint32_t> done;
    std::uint32_t epoch = 0;

    void begin(std::size_t n) {
        if (dist.size() != n) {
            dist.assign(n, 0.0);
            stamp.assign(n, 0);
            done.assign(n, 0);
            epoch = 0;
        }
        if (++epoch == 0) {  // wrapped
            std::fill(stamp.begin(), stamp.end(), 0u);
            std::fill(done.begin(), done.end(), 0u);
            epoch = 1;
        }
    }
    double get(std::size_t i) const { return stamp[i] == epoch ? dist[i] : inf; }
    void set(std::size_t i, double d) {
        dist[i] = d;
        stamp[i] = epoch;
    }
    bool settled(std::size_t i) const { return done[i] == epoch; }
    void settle(std::size_t i) { done[i] = epoch; }
};

struct heap_item {
    double d;
    int node;
    bool operator>(const heap_item& o) const {
        return d > o.d || (d == o.d && node > o.node);
    }
};

// Core Dijkstra. Stops when `stop_node` is settled, when the next distance
// exceeds `cap`, or when the frontier empties. Settled nodes are reported
// through `on_settle` (return false there to stop). `region`, when given,
// restricts both endpoints of every relaxed edge.
template <class OnSettle>
void run_dijkstra(const metric_graph& g, const std::vector<std::pair<int, double>>& sources,
                  const cell_mask* region, double cap, int stop_node, scratch& sc,
                  OnSettle&& on_settle) {
    const int nx = g.nx(), ny = g.ny();
    const double sp = g.lat().spacing;
    const double diag = sp * std::numbers::sqrt2;
    sc.begin(g.n_nodes());

    std::priority_queue<heap_item, std::vector<heap_item>, std::greater<heap_item>> heap;
    for (const auto& [node, d0] : sources) {
        if (region && !region->bits[node]) continue;
        if (d0 < sc.get(node)) {
            sc.set(node, d0);
            heap.push({d0, node});
        }
    }

    static constexpr int di[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int dj[8] = {0, 0, 1, -1, 1, -1, 1, -1};

    while (!heap.empty()) {
        const auto [d, u] = heap.top();
        heap.pop();
        if (sc.settled(u)) continue;
        if (d > cap) break;
        sc.settle(u);
        if (!on_settle(u, d)) return;
        if (u == stop_node) return;

        const int ui = u % nx, uj = u / nx;
        for (int k = 0; k < 8; ++k) {
            const int vi = ui + di[k], vj = uj + dj[k];
            if (vi < 0 || vj < 0 || vi >= nx || vj >= ny) continue;
            const int v = vj * nx + vi;
            if (sc.settled(v)) continue;
            if (region && !region->bits[v]) continue;
            const double len = k < 4 ? sp : diag;
            const double nd = d + g.edge_weight(u, v, len);
            if (nd < sc.get(v)) {
                sc.set(v, nd);
                heap.push({nd, v});
            }
        }
    }
}

inline scratch& thread_scratch() {
    thread_local scratch sc;
    return sc;
}

inline bool on_window_boundary(const metric_graph& g, int node) {
    const int i = node % g.nx(), j = node / g.nx();
    return i == 0 || j == 0 || i == g.nx() - 1 || j == g.ny() - 1;
}

}

/// Assemble the metric graph for a field. gamma = 0 is the documented flat
/// baseline (unit weights); with calibrate set, the calibration constant is
/// fixed below by calibrate_constant() over fresh field replicas.
inline metric_graph build_metric_graph(const field_grid& field, double gamma, double d_gamma,
                                       bool calibrate = false, int n_cal_samples = 200,
                                       std::uint64_t seed = 0);

/// Shortest grid-path distance between two points (Dijkstra with early exit).
/// Unrestricted point-to-point queries cache the full source field.
inline double distance(const metric_graph& g, const vec2& src, const vec2& dst,
                       const cell_mask* region = nullptr) {
    const int s = g.node_of(src), t = g.node_of(dst);
    if (region) {
        if (!region->same_shape(g.nx(), g.ny()))
            throw shape_error("distance: region mask does not match grid");
        if (!region->bits[s])
            throw precondition_error("distance: source outside the query region");
        double out = inf;
        auto& sc = metric_detail::thread_scratch();
        metric_detail::run_dijkstra(g, {{s, 0.0}}, region, inf, t, sc,
                                    [&](int u, double d) {
                                        if (u == t) out = d;
                                        return true;
                                    });
        return out;
    }
    bool repeat_source = false;
    {
        std::lock_guard<std::mutex> lock(g.cache->mu);
        auto it = g.cache->fields.find(s);
        if (it != g.cache->fields.end() && it->second) return (*it->second)[t];
        repeat_source = it != g.cache->fields.end();
        if (!repeat_source) g.cache->fields.emplace(s, nullptr);  // remember this source
    }
    auto& sc = metric_detail::thread_scratch();
    if (!repeat_source) {
        // First query from this source: plain early-exit Dijkstra.
        double out = inf;
        metric_detail::run_dijkstra(g, {{s, 0.0}}, nullptr, inf, t, sc,
                                    [&](int u, double d) {
                                        if (u == t) out = d;
                                        return true;
                                    });
        return out;
    }
    // Repeated source: compute and cache the full field.
    auto dists = std::make_shared<std::vector<double>>(g.n_nodes(), inf);
    metric_detail::run_dijkstra(g, {{s, 0.0}}, nullptr, inf, -1, sc,
                                [&](int u, double d) {
                                    (*dists)[u] = d;
                                    return true;
                                });
    {
        std::lock_guard<std::mutex> lock(g.cache->mu);
        if (g.cache->fields.size() >= 16) g.cache->fields.clear();
        g.cache->fields[s] = dists;
    }
    return (*dists)[t];
}

/// Distance from a point to the nearest cell of a set.
inline double distance_to_set(const metric_graph& g, const vec2& src, const cell_mask& targets,
                              const cell_mask* region = nullptr) {
    if (!targets.same_shape(g.nx(), g.ny()))
        throw shape_error("distance: target mask does not match grid");
    const int s = g.node_of(src);
    if (region && !region->bits[s])
        throw precondition_error("distance: source outside the query region");
    if (targets.bits[s]) return 0.0;
    double out = inf;
    auto& sc = metric_detail::thread_scratch();
    metric_detail::run_dijkstra(g, {{s, 0.0}}, region, inf, -1, sc,
                                [&](int u, double d) {
                                    if (targets.bits[u]) {
                                        out = d;
                                        return false;
                                    }
                                    return true;
                                });
    return out;
}

/// All cells within metric distance s of `center`. The mask is flagged
/// truncated when the ball touches the window boundary; downstream
/// experiments must discard such samples.
inline cell_mask metric_ball(const metric_graph& g, const vec2& center, double s,
                             const cell_mask* region = nullptr) {
    if (s < 0.0) throw parameter_error("s", ">= 0", "ball radius must be nonnegative");
    cell_mask mask(g.nx(), g.ny());
    mask.center = center;
    mask.radius = s;
    mask.kind = "metric_ball";
    const int c = g.node_of(center);
    if (region && !region->bits[c])
        throw precondition_error("metric_ball: center outside the query region");
    auto& sc = metric_detail::thread_scratch();
    metric_detail::run_dijkstra(g, {{c, 0.0}}, region, s, -1, sc,
                                [&](int u, double) {
                                    mask.bits[u] = 1;
                                    if (metric_detail::on_window_boundary(g, u))
                                        mask.truncated = true;
                                    return true;
                                });
    return mask;
}

/// Crossing distance of the annulus between the circles of radius r/2 and r
/// about z, computed inside the annulus: multi-source Dijkstra from the
/// discretized inner circle until a cell at radius >= r is settled.
inline double annulus_crossing(const metric_graph& g, const vec2& z, double r) {
    const double sp = g.lat().spacing;
    const rect win = g.lat().bounds();
    if (!win.contains({z.x + r, z.y + r}) || !win.contains({z.x - r, z.y - r}))
        throw out_of_domain_error("annulus_crossing: annulus exits window");

    const int nx = g.nx(), ny = g.ny();
    cell_mask region(nx, ny);
    std::vector<std::pair<int, double>> sources;
    const double margin = 1.5 * sp;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const double d = dist(g.lat().pos(i, j), z);
            if (d >= r / 2 - margin && d <= r + margin) region.set(i, j);
        }
    // Inner shell: cells inside radius r/2 adjacent to a cell beyond it.
    for (int j = 1; j + 1 < ny; ++j)
        for (int i = 1; i + 1 < nx; ++i) {
            const double d = dist(g.lat().pos(i, j), z);
            if (d > r / 2) continue;
            bool shell = false;
            for (int dj = -1; dj <= 1 && !shell; ++dj)
                for (int di = -1; di <= 1; ++di)
                    if (dist(g.lat().pos(i + di, j + dj), z) > r / 2) {
                        shell = true;
                        break;
                    }
            if (shell) {
                region.set(i, j);
                sources.push_back({j * nx + i, 0.0});
            }
        }

    double out = inf;
    auto& sc = metric_detail::thread_scratch();
    metric_detail::run_dijkstra(g, sources, &region, inf, -1, sc,
                                [&](int u, double d) {
                                    if (dist(g.pos_of(u), z) >= r) {
                                        out = d;
                                        return false;
                                    }
                                    return true;
                                });
    return out;
}

/// Proxy set: cells z whose distance to their own radius-r/4 circle is <= d.
/// Only cells whose r/4-ball fits inside the window are tested.
inline cell_mask proxy_set(const metric_graph& g, double r, double d) {
    const double rq = r / 4.0;
    const rect win = g.lat().bounds();
    if (win.width() < 2 * rq || win.height() < 2 * rq)
        throw out_of_domain_error("proxy_set: window smaller than the probe radius");

    const int nx = g.nx(), ny = g.ny();
    cell_mask mask(nx, ny);
    mask.kind = "proxy_set";
    mask.radius = d;
    auto& sc = metric_detail::thread_scratch();
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const vec2 p = g.lat().pos(i, j);
            if (!win.contains({p.x + rq, p.y + rq}) || !win.contains({p.x - rq, p.y - rq}))
                continue;
            bool inside = false;
            metric_detail::run_dijkstra(g, {{j * nx + i, 0.0}}, nullptr, d, -1, sc,
                                        [&](int u, double) {
                                            if (dist(g.pos_of(u), p) >= rq) {
                                                inside = true;
                                                return false;
                                            }
                                            return true;
                                        });
            if (inside) mask.set(i, j);
        }
    return mask;
}

/// Median over n_cal fresh field replicas of the uncalibrated grid distance
/// between (0,0) and (1,0); the convention pins that median to 1.
inline double calibrate_constant(const field_grid& prototype, double gamma, double d_gamma,
                                 int n_cal, std::uint64_t seed, int threads = 1) {
    const rect win = prototype.window();
    if (!win.contains({0.0, 0.0}) || !win.contains({1.0, 0.0}))
        throw precondition_error("calibration window must contain (0,0) and (1,0)");
    std::vector<double> medians(n_cal);
    parallel_for(n_cal, threads, [&](int i) {
        const std::uint64_t s = rng_key::root(seed, stream::calibration).chain(i).state;
        field_grid f = sample_star_field(prototype.band_a, prototype.band_b, win,
                                         prototype.spacing(), s, prototype.config);
        if (prototype.unit_circle_normalized) normalize_unit_circle(f);
        metric_graph g = build_metric_graph(f, gamma, d_gamma, false, 0, 0);
        medians[i] = distance(g, {0.0, 0.0}, {1.0, 0.0});
    });
    std::sort(medians.begin(), medians.end());
    const int n = n_cal;
    return n % 2 == 1 ? medians[n / 2] : 0.5 * (medians[n / 2 - 1] + medians[n / 2]);
}

inline metric_graph build_metric_graph(const field_grid& field, double gamma, double d_gamma,
                                       bool calibrate, int n_cal_samples, std::uint64_t seed) {
    if (gamma < 0.0 || gamma >= 2.0)
        throw parameter_error("gamma", "(0,2)", "gamma must lie in (0,2)");
    if (d_gamma <= 2.0)
        throw parameter_error("d_gamma", "> 2", "the dimension input must exceed 2");

    metric_graph g;
    g.field = std::make_shared<field_grid>(field);
    g.gamma = gamma;
    g.d_gamma = d_gamma;
    g.xi = gamma / d_gamma;
    g.Q = gamma / 2.0 + 2.0 / gamma;  // +inf at the flat baseline
    for (const auto& s : field.singularities)
        if (s.alpha >= g.Q)
            throw parameter_error("alpha", "< Q", "log-singularity weight must stay below Q");

    g.half_factor = grid2<double>(field.lat.nx, field.lat.ny);
    for (std::size_t n = 0; n < field.values.size(); ++n)
        g.half_factor.v[n] = std::exp(0.5 * g.xi * field.values.v[n]);

    g.set_calibration(1.0);
    if (calibrate)
        g.set_calibration(calibrate_constant(field, gamma, d_gamma, n_cal_samples, seed));
    return g;
}

/// Exact octile distance on the flat 8-connected grid; the oracle for all
/// zero-field metric checks.
inline double octile_distance(const vec2& a, const vec2& b, double spacing) {
    const double dx = std::abs(std::round((b.x - a.x) / spacing));
    const double dy = std::abs(std::round((b.y - a.y) / spacing));
    const double hi = std::max(dx, dy), lo = std::min(dx, dy);
    return ((hi - lo) + lo * std::numbers::sqrt2) * spacing;
}

}
