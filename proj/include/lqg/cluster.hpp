#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "lqg/errors.hpp"
#include "lqg/field.hpp"
#include "lqg/geometry.hpp"
#include "lqg/parallel.hpp"
#include "lqg/rng.hpp"

namespace lqg {

// Hierarchical splitting of finite point sets, the labeled cluster tree, and
// Monte Carlo estimators for the vertex-condition probability P and the
// singular configuration integral u.

struct point_set {
    std::vector<vec2> points;

    std::size_t size() const { return points.size(); }
    static point_set of(std::initializer_list<vec2> pts) { return {std::vector<vec2>(pts)}; }
};

struct cluster_constants {
    double gamma = 0.0;
    double Q = 0.0;
    double delta = 0.0;  // condition slack; 0 recovers the base condition

    static cluster_constants for_gamma(double gamma, double delta = 0.0) {
        if (gamma <= 0.0 || gamma >= 2.0)
            throw parameter_error("gamma", "(0,2)", "gamma must lie in (0,2)");
        if (delta < 0.0) throw parameter_error("delta", ">= 0", "delta must be nonnegative");
        return {gamma, gamma / 2.0 + 2.0 / gamma, delta};
    }
    double c_k(int k) const { return k * gamma - Q; }
};

struct separation_result {
    double s = 0.0;
    point_set left, right;  // the partition attaining s; empty for singletons
};

namespace cluster_detail {

inline void check_distinct(const point_set& S) {
    for (std::size_t i = 0; i < S.size(); ++i)
        for (std::size_t j = i + 1; j < S.size(); ++j)
            if (S.points[i] == S.points[j])
                throw degenerate_input_error("separation_split: duplicate points");
}

// Index of the leftmost point (smallest real part, imaginary part breaking
// ties). Any deterministic choice works; this one is the documented pick.
inline std::size_t leftmost(const std::vector<vec2>& pts) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < pts.size(); ++i) {
        if (pts[i].x < pts[best].x ||
            (pts[i].x == pts[best].x && pts[i].y < pts[best].y))
            best = i;
    }
    return best;
}

}

/// Separation distance s(S): the largest t such that S splits into two parts
/// at mutual distance >= t, together with a partition attaining it. Computed
/// as the bottleneck (longest) edge of the Euclidean minimum spanning tree;
/// removing that edge yields the partition. Singletons return s = 0.
inline separation_result separation_split(const point_set& S) {
    const auto k = S.size();
    if (k == 0) throw degenerate_input_error("separation_split: empty set");
    cluster_detail::check_distinct(S);
    if (k == 1) return {0.0, {}, {}};

    // Prim's algorithm, recording each vertex's tree parent. Ties keep the
    // first edge found in construction order.
    std::vector<double> best(k, inf);
    std::vector<int> parent(k, -1);
    std::vector<std::uint8_t> in_tree(k, 0);
    best[0] = 0.0;
    struct edge {
        int a = -1, b = -1;
        double w = -1.0;
    };
    edge bottleneck;
    for (std::size_t it = 0; it < k; ++it) {
        int u = -1;
        for (std::size_t v = 0; v < k; ++v)
            if (!in_tree[v] && (u < 0 || best[v] < best[u])) u = static_cast<int>(v);
        in_tree[u] = 1;
        if (parent[u] >= 0 && best[u] > bottleneck.w) bottleneck = {parent[u], u, best[u]};
        for (std::size_t v = 0; v < k; ++v)
            if (!in_tree[v]) {
                const double w = dist(S.points[u], S.points[v]);
                if (w < best[v]) {
                    best[v] = w;
                    parent[v] = u;
                }
            }
    }

    // Split the tree at the bottleneck edge; collect the component of b.
    std::vector<std::vector<int>> adj(k);
    for (std::size_t v = 1; v < k; ++v) {
        if (static_cast<int>(v) == bottleneck.b && parent[v] == bottleneck.a) continue;
        adj[parent[v]].push_back(static_cast<int>(v));
        adj[v].push_back(parent[v]);
    }
    std::vector<std::uint8_t> side(k, 0);
    std::vector<int> stack{bottleneck.b};
    side[bottleneck.b] = 1;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int v : adj[u])
            if (!side[v]) {
                side[v] = 1;
                stack.push_back(v);
            }
    }
    separation_result out;
    out.s = bottleneck.w;
    for (std::size_t v = 0; v < k; ++v)
        (side[v] ? out.right : out.left).points.push_back(S.points[v]);
    return out;
}

/// Brute-force oracle: maximum over all bipartitions of the minimum cross
/// distance. Exponential; test use only.
inline double separation_brute_force(const point_set& S) {
    const auto k = S.size();
    if (k <= 1) return 0.0;
    double best = 0.0;
    for (std::uint64_t mask = 1; mask + 1 < (1ull << k); ++mask) {
        double d = inf;
        for (std::size_t i = 0; i < k; ++i)
            for (std::size_t j = 0; j < k; ++j)
                if (((mask >> i) & 1) && !((mask >> j) & 1))
                    d = std::min(d, dist(S.points[i], S.points[j]));
        best = std::max(best, d);
    }
    return best;
}

// The labeled binary cluster tree. Internal vertices carry (S, m, psi, eta);
// leaves carry their singleton. The shape and the (S, m, eta) labels are
// deterministic in K; psi is the only randomness.
struct cluster_tree {
    struct vertex {
        point_set S;
        int m = 0;           // ceil(log 1/s(S)), meaningful for internal vertices
        double psi = 0.0;
        double eta = 0.0;
        int left = -1, right = -1;  // children indices, -1 for leaves
        bool is_leaf() const { return left < 0; }
    };
    std::vector<vertex> vertices;  // vertices[0] is the root
    int initial_scale = 0;
    double gamma = 0.0;
};

/// Field oracle type: phi_{a,b} evaluated at a point.
using field_oracle = std::function<double(int a, int b, const vec2&)>;

inline int scale_of(double s) {
    return static_cast<int>(std::ceil(std::log(1.0 / s)));
}

namespace cluster_detail {

inline int build_vertex(cluster_tree& tree, point_set S, int a, double psi_acc, double eta_acc,
                        const field_oracle& phi, double gamma) {
    const int idx = static_cast<int>(tree.vertices.size());
    tree.vertices.push_back({});
    if (S.size() == 1) {
        tree.vertices[idx].S = std::move(S);
        return idx;
    }
    auto split = separation_split(S);
    const int m = scale_of(split.s);
    const double psi = psi_acc + phi(a, m, S.points[leftmost(S.points)]);
    const double eta = eta_acc + (m - a) * static_cast<double>(S.size()) * gamma;
    tree.vertices[idx].S = std::move(S);
    tree.vertices[idx].m = m;
    tree.vertices[idx].psi = psi;
    tree.vertices[idx].eta = eta;
    const int l = build_vertex(tree, std::move(split.left), m, psi, eta, phi, gamma);
    const int r = build_vertex(tree, std::move(split.right), m, psi, eta, phi, gamma);
    tree.vertices[idx].left = l;
    tree.vertices[idx].right = r;
    return idx;
}

}

/// Build the labeled tree for K at initial scale a. The root is labeled
/// (K, m, phi_{a,m}(Left(K)), (m-a)|K|gamma) and subtree labels accumulate
/// the parent's (psi, eta).
inline cluster_tree build_cluster_tree(const point_set& K, int a, const field_oracle& phi,
                                       double gamma) {
    if (K.size() == 0) throw degenerate_input_error("build_cluster_tree: empty set");
    cluster_tree tree;
    tree.initial_scale = a;
    tree.gamma = gamma;
    if (K.size() >= 2) {
        const double s = separation_split(K).s;
        if (a > scale_of(s))
            throw precondition_error("build_cluster_tree: initial scale a exceeds ceil(log 1/s(K))");
    }
    cluster_detail::build_vertex(tree, K, a, 0.0, 0.0, phi, gamma);
    return tree;
}

/// True iff psi + eta + x <= (Q + delta)(m - a) at every internal vertex;
/// vacuously true for singleton trees.
inline bool check_condition(const cluster_tree& tree, double x, const cluster_constants& cc) {
    for (const auto& v : tree.vertices) {
        if (v.is_leaf()) continue;
        if (v.psi + v.eta + x > (cc.Q + cc.delta) * (v.m - tree.initial_scale)) return false;
    }
    return true;
}

/// Serialize a tree: one vertex per line, depth-first --
/// depth, point indices of S within K, m, psi, eta.
inline std::string format_cluster_tree(const cluster_tree& tree) {
    std::string out;
    const auto& root_pts = tree.vertices[0].S.points;
    auto index_of = [&](const vec2& p) {
        for (std::size_t i = 0; i < root_pts.size(); ++i)
            if (root_pts[i] == p) return static_cast<int>(i);
        return -1;
    };
    std::function<void(int, int)> walk = [&](int idx, int depth) {
        const auto& v = tree.vertices[idx];
        out += std::to_string(depth) + "\t{";
        for (std::size_t i = 0; i < v.S.points.size(); ++i) {
            if (i) out += ",";
            out += std::to_string(index_of(v.S.points[i]));
        }
        out += "}";
        if (!v.is_leaf()) {
            out += "\tm=" + std::to_string(v.m) + "\tpsi=" + std::to_string(v.psi) +
                   "\teta=" + std::to_string(v.eta);
        }
        out += "\n";
        if (!v.is_leaf()) {
            walk(v.left, depth + 1);
            walk(v.right, depth + 1);
        }
    };
    walk(0, 0);
    return out;
}

struct estimate {
    double value = 0.0;
    double std_error = 0.0;
    std::int64_t n_samples = 0;
};

/// Monte Carlo estimate of P^{a,x}_K: the probability over the band fields
/// that every internal vertex of the labeled tree satisfies the condition.
/// Replica fields are driven by per-replica streams of `seed`, so estimates
/// for different x under one seed share samples (monotone in x sample by
/// sample).
inline estimate estimate_P(const point_set& K, int a, double x, double delta,
                           int n_samples, std::uint64_t seed, double gamma,
                           int threads = 1, const field_config& cfg = {}) {
    if (n_samples < 100)
        throw parameter_error("n_samples", ">= 100", "too few samples for estimate_P");
    const auto cc = cluster_constants::for_gamma(gamma, delta);
    if (K.size() == 1) return {1.0, 0.0, n_samples};

    // The tree shape and every (S, m, eta) label are deterministic: build
    // once with a zero oracle, then refresh psi per replica.
    const cluster_tree shape =
        build_cluster_tree(K, a, [](int, int, const vec2&) { return 0.0; }, gamma);

    // Per-vertex band evaluations along root paths: vertex psi = parent psi
    // + phi_{m_parent, m_vertex}(Left(S_vertex)).
    struct eval_spec {
        int vertex, parent;  // -1 parent for root
        int a, b;
        vec2 p;
    };
    std::vector<eval_spec> evals;
    std::function<void(int, int, int)> plan = [&](int idx, int parent, int a_prev) {
        const auto& v = shape.vertices[idx];
        if (v.is_leaf()) return;
        const vec2 left = v.S.points[cluster_detail::leftmost(v.S.points)];
        evals.push_back({idx, parent, a_prev, v.m, left});
        plan(v.left, idx, v.m);
        plan(v.right, idx, v.m);
    };
    plan(0, -1, a);

    std::vector<std::uint8_t> hits(n_samples);
    parallel_for(n_samples, threads, [&](int r) {
        const std::uint64_t replica_seed =
            rng_key::root(seed, stream::cluster_field).chain(r).state;
        point_field_sampler sampler(replica_seed, cfg);
        std::vector<double> psi(shape.vertices.size(), 0.0);
        bool ok = true;
        for (const auto& e : evals) {
            const double base = e.parent < 0 ? 0.0 : psi[e.parent];
            psi[e.vertex] = base + sampler.eval_range(e.a, e.b, e.p);
            const auto& v = shape.vertices[e.vertex];
            if (psi[e.vertex] + v.eta + x > (cc.Q + cc.delta) * (v.m - a)) {
                ok = false;
                break;
            }
        }
        hits[r] = ok ? 1 : 0;
    });

    double sum = 0.0;
    for (auto h : hits) sum += h;
    const double p = sum / n_samples;
    return {p, std::sqrt(std::max(p * (1.0 - p), 0.0) / n_samples), n_samples};
}

// Hierarchical proposal for the configuration integral: a uniform root point
// in B_n(0), then each point offset from a uniformly chosen predecessor with
// radial density proportional to r^{1-gamma^2} on [r_min, (k-1)e]. The
// offset density cancels the nearest singular pair, keeping weights bounded
// for k = 2; the tiny floor r_min keeps the proposal normalizable when
// gamma^2 >= 2.
struct u_sampler_config {
    double r_min = std::exp(-12.0);
    int n_inner = 32;            // field replicas per configuration
    bool delta_exponent = false; // use gamma^2 + delta in the denominator
    field_config field_cfg{};
};

struct u_estimate {
    double value = 0.0;
    double std_error = 0.0;
    std::int64_t n_outer = 0;
    int n_inner = 0;
};

namespace cluster_detail {

struct proposal_draw {
    std::vector<vec2> pts;
    double log_density = 0.0;
};

inline proposal_draw draw_configuration(int k, double n_radius, double r_max, double exponent,
                                        double r_min, rng_stream& rs) {
    // exponent is the radial density power: f(r) ~ r^exponent on [r_min, r_max].
    proposal_draw out;
    const double area = std::numbers::pi * n_radius * n_radius;
    const double rr = n_radius * std::sqrt(rs.next_uniform());
    const double th0 = 2 * std::numbers::pi * rs.next_uniform();
    out.pts.push_back({rr * std::cos(th0), rr * std::sin(th0)});
    out.log_density = -std::log(area);

    const double p1 = exponent + 1.0;  // power for the cdf of r^exponent dr
    const double lo = std::pow(r_min, p1), hi = std::pow(r_max, p1);
    const double norm = (hi - lo) / p1;  // integral of r^exponent over [r_min, r_max]

    for (int i = 1; i < k; ++i) {
        const int j = static_cast<int>(rs.next_uniform() * i);
        const double u = rs.next_uniform();
        const double r = std::pow(lo + u * (hi - lo), 1.0 / p1);
        const double th = 2 * std::numbers::pi * rs.next_uniform();
        out.pts.push_back({out.pts[j].x + r * std::cos(th), out.pts[j].y + r * std::sin(th)});
        // Mixture density of the new point given its predecessors.
        double q = 0.0;
        for (int l = 0; l < i; ++l) {
            const double d = dist(out.pts[i], out.pts[l]);
            if (d >= r_min && d <= r_max)
                q += std::pow(d, exponent) / norm / (2 * std::numbers::pi * d);
        }
        q /= i;
        out.log_density += std::log(q);
    }
    return out;
}

}

/// Importance-sampled Monte Carlo estimates of
///   u^n_k(x) = int_{B_n(0)^k} P^{0,x}_K / prod |z_i - z_j|^{gamma^2}
///              1{s(K) <= e} dz_K
/// for several x at once, unbiased under the documented hierarchical
/// proposal. P is estimated by n_inner fresh field replicas per
/// configuration; all x values share configurations and fields (common
/// random numbers), so the estimates are monotone in x sample by sample.
inline std::vector<u_estimate> estimate_u_multi(int n, int k, const std::vector<double>& xs,
                                                double gamma, double delta, int n_outer,
                                                int n_inner, std::uint64_t seed,
                                                int threads = 1,
                                                const u_sampler_config& ucfg_in = {}) {
    if (k <= 0) throw parameter_error("k", ">= 1", "need at least one point");
    if (n <= 0) throw parameter_error("n", ">= 1", "domain radius index must be positive");
    const auto cc = cluster_constants::for_gamma(gamma, delta);
    u_sampler_config ucfg = ucfg_in;
    ucfg.n_inner = n_inner;
    const int nx = static_cast<int>(xs.size());

    if (k == 1) {
        // P == 1 and there is no interaction: u = area of B_n(0), exactly.
        return std::vector<u_estimate>(
            nx, u_estimate{std::numbers::pi * n * n, 0.0, n_outer, n_inner});
    }

    const double g2 = gamma * gamma + (ucfg.delta_exponent ? delta : 0.0);
    const double r_max = (k - 1) * std::numbers::e;
    const double exponent = 1.0 - g2;

    std::vector<std::vector<double>> vals(nx, std::vector<double>(n_outer, 0.0));
    parallel_for(n_outer, threads, [&](int t) {
        rng_stream rs(rng_key::root(seed, stream::u_config).chain(t));
        const auto draw =
            cluster_detail::draw_configuration(k, n, r_max, exponent, ucfg.r_min, rs);

        // Integrand support checks.
        bool inside = true;
        for (const auto& p : draw.pts)
            if (p.norm() > static_cast<double>(n)) inside = false;
        double log_f = 0.0;
        if (inside) {
            for (int i = 0; i < k && inside; ++i)
                for (int j = i + 1; j < k; ++j) {
                    const double d = dist(draw.pts[i], draw.pts[j]);
                    if (d == 0.0) {
                        inside = false;
                        break;
                    }
                    log_f -= g2 * std::log(d);
                }
        }
        point_set K{draw.pts};
        double s_K = 0.0;
        if (inside) {
            s_K = separation_split(K).s;
            if (s_K > std::numbers::e) inside = false;  // indicator uses <=
            // s(K) = e exactly makes ceil(log 1/s) = -1 < 0 and the tree at
            // initial scale 0 undefined; a measure-zero boundary, excluded.
            if (inside && scale_of(s_K) < 0) inside = false;
        }
        if (!inside) return;

        const int a0 = 0;
        const cluster_tree shape = build_cluster_tree(
            K, a0, [](int, int, const vec2&) { return 0.0; }, gamma);
        const double weight = std::exp(log_f - draw.log_density);

        // Inner estimate of P^{0,x}_K, every x on the same replicas.
        std::vector<int> hits(nx, 0);
        std::vector<double> psi(shape.vertices.size(), 0.0);
        for (int r = 0; r < ucfg.n_inner; ++r) {
            const std::uint64_t fs =
                rng_key::root(seed, stream::u_field).chain(t).chain(r).state;
            point_field_sampler sampler(fs, ucfg.field_cfg);
            std::function<void(int, int, int)> fill = [&](int idx, int parent, int a_prev) {
                const auto& v = shape.vertices[idx];
                if (v.is_leaf()) return;
                const vec2 left = v.S.points[cluster_detail::leftmost(v.S.points)];
                const double base = parent < 0 ? 0.0 : psi[parent];
                psi[idx] = base + sampler.eval_range(a_prev, v.m, left);
                fill(v.left, idx, v.m);
                fill(v.right, idx, v.m);
            };
            fill(0, -1, a0);
            for (int xi = 0; xi < nx; ++xi) {
                bool ok = true;
                for (const auto& v : shape.vertices) {
                    if (v.is_leaf()) continue;
                    if (psi[&v - shape.vertices.data()] + v.eta + xs[xi] >
                        (cc.Q + cc.delta) * (v.m - a0)) {
                        ok = false;
                        break;
                    }
                }
                if (ok) ++hits[xi];
            }
        }
        for (int xi = 0; xi < nx; ++xi)
            vals[xi][t] = weight * hits[xi] / ucfg.n_inner;
    });

    std::vector<u_estimate> out(nx);
    for (int xi = 0; xi < nx; ++xi) {
        double sum = 0.0, sum2 = 0.0;
        for (double v : vals[xi]) {
            sum += v;
            sum2 += v * v;
        }
        const double mean = sum / n_outer;
        const double var = std::max(sum2 / n_outer - mean * mean, 0.0);
        out[xi] = {mean, std::sqrt(var / n_outer), n_outer, n_inner};
    }
    return out;
}

inline u_estimate estimate_u(int n, int k, double x, double gamma, double delta,
                             int n_outer, int n_inner, std::uint64_t seed,
                             int threads = 1, const u_sampler_config& ucfg = {}) {
    return estimate_u_multi(n, k, {x}, gamma, delta, n_outer, n_inner, seed, threads,
                            ucfg)[0];
}

}
