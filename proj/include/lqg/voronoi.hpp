#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <queue>
#include <vector>

#include "lqg/errors.hpp"
#include "lqg/geometry.hpp"
#include "lqg/measure.hpp"
#include "lqg/metric.hpp"
#include "lqg/rng.hpp"

namespace lqg {

// Poisson sampling from the volume measure, metric Voronoi tessellation with
// adjacency and traced boundary, and the harmonic (Tutte) embedding.

/// Poisson point sample of intensity lambda * measure: per-cell counts are
/// Poisson(lambda * mass), positions uniform within their cell.
inline std::vector<vec2> poisson_sample(const measure_grid& m, double lambda,
                                        const cell_mask& domain, std::uint64_t seed) {
    if (lambda <= 0.0) throw parameter_error("lambda", "> 0", "intensity must be positive");
    if (!domain.same_shape(m.lat.nx, m.lat.ny))
        throw shape_error("poisson_sample: domain mask does not match the measure grid");
    std::vector<vec2> pts;
    const double half = 0.5 * m.lat.spacing;
    for (int j = 0; j < m.lat.ny; ++j)
        for (int i = 0; i < m.lat.nx; ++i) {
            if (!domain.get(i, j)) continue;
            const double mean = lambda * m.masses.at(i, j);
            if (mean <= 0.0) continue;
            rng_stream rs(rng_key::root(seed, stream::poisson).chain(i, j));
            const auto cnt = rs.next_poisson(mean);
            const vec2 c = m.lat.pos(i, j);
            for (std::uint64_t q = 0; q < cnt; ++q)
                pts.push_back({c.x + (2.0 * rs.next_uniform() - 1.0) * half,
                               c.y + (2.0 * rs.next_uniform() - 1.0) * half});
        }
    return pts;
}

struct tessellation {
    std::vector<vec2> sites;
    grid2<int> labels;  // -1 outside the domain
    cell_mask domain;
    std::vector<std::pair<int, int>> edges;  // adjacency, i < j
    std::vector<int> boundary_sites;         // counterclockwise along the domain boundary
    int start_site = -1;                     // site owning the cell nearest the domain centroid
};

namespace voronoi_detail {

// Counterclockwise contour of a connected mask via Moore-neighbour tracing.
inline std::vector<int> trace_boundary(const cell_mask& mask) {
    const int nx = mask.nx, ny = mask.ny;
    auto inside = [&](int i, int j) {
        return i >= 0 && j >= 0 && i < nx && j < ny && mask.get(i, j);
    };
    int si = -1, sj = -1;
    for (int j = 0; j < ny && si < 0; ++j)
        for (int i = 0; i < nx; ++i)
            if (mask.get(i, j)) {
                si = i;
                sj = j;
                break;
            }
    if (si < 0) return {};

    // Moore neighbourhood in clockwise screen order; with j increasing
    // upwards this traces the contour counterclockwise.
    static constexpr int mi[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
    static constexpr int mj[8] = {0, -1, -1, -1, 0, 1, 1, 1};

    std::vector<int> contour;
    int ci = si, cj = sj;
    int back = 0;  // index in the Moore ring of the cell we came from (west of start)
    contour.push_back(cj * nx + ci);
    const std::size_t guard = static_cast<std::size_t>(nx) * ny * 4 + 16;
    for (std::size_t step = 0; step < guard; ++step) {
        int found = -1;
        for (int k = 1; k <= 8; ++k) {
            const int idx = (back + k) % 8;
            if (inside(ci + mi[idx], cj + mj[idx])) {
                found = idx;
                break;
            }
        }
        if (found < 0) break;  // isolated cell
        const int ni = ci + mi[found], nj = cj + mj[found];
        // Next backtrack: the neighbour checked just before the hit, viewed
        // from the new cell.
        const int prev = (found + 7) % 8;
        const int pi = ci + mi[prev], pj = cj + mj[prev];
        ci = ni;
        cj = nj;
        // Direction from new cell back to (pi,pj).
        back = 0;
        for (int k = 0; k < 8; ++k)
            if (ci + mi[k] == pi && cj + mj[k] == pj) {
                back = k;
                break;
            }
        if (ci == si && cj == sj) break;
        contour.push_back(cj * nx + ci);
    }
    return contour;
}

// Simple symmetric graph for the random walk / harmonic solves.
struct walk_graph {
    int n = 0;
    std::vector<std::vector<int>> nbrs;

    static walk_graph from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
        walk_graph g;
        g.n = n;
        g.nbrs.resize(n);
        for (auto [a, b] : edges) {
            g.nbrs[a].push_back(b);
            g.nbrs[b].push_back(a);
        }
        return g;
    }
    bool connected(const std::vector<std::uint8_t>& present) const {
        int first = -1, total = 0;
        for (int i = 0; i < n; ++i)
            if (present[i]) {
                if (first < 0) first = i;
                ++total;
            }
        if (first < 0) return false;
        std::vector<std::uint8_t> seen(n, 0);
        std::vector<int> stack{first};
        seen[first] = 1;
        int cnt = 0;
        while (!stack.empty()) {
            const int u = stack.back();
            stack.pop_back();
            ++cnt;
            for (int v : nbrs[u])
                if (present[v] && !seen[v]) {
                    seen[v] = 1;
                    stack.push_back(v);
                }
        }
        return cnt == total;
    }
};

// Conjugate gradient with Jacobi preconditioning on the interior block of
// the graph Laplacian: solve (D - W)|_II x = rhs.
inline std::vector<double> laplacian_solve(const walk_graph& g,
                                           const std::vector<std::uint8_t>& interior,
                                           const std::vector<double>& rhs, double tol = 1e-10) {
    const int n = g.n;
    std::vector<double> x(n, 0.0), r = rhs, z(n, 0.0), p(n, 0.0), Ap(n, 0.0);
    std::vector<double> invd(n, 0.0);
    for (int i = 0; i < n; ++i)
        if (interior[i]) {
            const double d = static_cast<double>(g.nbrs[i].size());
            invd[i] = d > 0.0 ? 1.0 / d : 0.0;
        }
    auto matvec = [&](const std::vector<double>& v, std::vector<double>& out) {
        for (int i = 0; i < n; ++i) {
            if (!interior[i]) {
                out[i] = 0.0;
                continue;
            }
            double acc = static_cast<double>(g.nbrs[i].size()) * v[i];
            for (int nb : g.nbrs[i])
                if (interior[nb]) acc -= v[nb];
            out[i] = acc;
        }
    };
    double rz = 0.0, rhs_norm = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!interior[i]) r[i] = 0.0;
        z[i] = r[i] * invd[i];
        rz += r[i] * z[i];
        rhs_norm += r[i] * r[i];
    }
    p = z;
    if (rhs_norm == 0.0) return x;
    const int max_iter = 4 * n + 100;
    for (int it = 0; it < max_iter; ++it) {
        matvec(p, Ap);
        double pAp = 0.0;
        for (int i = 0; i < n; ++i) pAp += p[i] * Ap[i];
        if (pAp <= 0.0) break;
        const double alpha = rz / pAp;
        double rnorm = 0.0;
        for (int i = 0; i < n; ++i) {
            x[i] += alpha * p[i];
            r[i] -= alpha * Ap[i];
            rnorm += r[i] * r[i];
        }
        if (std::sqrt(rnorm) <= tol * std::sqrt(rhs_norm)) break;
        double rz_new = 0.0;
        for (int i = 0; i < n; ++i) {
            z[i] = r[i] * invd[i];
            rz_new += r[i] * z[i];
        }
        const double beta = rz_new / rz;
        rz = rz_new;
        for (int i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    return x;
}

}

/// Metric Voronoi tessellation of `domain`: every cell gets the label of a
/// nearest site (ties to the lowest site index), adjacency links sites whose
/// cells share a grid edge, and boundary sites are listed in traced
/// counterclockwise order along the domain boundary.
inline tessellation voronoi_partition(const metric_graph& g, const std::vector<vec2>& sites,
                                      const cell_mask& domain) {
    if (!domain.same_shape(g.nx(), g.ny()))
        throw shape_error("voronoi_partition: domain mask does not match grid");
    const int nx = g.nx(), ny = g.ny();
    tessellation tess;
    tess.sites = sites;
    tess.domain = domain;
    tess.labels = grid2<int>(nx, ny, -1);

    // Multi-source Dijkstra carrying labels; tie distances settle in label
    // order because the heap orders (d, label, node).
    struct item {
        double d;
        int label, node;
        bool operator>(const item& o) const {
            if (d != o.d) return d > o.d;
            if (label != o.label) return label > o.label;
            return node > o.node;
        }
    };
    std::priority_queue<item, std::vector<item>, std::greater<item>> heap;
    std::vector<double> dist_v(g.n_nodes(), inf);
    int n_seeded = 0;
    for (std::size_t s = 0; s < sites.size(); ++s) {
        int node;
        try {
            node = g.node_of(sites[s]);
        } catch (const out_of_domain_error&) {
            continue;
        }
        if (!domain.bits[node]) continue;
        heap.push({0.0, static_cast<int>(s), node});
        ++n_seeded;
    }
    if (n_seeded == 0) throw precondition_error("voronoi_partition: no site inside domain");

    const double sp = g.lat().spacing;
    const double diag = sp * std::numbers::sqrt2;
    static constexpr int di[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    static constexpr int dj[8] = {0, 0, 1, -1, 1, -1, 1, -1};
    while (!heap.empty()) {
        const auto [d, label, u] = heap.top();
        heap.pop();
        if (tess.labels.v[u] >= 0) continue;
        tess.labels.v[u] = label;
        dist_v[u] = d;
        const int ui = u % nx, uj = u / nx;
        for (int k = 0; k < 8; ++k) {
            const int vi = ui + di[k], vj = uj + dj[k];
            if (vi < 0 || vj < 0 || vi >= nx || vj >= ny) continue;
            const int v = vj * nx + vi;
            if (tess.labels.v[v] >= 0 || !domain.bits[v]) continue;
            const double nd = d + g.edge_weight(u, v, k < 4 ? sp : diag);
            if (nd < dist_v[v]) {
                dist_v[v] = nd;
                heap.push({nd, label, v});
            }
        }
    }

    // Adjacency from 4-neighbour label changes.
    std::vector<std::pair<int, int>> raw;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
            const int a = tess.labels.at(i, j);
            if (a < 0) continue;
            if (i + 1 < nx) {
                const int b = tess.labels.at(i + 1, j);
                if (b >= 0 && b != a) raw.push_back({std::min(a, b), std::max(a, b)});
            }
            if (j + 1 < ny) {
                const int b = tess.labels.at(i, j + 1);
                if (b >= 0 && b != a) raw.push_back({std::min(a, b), std::max(a, b)});
            }
        }
    std::sort(raw.begin(), raw.end());
    raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
    tess.edges = std::move(raw);

    // Boundary sites in traced order.
    const auto contour = voronoi_detail::trace_boundary(domain);
    for (int node : contour) {
        const int lbl = tess.labels.v[node];
        if (lbl < 0) continue;
        if (std::find(tess.boundary_sites.begin(), tess.boundary_sites.end(), lbl) ==
            tess.boundary_sites.end())
            tess.boundary_sites.push_back(lbl);
    }

    // Start site: owner of the domain cell nearest the domain centroid.
    double cx = 0.0, cy = 0.0;
    std::size_t cnt = 0;
    for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i)
            if (domain.get(i, j)) {
                const vec2 p = g.lat().pos(i, j);
                cx += p.x;
                cy += p.y;
                ++cnt;
            }
    if (cnt > 0) {
        const vec2 centroid{cx / cnt, cy / cnt};
        double best = inf;
        for (int j = 0; j < ny; ++j)
            for (int i = 0; i < nx; ++i)
                if (domain.get(i, j) && tess.labels.at(i, j) >= 0) {
                    const double d = dist(g.lat().pos(i, j), centroid);
                    if (d < best) {
                        best = d;
                        tess.start_site = tess.labels.at(i, j);
                    }
                }
    }
    return tess;
}

/// Fill complementary components of a mask that do not touch the grid edge.
inline cell_mask fill_holes(const cell_mask& mask) {
    const int nx = mask.nx, ny = mask.ny;
    std::vector<std::uint8_t> outside(static_cast<std::size_t>(nx) * ny, 0);
    std::vector<int> stack;
    auto push = [&](int i, int j) {
        const std::size_t idx = static_cast<std::size_t>(j) * nx + i;
        if (!outside[idx] && !mask.bits[idx]) {
            outside[idx] = 1;
            stack.push_back(static_cast<int>(idx));
        }
    };
    for (int i = 0; i < nx; ++i) {
        push(i, 0);
        push(i, ny - 1);
    }
    for (int j = 0; j < ny; ++j) {
        push(0, j);
        push(nx - 1, j);
    }
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        const int i = u % nx, j = u / nx;
        if (i > 0) push(i - 1, j);
        if (i + 1 < nx) push(i + 1, j);
        if (j > 0) push(i, j - 1);
        if (j + 1 < ny) push(i, j + 1);
    }
    cell_mask out = mask;
    out.kind = mask.kind + "_filled";
    for (std::size_t idx = 0; idx < out.bits.size(); ++idx)
        if (!outside[idx]) out.bits[idx] = 1;
    return out;
}

enum class tutte_method { linear_solve, walk_mc };

struct embedding {
    std::vector<vec2> positions;           // per site; sites without cells stay at origin
    std::vector<std::uint8_t> is_boundary;
    std::vector<int> boundary_order;       // boundary sites, x0 first
    std::vector<double> boundary_p;        // cumulative hitting probabilities, ends at 1
    double harmonic_residual = 0.0;        // max interior deviation from neighbour mean
};

/// Tutte embedding: boundary sites on the unit circle at cumulative
/// hitting-probability angles 2 pi p_j (x0 = boundary site of lowest index),
/// interior sites discrete-harmonically. Hitting probabilities from the
/// walk started at tess.start_site come either from one Laplacian solve
/// (linear_solve) or from n_walks simple-random-walk samples (walk_mc).
/// mark_site >= 0 rotates the embedding so that site lands on the positive
/// real axis.
inline embedding tutte_embedding(const tessellation& tess, tutte_method method,
                                 int n_walks = 100000, std::uint64_t seed = 0,
                                 int mark_site = -1) {
    const int n = static_cast<int>(tess.sites.size());
    if (static_cast<int>(tess.boundary_sites.size()) < 3)
        throw topology_error("tutte_embedding: need at least 3 boundary sites");

    std::vector<std::uint8_t> present(n, 0);
    for (const auto& row : tess.labels.v)
        if (row >= 0) present[row] = 1;
    const auto g = voronoi_detail::walk_graph::from_edges(n, tess.edges);
    if (!g.connected(present))
        throw topology_error("tutte_embedding: adjacency graph is disconnected");

    std::vector<std::uint8_t> boundary(n, 0);
    for (int b : tess.boundary_sites) boundary[b] = 1;
    std::vector<std::uint8_t> interior(n, 0);
    for (int i = 0; i < n; ++i) interior[i] = present[i] && !boundary[i];

    const int start = tess.start_site;
    if (start < 0) throw precondition_error("tutte_embedding: tessellation has no start site");

    // Hitting probability of each boundary site.
    std::vector<double> hit(n, 0.0);
    if (boundary[start]) {
        hit[start] = 1.0;
    } else if (method == tutte_method::linear_solve) {
        std::vector<double> rhs(n, 0.0);
        rhs[start] = 1.0;
        const auto u = voronoi_detail::laplacian_solve(g, interior, rhs);
        for (int b = 0; b < n; ++b) {
            if (!boundary[b]) continue;
            double acc = 0.0;
            for (int nb : g.nbrs[b])
                if (interior[nb]) acc += u[nb];
            hit[b] = acc;
        }
    } else {
        for (int w = 0; w < n_walks; ++w) {
            rng_stream rs(rng_key::root(seed, stream::walk_mc).chain(w));
            int cur = start;
            while (!boundary[cur]) {
                const auto& nb = g.nbrs[cur];
                cur = nb[static_cast<std::size_t>(rs.next_uniform() * nb.size()) % nb.size()];
            }
            hit[cur] += 1.0;
        }
        for (auto& h : hit) h /= n_walks;
    }

    // Cyclic boundary order rotated so the lowest-index site is x0; cumulative
    // increments normalized to end exactly at 1.
    embedding emb;
    emb.positions.assign(n, {0.0, 0.0});
    emb.is_boundary.assign(n, 0);
    emb.boundary_order = tess.boundary_sites;
    const auto lowest = std::min_element(emb.boundary_order.begin(), emb.boundary_order.end());
    std::rotate(emb.boundary_order.begin(), lowest, emb.boundary_order.end());
    double total = 0.0;
    for (int b : emb.boundary_order) total += hit[b];
    if (total <= 0.0) throw topology_error("tutte_embedding: walk never reaches the boundary");

    double cum = 0.0;
    emb.boundary_p.resize(emb.boundary_order.size());
    for (std::size_t j = 0; j < emb.boundary_order.size(); ++j) {
        cum += hit[emb.boundary_order[j]] / total;
        emb.boundary_p[j] = cum;
    }
    emb.boundary_p.back() = 1.0;
    for (std::size_t j = 0; j < emb.boundary_order.size(); ++j) {
        const int b = emb.boundary_order[j];
        const double ang = 2.0 * std::numbers::pi * emb.boundary_p[j];
        emb.positions[b] = {std::cos(ang), std::sin(ang)};
        emb.is_boundary[b] = 1;
    }

    // Interior positions: discrete harmonic extension of the boundary values.
    for (int coord = 0; coord < 2; ++coord) {
        std::vector<double> rhs(n, 0.0);
        for (int i = 0; i < n; ++i) {
            if (!interior[i]) continue;
            for (int nb : g.nbrs[i])
                if (boundary[nb])
                    rhs[i] += coord == 0 ? emb.positions[nb].x : emb.positions[nb].y;
        }
        const auto sol = voronoi_detail::laplacian_solve(g, interior, rhs);
        for (int i = 0; i < n; ++i)
            if (interior[i]) (coord == 0 ? emb.positions[i].x : emb.positions[i].y) = sol[i];
    }

    if (mark_site >= 0 && mark_site < n) {
        const vec2 zm = emb.positions[mark_site];
        const double ang = std::atan2(zm.y, zm.x);
        const double c = std::cos(-ang), s = std::sin(-ang);
        for (auto& p : emb.positions) p = {p.x * c - p.y * s, p.x * s + p.y * c};
    }

    for (int i = 0; i < n; ++i) {
        if (!interior[i] || g.nbrs[i].empty()) continue;
        double ax = 0.0, ay = 0.0;
        for (int nb : g.nbrs[i]) {
            ax += emb.positions[nb].x;
            ay += emb.positions[nb].y;
        }
        ax /= g.nbrs[i].size();
        ay /= g.nbrs[i].size();
        emb.harmonic_residual = std::max(
            emb.harmonic_residual, std::hypot(emb.positions[i].x - ax, emb.positions[i].y - ay));
    }
    return emb;
}

}
