#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "lqg/errors.hpp"

namespace lqg {

inline constexpr double inf = std::numeric_limits<double>::infinity();

struct vec2 {
    double x = 0.0, y = 0.0;

    vec2 operator+(const vec2& o) const { return {x + o.x, y + o.y}; }
    vec2 operator-(const vec2& o) const { return {x - o.x, y - o.y}; }
    vec2 operator*(double s) const { return {x * s, y * s}; }
    bool operator==(const vec2& o) const { return x == o.x && y == o.y; }
    double norm() const { return std::hypot(x, y); }
};

inline double dist(const vec2& a, const vec2& b) { return (a - b).norm(); }

// Axis-aligned rectangle [lo.x, hi.x] x [lo.y, hi.y].
struct rect {
    vec2 lo, hi;

    static rect centered(vec2 c, double half_width) {
        return {{c.x - half_width, c.y - half_width}, {c.x + half_width, c.y + half_width}};
    }
    double width() const { return hi.x - lo.x; }
    double height() const { return hi.y - lo.y; }
    bool contains(const vec2& p) const {
        return p.x >= lo.x && p.x <= hi.x && p.y >= lo.y && p.y <= hi.y;
    }
    rect expanded(double pad) const { return {{lo.x - pad, lo.y - pad}, {hi.x + pad, hi.y + pad}}; }
};

// Dense row-major 2-D array. Index (i,j) = (column, row); value i + j*nx.
template <class T>
struct grid2 {
    int nx = 0, ny = 0;
    std::vector<T> v;

    grid2() = default;
    grid2(int nx_, int ny_, T fill = T{}) : nx(nx_), ny(ny_), v(static_cast<std::size_t>(nx_) * ny_, fill) {}

    T& at(int i, int j) { return v[static_cast<std::size_t>(j) * nx + i]; }
    const T& at(int i, int j) const { return v[static_cast<std::size_t>(j) * nx + i]; }
    std::size_t size() const { return v.size(); }
    bool same_shape(int onx, int ony) const { return nx == onx && ny == ony; }
};

// Lattice of sample nodes: node (i,j) sits at origin + (i,j)*spacing.
struct lattice {
    vec2 origin;
    double spacing = 0.0;
    int nx = 0, ny = 0;

    vec2 pos(int i, int j) const { return {origin.x + i * spacing, origin.y + j * spacing}; }
    // Containing cell for bilinear interpolation; false if p needs nodes
    // outside the lattice.
    bool locate(const vec2& p, int& i, int& j, double& fx, double& fy) const {
        const double gx = (p.x - origin.x) / spacing;
        const double gy = (p.y - origin.y) / spacing;
        i = static_cast<int>(std::floor(gx));
        j = static_cast<int>(std::floor(gy));
        if (i < 0 || j < 0 || i > nx - 2 || j > ny - 2) {
            // Points on the outer node line are still interpolable.
            if (i == nx - 1 && gx == static_cast<double>(i)) i -= 1;
            if (j == ny - 1 && gy == static_cast<double>(j)) j -= 1;
            if (i < 0 || j < 0 || i > nx - 2 || j > ny - 2) return false;
        }
        fx = gx - i;
        fy = gy - j;
        return true;
    }
    rect bounds() const { return {origin, {origin.x + (nx - 1) * spacing, origin.y + (ny - 1) * spacing}}; }
};

inline double bilinear(const grid2<double>& g, const lattice& lat, const vec2& p) {
    int i, j;
    double fx, fy;
    if (!lat.locate(p, i, j, fx, fy))
        throw out_of_domain_error("bilinear: point (" + std::to_string(p.x) + "," +
                                  std::to_string(p.y) + ") outside sampled window");
    const double v00 = g.at(i, j), v10 = g.at(i + 1, j);
    const double v01 = g.at(i, j + 1), v11 = g.at(i + 1, j + 1);
    return v00 * (1 - fx) * (1 - fy) + v10 * fx * (1 - fy) + v01 * (1 - fx) * fy + v11 * fx * fy;
}

// Bitmask over the nodes of a lattice, with the query that produced it.
struct cell_mask {
    int nx = 0, ny = 0;
    std::vector<std::uint8_t> bits;
    // Metadata of the defining query.
    vec2 center{};
    double radius = 0.0;
    std::string kind;
    bool truncated = false;  // the defining region touched the window boundary

    cell_mask() = default;
    cell_mask(int nx_, int ny_) : nx(nx_), ny(ny_), bits(static_cast<std::size_t>(nx_) * ny_, 0) {}

    bool get(int i, int j) const { return bits[static_cast<std::size_t>(j) * nx + i] != 0; }
    void set(int i, int j, bool b = true) { bits[static_cast<std::size_t>(j) * nx + i] = b ? 1 : 0; }
    std::size_t count() const {
        std::size_t c = 0;
        for (auto b : bits) c += b;
        return c;
    }
    bool same_shape(int onx, int ony) const { return nx == onx && ny == ony; }

    static cell_mask full(int nx, int ny) {
        cell_mask m(nx, ny);
        std::fill(m.bits.begin(), m.bits.end(), std::uint8_t{1});
        m.kind = "full";
        return m;
    }
};

inline bool is_subset(const cell_mask& a, const cell_mask& b) {
    if (!a.same_shape(b.nx, b.ny)) throw shape_error("is_subset: mask dimensions differ");
    for (std::size_t n = 0; n < a.bits.size(); ++n)
        if (a.bits[n] && !b.bits[n]) return false;
    return true;
}

}
