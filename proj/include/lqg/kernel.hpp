#pragma once

#include <array>
#include <cmath>
#include <numbers>

#include "lqg/errors.hpp"

namespace lqg {

// Radial bump used to synthesize the scale bands: a fixed polynomial bump
//   k(x) = A (1 - (2e|x|)^2)^3   on |x| < 1/(2e),  0 outside,
// with A chosen so that the L2 norm over the plane is exactly 1. Any smooth
// nonnegative radial bump with support inside radius 1/(2e) would do; only
// the smooth part of the covariance depends on the choice.
struct kernel_spec {
    double support_radius = 1.0 / (2.0 * std::numbers::e);
    double amplitude = 2.0 * std::numbers::e * std::sqrt(7.0 / std::numbers::pi);

    double operator()(double r) const {
        const double u = r / support_radius;
        if (u >= 1.0) return 0.0;
        const double w = 1.0 - u * u;
        return amplitude * w * w * w;
    }

    // Value from squared radius; avoids the sqrt in hot loops.
    double from_r2(double r2) const {
        const double u2 = r2 / (support_radius * support_radius);
        if (u2 >= 1.0) return 0.0;
        const double w = 1.0 - u2;
        return amplitude * w * w * w;
    }

    // Numerical L2 norm over the plane (midpoint rule in r^2); the spec
    // value is 1 and tests pin it to 1e-6.
    double l2_norm(int n = 200000) const {
        // integral of k^2 over plane = pi * int_0^{R^2} k(sqrt(s))^2 ds
        const double R2 = support_radius * support_radius;
        double acc = 0.0;
        const double ds = R2 / n;
        for (int i = 0; i < n; ++i) {
            const double s = (i + 0.5) * ds;
            const double k = from_r2(s);
            acc += k * k * ds;
        }
        return std::sqrt(std::numbers::pi * acc);
    }
};

// Geometric midpoint quadrature of the scale integral over one band
// [e^{-n}, e^{-(n-1)}]. Node j covers the sub-band [e^{-n+j/m}, e^{-n+(j+1)/m}]
// with t_j at its geometric midpoint. Weights carry t^{-3/2} sqrt(dt) and a
// global normalization making the (alignment-averaged) band variance exactly 1.
struct band_quadrature {
    static constexpr int nodes_per_band = 4;

    // t values and white-noise weights for band n.
    struct node {
        double t;
        double weight;  // multiplies  delta * sum_c k((x-y_c)/t) g_c
    };

    static std::array<node, nodes_per_band> nodes(int n) {
        std::array<node, nodes_per_band> out;
        const double base = std::exp(-static_cast<double>(n));
        const double norm = quad_constant();
        for (int j = 0; j < nodes_per_band; ++j) {
            const double t_lo = base * std::exp(static_cast<double>(j) / nodes_per_band);
            const double t_hi = base * std::exp(static_cast<double>(j + 1) / nodes_per_band);
            const double t_mid = std::sqrt(t_lo * t_hi);
            const double w = std::pow(t_mid, -1.5) * std::sqrt(t_hi - t_lo) / std::sqrt(norm);
            out[j] = {t_mid, w};
        }
        return out;
    }

    // sum_j dt_j / t_j for the midpoint rule; dividing the weights by its
    // square root pins E[phi_n(z)^2] = 1.
    static double quad_constant() {
        return nodes_per_band *
               (std::exp(0.5 / nodes_per_band) - std::exp(-0.5 / nodes_per_band));
    }
};

}
