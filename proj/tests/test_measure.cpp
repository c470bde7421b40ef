#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <sstream>

#include "lqg/measure.hpp"
#include "lqg/parallel.hpp"

using namespace lqg;

namespace {

field_grid zero_field(double half, double sp) {
    return sample_star_field(0, 0, rect::centered({0, 0}, half), sp, 1);
}

}

TEST_CASE("zero field lqg masses carry the epsilon prefactor exactly") {
    const double sp = 0.0025;
    const auto f = zero_field(0.16, sp);
    const auto m = build_measure(f, 1.0, 0.01, measure_normalization::lqg);
    const double expect = std::sqrt(0.01) * sp * sp;
    int checked = 0;
    for (int j = m.margin_cells; j < m.lat.ny - m.margin_cells; ++j)
        for (int i = m.margin_cells; i < m.lat.nx - m.margin_cells; ++i) {
            REQUIRE(m.masses.at(i, j) == Catch::Approx(expect).epsilon(1e-14));
            ++checked;
        }
    REQUIRE(checked > 1000);
    CHECK(m.total_mass == Catch::Approx(expect * checked).epsilon(1e-12));
}

TEST_CASE("constant field shift multiplies masses by e^{gamma c}") {
    const double sp = 1.0 / 256;
    auto f = sample_star_field(0, 2, rect::centered({0, 0}, 0.25), sp, 7);
    const auto m0 = build_measure(f, 1.0, 4 * sp);
    const auto f3 = shift_field(f, std::log(3.0));
    const auto m3 = build_measure(f3, 1.0, 4 * sp);
    for (std::size_t i = 0; i < m0.masses.v.size(); ++i) {
        if (m0.masses.v[i] == 0.0) {
            REQUIRE(m3.masses.v[i] == 0.0);
            continue;
        }
        REQUIRE(m3.masses.v[i] / m0.masses.v[i] == Catch::Approx(3.0).epsilon(1e-12));
    }
}

TEST_CASE("gmc normalization makes the mean cell mass Lebesgue") {
    const int bands = 2;
    const double sp = std::exp(-bands) / 8.0;
    const rect win = rect::centered({0, 0}, 12 * sp);
    const double eps = 4 * sp;
    const int reps = 1500;
    std::vector<double> masses(reps);
    parallel_for(reps, 2, [&](int r) {
        const auto f = sample_star_field(0, bands, win, sp, 9000 + r);
        const auto m = build_measure(f, 1.0, eps, measure_normalization::gmc);
        masses[r] = m.masses.at(m.lat.nx / 2, m.lat.ny / 2);
    });
    double s = 0, s2 = 0;
    for (double v : masses) {
        s += v;
        s2 += v * v;
    }
    const double mean = s / reps;
    const double se = std::sqrt((s2 / reps - mean * mean) / reps);
    INFO("mean " << mean << " se " << se << " cell " << sp * sp);
    CHECK(std::abs(mean - sp * sp) <= 3 * se);
}

TEST_CASE("region volume: empty, full, additivity, monotonicity") {
    const double sp = 0.005;
    const auto f = sample_star_field(0, 2, rect::centered({0, 0}, 0.2), sp, 3);
    const auto m = build_measure(f, 1.2, 4 * sp);
    cell_mask empty(m.lat.nx, m.lat.ny);
    CHECK(region_volume(m, empty) == 0.0);
    const auto full = cell_mask::full(m.lat.nx, m.lat.ny);
    CHECK(region_volume(m, full) == Catch::Approx(m.total_mass).epsilon(1e-15));

    cell_mask a(m.lat.nx, m.lat.ny), b(m.lat.nx, m.lat.ny), ab(m.lat.nx, m.lat.ny);
    for (int j = 0; j < m.lat.ny; ++j)
        for (int i = 0; i < m.lat.nx; ++i) {
            if (i < m.lat.nx / 2)
                a.set(i, j);
            else
                b.set(i, j);
            ab.set(i, j);
        }
    CHECK(region_volume(m, a) + region_volume(m, b) ==
          Catch::Approx(region_volume(m, ab)).epsilon(1e-12));
    CHECK(region_volume(m, a) <= region_volume(m, ab));
}

TEST_CASE("masses depend only on the field within epsilon of the cell") {
    const double sp = 0.004;
    const double eps = 4 * sp;
    auto f = sample_star_field(0, 2, rect::centered({0, 0}, 0.2), sp, 13);
    const auto m0 = build_measure(f, 1.0, eps);
    // Scramble the field outside a disk; masses of cells deeper than the
    // mollification radius plus one interpolation cell must not move.
    field_grid g = f;
    for (int j = 0; j < g.lat.ny; ++j)
        for (int i = 0; i < g.lat.nx; ++i)
            if (g.lat.pos(i, j).norm() > 0.1) g.values.at(i, j) += 17.0 + i * 0.01 - j * 0.02;
    const auto m1 = build_measure(g, 1.0, eps);
    int checked = 0;
    for (int j = 0; j < g.lat.ny; ++j)
        for (int i = 0; i < g.lat.nx; ++i)
            if (g.lat.pos(i, j).norm() < 0.1 - eps - 2 * sp) {
                REQUIRE(m1.masses.at(i, j) == m0.masses.at(i, j));
                ++checked;
            }
    REQUIRE(checked > 100);
}

TEST_CASE("measure parameter validation") {
    const auto f = zero_field(0.1, 0.002);
    CHECK_THROWS_AS(build_measure(f, 2.5, 0.008), parameter_error);
    CHECK_THROWS_AS(build_measure(f, -0.1, 0.008), parameter_error);
    CHECK_THROWS_AS(build_measure(f, 1.0, 0.003), resolution_error);
    CHECK_THROWS_AS(build_measure(f, 1.0, 0.012), parameter_error);  // not dyadic
    try {
        build_measure(f, 2.5, 0.008);
        FAIL("expected throw");
    } catch (const parameter_error& e) {
        CHECK(e.key == "gamma");
        CHECK(e.range == "(0,2)");
    }
    const auto m = build_measure(f, 1.0, 0.008);
    cell_mask wrong(3, 3);
    CHECK_THROWS_AS(region_volume(m, wrong), shape_error);
}

TEST_CASE("gamma zero gives flat Lebesgue cells") {
    const auto f = zero_field(0.1, 0.002);
    for (auto norm : {measure_normalization::lqg, measure_normalization::gmc}) {
        const auto m = build_measure(f, 0.0, 0.008, norm);
        const int c = m.lat.nx / 2;
        CHECK(m.masses.at(c, c) == Catch::Approx(0.002 * 0.002).epsilon(1e-14));
    }
}

TEST_CASE("measure container round trip") {
    const auto f = zero_field(0.1, 0.002);
    const auto m = build_measure(f, 1.0, 0.008);
    std::stringstream ss;
    save_measure(m, ss);
    const auto g = load_measure(ss);
    CHECK(g.gamma == m.gamma);
    CHECK(g.epsilon == m.epsilon);
    CHECK(g.total_mass == m.total_mass);
    REQUIRE(g.masses.v.size() == m.masses.v.size());
    for (std::size_t i = 0; i < g.masses.v.size(); ++i)
        REQUIRE(g.masses.v[i] == m.masses.v[i]);
}
