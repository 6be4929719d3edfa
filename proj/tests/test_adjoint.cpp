#include <doctest.h>

#include <cmath>
#include <vector>

#include "dupire/adjoint.hpp"
#include "dupire/engine.hpp"
#include "dupire/errors.hpp"
#include "dupire/surface.hpp"

using namespace dupire;

namespace {

VolSurface flat_surface(double v) {
    return VolSurface({50.0, 200.0}, {0.0, 2.0}, Matrix(2, 2, v));
}

SimConfig base_config() {
    SimConfig c;
    c.s0 = 100.0;
    c.maturity = 1.0;
    c.n_steps = 16;
    c.n_paths = 100000;
    c.batch_size = 8192;
    c.scheme = Scheme::LogEuler;
    c.key = {7, 0};
    return c;
}

} // namespace

TEST_CASE("payoff_grad conventions") {
    const Payoff call{PayoffKind::EuropeanCall, 100.0};
    const Payoff put{PayoffKind::EuropeanPut, 100.0};
    CHECK(payoff_grad(call, 120.0) == 1.0);
    CHECK(payoff_grad(call, 80.0) == 0.0);
    CHECK(payoff_grad(call, 100.0) == 0.0);  // documented tie convention
    CHECK(payoff_grad(put, 80.0) == -1.0);
    CHECK(payoff_grad(put, 120.0) == 0.0);
    CHECK(payoff_grad(put, 100.0) == 0.0);
}

TEST_CASE("zero-vol Euler paths give the deterministic delta") {
    SimConfig c = base_config();
    c.scheme = Scheme::Euler;
    c.n_paths = 256;
    c.batch_size = 256;
    const auto s = flat_surface(0.0);

    const auto itm = greeks(c, s, Payoff{PayoffKind::EuropeanCall, 80.0});
    CHECK(itm.delta == 1.0);
    CHECK(itm.delta_se == 0.0);
    // pathwise vega contributions s0 sqrt(dt) Z are nonzero per path but
    // average to zero within noise
    for (std::size_t k = 0; k < itm.vega_grid.size(); ++k) {
        CHECK(std::fabs(itm.vega_grid.storage()[k]) <= 4.0 * itm.vega_se_grid.storage()[k]);
    }

    const auto otm = greeks(c, s, Payoff{PayoffKind::EuropeanCall, 120.0});
    CHECK(otm.delta == 0.0);
    for (const double v : otm.vega_grid.storage()) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("one-step backward pass matches the hand formula") {
    SimConfig c = base_config();
    c.scheme = Scheme::Euler;
    c.n_steps = 1;
    c.n_paths = 1;
    c.batch_size = 1;
    const auto s = flat_surface(0.2);
    const Payoff payoff{PayoffKind::EuropeanCall, 95.0};

    Tape tape;
    const auto terminal = simulate_batch(c, s, 0, &tape);
    Matrix vega(2, 2);
    const auto deltas = backward_batch(tape, c, s, payoff, vega);
    REQUIRE(deltas.size() == 1);

    const double z = normal(c.key, 0, 0);
    const double sqrt_dt = std::sqrt(c.dt());
    const double x1 = terminal[0];
    const double indicator = x1 > payoff.strike ? 1.0 : 0.0;

    // vega contribution to node k is 1{X_1 > K} * s0 * sqrt(dt) * z * w_k
    const auto w = weights(s, c.s0, 0.0);
    const double g = indicator * c.s0 * sqrt_dt * z;
    CHECK(vega(0, 0) == doctest::Approx(g * w.w[0]).epsilon(1e-14));
    CHECK(vega(1, 0) == doctest::Approx(g * w.w[1]).epsilon(1e-14));
    CHECK(vega(0, 1) == doctest::Approx(g * w.w[2]).epsilon(1e-14));
    CHECK(vega(1, 1) == doctest::Approx(g * w.w[3]).epsilon(1e-14));

    // delta: a_0 = 1{X_1 > K} * (1 + sigma sqrt(dt) z), flat surface slope 0
    const double sigma = tape.sigmas[0];
    CHECK(deltas[0] == doctest::Approx(indicator * (1.0 + sigma * sqrt_dt * z)).epsilon(1e-14));
}

TEST_CASE("all paths out of the money: exact zeros") {
    SimConfig c = base_config();
    c.n_paths = 4096;
    c.batch_size = 1024;
    const auto s = flat_surface(0.2);
    const auto report = greeks(c, s, Payoff{PayoffKind::EuropeanCall, 1e7});
    CHECK(report.price.mean == 0.0);
    CHECK(report.price.std_error == 0.0);
    CHECK(report.delta == 0.0);
    CHECK(report.delta_se == 0.0);
    for (std::size_t k = 0; k < report.vega_grid.size(); ++k) {
        CHECK(report.vega_grid.storage()[k] == 0.0);
        CHECK(report.vega_se_grid.storage()[k] == 0.0);
    }
}

TEST_CASE("flat-vol greeks match Black-Scholes closed forms") {
    SimConfig c = base_config();
    const auto s = flat_surface(0.2);
    const auto report = greeks(c, s, Payoff{PayoffKind::EuropeanCall, 100.0});

    // delta oracle: Phi(d1) with d1 = 0.1
    const double delta_oracle = norm_cdf(0.1);
    CHECK(std::fabs(report.delta - delta_oracle) <= 3.0 * report.delta_se);

    // total vega oracle: s0 phi(d1) sqrt(T) = 39.69525
    double vega_sum = 0.0;
    double vega_se_sum = 0.0;
    for (std::size_t k = 0; k < report.vega_grid.size(); ++k) {
        vega_sum += report.vega_grid.storage()[k];
        vega_se_sum += report.vega_se_grid.storage()[k];
    }
    CHECK(std::fabs(vega_sum - 39.69525474770118) <= 3.0 * vega_se_sum);

    // price comes from the same pass
    CHECK(std::fabs(report.price.mean - 7.965567455405796) <= 3.0 * report.price.std_error);
}

TEST_CASE("payoff linearity: doubling is bitwise exact") {
    SimConfig c = base_config();
    c.n_paths = 512;
    c.batch_size = 512;
    c.scheme = Scheme::Euler;
    const auto s = flat_surface(0.25);
    const Payoff payoff{PayoffKind::EuropeanCall, 100.0};

    Tape tape;
    simulate_batch(c, s, 0, &tape);

    Matrix vega1(2, 2);
    std::vector<double> delta1(c.n_paths);
    detail::backward_core(
        tape, c, s, [&](double xt) { return payoff_value(payoff, xt); },
        [&](double xt) { return payoff_grad(payoff, xt); },
        [&](std::uint64_t p, double, double a0, std::span<const std::uint32_t> ids,
            const double* contrib) {
            delta1[p] = a0;
            for (const auto id : ids) {
                vega1.storage()[id] += contrib[id];
            }
        });

    Matrix vega2(2, 2);
    std::vector<double> delta2(c.n_paths);
    detail::backward_core(
        tape, c, s, [&](double xt) { return 2.0 * payoff_value(payoff, xt); },
        [&](double xt) { return 2.0 * payoff_grad(payoff, xt); },
        [&](std::uint64_t p, double, double a0, std::span<const std::uint32_t> ids,
            const double* contrib) {
            delta2[p] = a0;
            for (const auto id : ids) {
                vega2.storage()[id] += contrib[id];
            }
        });

    for (std::uint64_t p = 0; p < c.n_paths; ++p) {
        CHECK(delta2[p] == 2.0 * delta1[p]);
    }
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(vega2.storage()[k] == 2.0 * vega1.storage()[k]);
    }
}

TEST_CASE("zero-gradient zones: untouched nodes carry exact zeros") {
    // Wide surface; paths over one year at 20% vol never reach the far spot
    // nodes, and times beyond maturity are never queried.
    const std::vector<double> spots{1.0, 50.0, 200.0, 5000.0, 20000.0};
    const std::vector<double> times{0.0, 0.5, 1.0, 10.0, 20.0};
    const VolSurface s(spots, times, Matrix(5, 5, 0.2));

    SimConfig c = base_config();
    c.n_paths = 20000;
    c.batch_size = 4096;
    const auto report = greeks(c, s, Payoff{PayoffKind::EuropeanCall, 100.0});

    // spot node 4 (20000) requires X > 5000; time nodes 3, 4 lie beyond the
    // last query time (t <= 1 - dt < 10), so cells containing them are only
    // reachable through the (2,2) corner of the (1,2) cell block
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(report.vega_grid(i, 4) == 0.0);
        CHECK(report.vega_se_grid(i, 4) == 0.0);
        CHECK(report.vega_grid(4, i) == 0.0);
        CHECK(report.vega_se_grid(4, i) == 0.0);
    }

    // interior nodes that the paths do reach are non-zero
    CHECK(report.vega_grid(1, 1) != 0.0);
}

TEST_CASE("backward_batch accumulates across calls") {
    SimConfig c = base_config();
    c.n_paths = 2048;
    c.batch_size = 1024;
    const auto s = flat_surface(0.2);
    const Payoff payoff{PayoffKind::EuropeanCall, 100.0};

    Tape tape0, tape1;
    simulate_batch(c, s, 0, &tape0);
    simulate_batch(c, s, 1, &tape1);

    Matrix both(2, 2);
    backward_batch(tape0, c, s, payoff, both);
    backward_batch(tape1, c, s, payoff, both);

    Matrix only0(2, 2);
    Matrix only1(2, 2);
    backward_batch(tape0, c, s, payoff, only0);
    backward_batch(tape1, c, s, payoff, only1);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(both.storage()[k] ==
              doctest::Approx(only0.storage()[k] + only1.storage()[k]).epsilon(1e-15));
    }
}

TEST_CASE("greeks deterministic across thread counts") {
    SimConfig c = base_config();
    c.n_paths = 20000;
    c.batch_size = 1024;
    const auto s = flat_surface(0.2);
    const Payoff payoff{PayoffKind::EuropeanCall, 105.0};
    const auto r1 = greeks(c, s, payoff, 1);
    const auto r4 = greeks(c, s, payoff, 4);
    CHECK(r1.price.mean == r4.price.mean);
    CHECK(r1.delta == r4.delta);
    CHECK(r1.delta_se == r4.delta_se);
    CHECK(r1.vega_grid == r4.vega_grid);
    CHECK(r1.vega_se_grid == r4.vega_se_grid);
}

TEST_CASE("tape mismatch is rejected") {
    SimConfig c = base_config();
    c.n_paths = 64;
    c.batch_size = 64;
    const auto s = flat_surface(0.2);
    Tape tape;
    simulate_batch(c, s, 0, &tape);

    SimConfig other = c;
    other.n_steps = c.n_steps + 1;
    Matrix vega(2, 2);
    CHECK_THROWS_AS(backward_batch(tape, other, s, Payoff{}, vega), Error);

    Matrix wrong_shape(3, 2);
    CHECK_THROWS_AS(backward_batch(tape, c, s, Payoff{}, wrong_shape), Error);
}

TEST_CASE("floored Euler steps propagate zero derivative") {
    // Huge vol and coarse steps force flooring on some paths.
    SimConfig c = base_config();
    c.scheme = Scheme::Euler;
    c.n_steps = 4;
    c.n_paths = 50000;
    c.batch_size = 8192;
    const auto s = flat_surface(3.0);

    Tape tape;
    simulate_batch(c, s, 0, &tape);
    bool any_floored = false;
    for (const auto f : tape.floored) {
        if (f) {
            any_floored = true;
        }
    }
    REQUIRE(any_floored);

    // find a path whose first step floored: its delta must be exactly zero
    const Payoff deep_itm{PayoffKind::EuropeanCall, 1e-8};
    Matrix vega(2, 2);
    const auto deltas = backward_batch(tape, c, s, deep_itm, vega);
    bool checked = false;
    for (std::uint64_t p = 0; p < tape.batch_paths; ++p) {
        if (tape.floored[p * c.n_steps]) {
            CHECK(deltas[p] == 0.0);
            checked = true;
        }
    }
    CHECK(checked);
}
