#include <doctest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

#include "dupire/errors.hpp"
#include "dupire/surface.hpp"

using namespace dupire;

namespace {

VolSurface flat_surface(double v = 0.2) {
    return VolSurface({90.0, 110.0}, {0.0, 1.0}, Matrix(2, 2, v));
}

// sigma(x, t) = a + b x + c t + d x t sampled on the grid; bilinear
// interpolation reproduces it exactly inside the grid.
VolSurface affine_surface(double a, double b, double c, double d) {
    const std::vector<double> spots{50.0, 80.0, 123.0, 160.0, 200.0};
    const std::vector<double> times{0.0, 0.3, 0.8, 1.0};
    Matrix vols(spots.size(), times.size());
    for (std::size_t i = 0; i < spots.size(); ++i) {
        for (std::size_t j = 0; j < times.size(); ++j) {
            vols(i, j) = a + b * spots[i] + c * times[j] + d * spots[i] * times[j];
        }
    }
    return VolSurface(spots, times, std::move(vols));
}

ErrorCode code_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected a dupire::Error");
    return ErrorCode::DomainError;
}

} // namespace

TEST_CASE("constructor validation") {
    CHECK(code_of([] { VolSurface({100.0}, {0.0, 1.0}, Matrix(1, 2, 0.2)); }) ==
          ErrorCode::TooFewNodes);
    CHECK(code_of([] { VolSurface({90.0, 110.0}, {1.0, 0.0}, Matrix(2, 2, 0.2)); }) ==
          ErrorCode::NonMonotonicAxis);
    CHECK(code_of([] { VolSurface({90.0, 90.0}, {0.0, 1.0}, Matrix(2, 2, 0.2)); }) ==
          ErrorCode::NonMonotonicAxis);
    CHECK(code_of([] { VolSurface({90.0, 110.0}, {0.0, 1.0}, Matrix(3, 2, 0.2)); }) ==
          ErrorCode::DimensionMismatch);
    CHECK(code_of([] {
              Matrix m(2, 2, 0.2);
              m(1, 1) = -0.1;
              VolSurface({90.0, 110.0}, {0.0, 1.0}, std::move(m));
          }) == ErrorCode::NegativeVol);
    CHECK(code_of([] {
              Matrix m(2, 2, 0.2);
              m(0, 0) = std::numeric_limits<double>::quiet_NaN();
              VolSurface({90.0, 110.0}, {0.0, 1.0}, std::move(m));
          }) == ErrorCode::NegativeVol);

    const VolSurface ok = flat_surface();
    CHECK(ok.n_spots() == 2);
    CHECK(ok.n_times() == 2);
    CHECK(ok.vols()(0, 0) == 0.2);
}

TEST_CASE("weights at grid nodes select that node") {
    const auto s = affine_surface(0.1, 1e-3, 0.0, 0.0);
    for (std::size_t i = 0; i < s.n_spots(); ++i) {
        for (std::size_t j = 0; j < s.n_times(); ++j) {
            const auto w = weights(s, s.spots()[i], s.times()[j]);
            // top-boundary queries fall in the cell below/left of the node
            const std::size_t ci = (i == s.n_spots() - 1) ? i - 1 : i;
            const std::size_t cj = (j == s.n_times() - 1) ? j - 1 : j;
            CHECK(w.i == static_cast<std::int32_t>(ci));
            CHECK(w.j == static_cast<std::int32_t>(cj));
            const int k = (i == ci ? 0 : 1) + (j == cj ? 0 : 2);
            CHECK(w.w[static_cast<std::size_t>(k)] == doctest::Approx(1.0).epsilon(1e-15));
        }
    }
}

TEST_CASE("weights midpoint symmetry and clamping") {
    const auto s = flat_surface();
    const auto mid = weights(s, 100.0, 0.0);
    CHECK(mid.w[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mid.w[1] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(mid.w[2] == 0.0);
    CHECK(mid.w[3] == 0.0);

    const auto below = weights(s, 50.0, 0.5);
    const auto at_edge = weights(s, 90.0, 0.5);
    CHECK(below.i == at_edge.i);
    CHECK(below.w == at_edge.w);
    for (const double d : below.dwdx) {
        CHECK(d == 0.0);
    }
    const auto above = weights(s, 500.0, 0.5);
    const auto top = weights(s, 110.0, 0.5);
    CHECK(above.w == top.w);
}

TEST_CASE("weights rejects non-finite queries") {
    const auto s = flat_surface();
    CHECK_THROWS_AS(weights(s, std::numeric_limits<double>::quiet_NaN(), 0.5), Error);
    CHECK_THROWS_AS(weights(s, 100.0, std::numeric_limits<double>::infinity()), Error);
    const std::vector<double> xs{100.0, std::numeric_limits<double>::quiet_NaN()};
    CHECK_THROWS_AS(interp_gather(s, xs, 0.5), Error);
}

TEST_CASE("partition of unity over 1e5 random queries") {
    const auto s = affine_surface(0.15, 4e-4, 0.02, 1e-5);
    std::mt19937_64 gen(17);
    std::uniform_real_distribution<double> ux(40.0, 220.0);  // includes out-of-range
    std::uniform_real_distribution<double> ut(-0.2, 1.3);
    constexpr double ulp4 = 4 * std::numeric_limits<double>::epsilon();
    for (int k = 0; k < 100000; ++k) {
        const auto w = weights(s, ux(gen), ut(gen));
        const double sum = w.w[0] + w.w[1] + w.w[2] + w.w[3];
        CHECK(std::fabs(sum - 1.0) <= ulp4);
        for (const double wk : w.w) {
            CHECK(wk >= 0.0);
            CHECK(wk <= 1.0);
        }
        const double dsum = w.dwdx[0] + w.dwdx[1] + w.dwdx[2] + w.dwdx[3];
        CHECK(std::fabs(dsum) <= 4e-16 * (std::fabs(w.dwdx[0]) + std::fabs(w.dwdx[1]) +
                                          std::fabs(w.dwdx[2]) + std::fabs(w.dwdx[3]) + 1.0));
    }
}

TEST_CASE("interp_gather on flat and affine surfaces") {
    const auto s = flat_surface(0.2);
    const std::vector<double> xs{13.0, 91.0, 100.0, 109.99, 400.0};
    for (const double v : interp_gather(s, xs, 0.37)) {
        CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
    }

    const double a = 0.05, b = 2e-4, c = 0.03, d = 5e-5;
    const auto aff = affine_surface(a, b, c, d);
    std::mt19937_64 gen(5);
    std::uniform_real_distribution<double> ux(50.0, 200.0);
    std::uniform_real_distribution<double> ut(0.0, 1.0);
    for (int k = 0; k < 2000; ++k) {
        const double x = ux(gen);
        const double t = ut(gen);
        const double got = interp_gather(aff, std::vector<double>{x}, t)[0];
        const double want = a + b * x + c * t + d * x * t;
        CHECK(got == doctest::Approx(want).epsilon(1e-12));
    }

    // node query returns the node vol exactly
    CHECK(interp_gather(aff, std::vector<double>{123.0}, 0.3)[0] == aff.vols()(2, 1));
}

TEST_CASE("interp_onehot equals interp_gather under full precision") {
    std::mt19937_64 gen(29);
    std::uniform_real_distribution<double> uv(0.05, 1.0);
    std::uniform_real_distribution<double> ux(30.0, 250.0);
    std::uniform_real_distribution<double> ut(-0.1, 1.6);

    std::size_t checked = 0;
    for (int surf = 0; surf < 20; ++surf) {
        const std::size_t rows = 2 + surf % 7;
        const std::size_t cols = 2 + (surf * 3) % 9;
        std::vector<double> spots(rows);
        std::vector<double> times(cols);
        for (std::size_t i = 0; i < rows; ++i) {
            spots[i] = 40.0 + 25.0 * static_cast<double>(i) + (surf % 2 ? 3.7 : 0.0);
        }
        for (std::size_t j = 0; j < cols; ++j) {
            times[j] = 0.25 * static_cast<double>(j);
        }
        Matrix vols(rows, cols);
        for (auto& v : vols.storage()) {
            v = uv(gen);
        }
        const VolSurface s(spots, times, std::move(vols));

        std::vector<double> xs(5000);
        for (auto& x : xs) {
            x = ux(gen);
        }
        const double t = ut(gen);
        const auto g = interp_gather(s, xs, t);
        const auto o = interp_onehot(s, xs, t, PrecisionMode::Full);
        for (std::size_t k = 0; k < xs.size(); ++k) {
            CHECK(std::fabs(o[k] - g[k]) <= 1e-6 * std::fabs(g[k]));
            ++checked;
        }
    }
    CHECK(checked == 100000);
}

TEST_CASE("interp_onehot under bf16 emulation") {
    const auto s = flat_surface(0.2);
    const std::vector<double> xs{95.0, 100.0, 104.2};
    for (const double v : interp_onehot(s, xs, 0.4, PrecisionMode::Emulatedbf16)) {
        CHECK(std::fabs(v - 0.2) <= 1e-2 * 0.2);
    }
    // one-hot row for a node query is a unit vector: exact node value
    const auto node = interp_onehot(s, std::vector<double>{90.0}, 0.0, PrecisionMode::Full);
    CHECK(node[0] == 0.2);
}

TEST_CASE("bf16 interpolation stays within 1% of full precision") {
    std::mt19937_64 gen(61);
    std::uniform_real_distribution<double> uv(0.05, 1.0);
    std::uniform_real_distribution<double> ux(40.0, 220.0);
    for (int surf = 0; surf < 10; ++surf) {
        std::vector<double> spots{50.0, 90.0, 140.0, 200.0};
        std::vector<double> times{0.0, 0.5, 1.0};
        Matrix vols(4, 3);
        for (auto& v : vols.storage()) {
            v = uv(gen);
        }
        const VolSurface s(spots, times, std::move(vols));
        std::vector<double> xs(2000);
        for (auto& x : xs) {
            x = ux(gen);
        }
        const double t = 0.25 * (surf % 5);
        const auto full = interp_gather(s, xs, t);
        const auto emulated = interp_onehot(s, xs, t, PrecisionMode::Emulatedbf16);
        for (std::size_t k = 0; k < xs.size(); ++k) {
            CHECK(std::fabs(emulated[k] - full[k]) <= 0.01 * full[k]);
        }
    }
}

TEST_CASE("dvol_dx: flat, affine slope, clamped") {
    const auto s = flat_surface(0.2);
    CHECK(dvol_dx(s, 100.0, 0.5) == 0.0);
    CHECK(dvol_dx(s, 10.0, 0.5) == 0.0);

    const double b = 3e-4;
    const auto aff = affine_surface(0.1, b, 0.0, 0.0);
    CHECK(dvol_dx(aff, 100.0, 0.5) == doctest::Approx(b).epsilon(1e-12));
    CHECK(dvol_dx(aff, 40.0, 0.5) == 0.0);
    CHECK(dvol_dx(aff, 1000.0, 0.5) == 0.0);
}

TEST_CASE("dvol_dx matches central finite differences of interp_gather") {
    const auto s = affine_surface(0.12, 2.5e-4, 0.04, 8e-5);
    const double h = 1e-6 * (200.0 - 50.0);
    std::mt19937_64 gen(41);
    std::uniform_real_distribution<double> ux(51.0, 199.0);
    std::uniform_real_distribution<double> ut(0.0, 1.0);
    int tested = 0;
    while (tested < 500) {
        const double x = ux(gen);
        const double t = ut(gen);
        // stay a safe distance from cell boundaries
        bool near_edge = false;
        for (const double node : s.spots()) {
            if (std::fabs(x - node) < 2.0 * h) {
                near_edge = true;
            }
        }
        if (near_edge) {
            continue;
        }
        const auto up = interp_gather(s, std::vector<double>{x + h}, t)[0];
        const auto dn = interp_gather(s, std::vector<double>{x - h}, t)[0];
        const double fd = (up - dn) / (2.0 * h);
        const double an = dvol_dx(s, x, t);
        CHECK(std::fabs(fd - an) <= 1e-4 * std::max(std::fabs(an), 1e-12));
        ++tested;
    }
}

TEST_CASE("clamped queries equal boundary queries exactly") {
    const auto s = affine_surface(0.1, 2e-4, 0.05, 0.0);
    const std::vector<double> inside{50.0, 200.0};
    const std::vector<double> outside{1.0, 1e6};
    CHECK(interp_gather(s, outside, 0.5) == interp_gather(s, inside, 0.5));
    CHECK(interp_gather(s, std::vector<double>{120.0}, 5.0) ==
          interp_gather(s, std::vector<double>{120.0}, 1.0));
    CHECK(interp_gather(s, std::vector<double>{120.0}, -1.0) ==
          interp_gather(s, std::vector<double>{120.0}, 0.0));
}

TEST_CASE("scatter_node_grads") {
    const auto s = flat_surface();
    Matrix grad(2, 2);

    const auto w = weights(s, 100.0, 0.25);
    scatter_node_grads(w, 0.0, grad);
    for (const double g : grad.storage()) {
        CHECK(g == 0.0);
    }

    // node query with unit upstream increments exactly one entry
    const auto node = weights(s, 90.0, 0.0);
    scatter_node_grads(node, 1.0, grad);
    CHECK(grad(0, 0) == 1.0);
    CHECK(grad(0, 1) == 0.0);
    CHECK(grad(1, 0) == 0.0);
    CHECK(grad(1, 1) == 0.0);

    // additivity: two scatters equal one scatter with the summed upstream
    Matrix g1(2, 2);
    Matrix g2(2, 2);
    scatter_node_grads(w, 0.7, g1);
    scatter_node_grads(w, 1.6, g1);
    scatter_node_grads(w, 0.7 + 1.6, g2);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(g1.storage()[k] == doctest::Approx(g2.storage()[k]).epsilon(1e-15));
    }
}

TEST_CASE("synthetic surface shape, clipping and degenerate smile") {
    SyntheticSurfaceParams p;
    p.n_spots = 30;
    p.n_times = 60;
    const auto s = synthetic_surface(p);
    CHECK(s.n_spots() == 30);
    CHECK(s.n_times() == 60);
    CHECK(s.spots().front() == doctest::Approx(50.0));
    CHECK(s.spots().back() == doctest::Approx(200.0));
    CHECK(s.times().front() == 0.0);
    CHECK(s.times().back() == doctest::Approx(1.5));
    for (const double v : s.vols().storage()) {
        CHECK(v >= 0.05);
        CHECK(v <= 1.0);
    }

    SyntheticSurfaceParams degenerate = p;
    degenerate.skew = 0.0;
    const auto flat_smile = synthetic_surface(degenerate);
    for (const double v : flat_smile.vols().storage()) {
        CHECK(v == 0.2);
    }

    SyntheticSurfaceParams huge = p;
    huge.base = 5.0;  // clipped at 1.0
    const auto clipped = synthetic_surface(huge);
    for (const double v : clipped.vols().storage()) {
        CHECK(v == 1.0);
    }
}

TEST_CASE("non-uniform axes keep node semantics") {
    const std::vector<double> times{0.0, 0.5, 1.0};
    const std::vector<double> bent{80.0, 100.0, 125.0, 140.0};
    Matrix vols(4, 3);
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 3; ++j) {
            vols(i, j) = 0.1 + 0.01 * static_cast<double>(i) + 0.02 * static_cast<double>(j);
        }
    }
    const VolSurface non_uniform(bent, times, std::move(vols));
    CHECK_FALSE(non_uniform.uniform_spots());
    CHECK(non_uniform.uniform_times());

    CHECK(interp_gather(non_uniform, std::vector<double>{125.0}, 0.5)[0] ==
          non_uniform.vols()(2, 1));
    const auto w = weights(non_uniform, 110.0, 0.25);
    CHECK(w.i == 1);
    CHECK(w.w[0] == doctest::Approx(0.6 * 0.5).epsilon(1e-14));
    CHECK(w.w[1] == doctest::Approx(0.4 * 0.5).epsilon(1e-14));
}
