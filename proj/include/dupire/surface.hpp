#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "dupire/matrix.hpp"
#include "dupire/numerics.hpp"

namespace dupire {

// Cell index plus the four tensor-product hat weights of one (x, t) query.
// Weight k belongs to node: 0 -> (i, j), 1 -> (i+1, j), 2 -> (i, j+1),
// 3 -> (i+1, j+1). dwdx holds the derivative of each weight w.r.t. the
// query spot; it is zero when the query was clamped in x.
struct BilinearWeights {
    std::int32_t i = 0;
    std::int32_t j = 0;
    std::array<double, 4> w{};
    std::array<double, 4> dwdx{};
};

// Discretized local volatility grid sigma(x_i, t_j) on strictly increasing
// axes. Immutable after construction; safe to share read-only across workers.
class VolSurface {
public:
    // Validates and takes ownership. vols is I x J: one row per spot level,
    // one column per time node.
    VolSurface(std::vector<double> spots, std::vector<double> times, Matrix vols);

    const std::vector<double>& spots() const noexcept { return spots_; }
    const std::vector<double>& times() const noexcept { return times_; }
    const Matrix& vols() const noexcept { return vols_; }

    std::size_t n_spots() const noexcept { return spots_.size(); }
    std::size_t n_times() const noexcept { return times_.size(); }

    bool uniform_spots() const noexcept { return uniform_spots_; }
    bool uniform_times() const noexcept { return uniform_times_; }

    // Same axes, replacement vol grid, no sign re-validation: bumped
    // surfaces may push a node slightly below zero.
    static VolSurface with_vols_unchecked(const VolSurface& base, Matrix vols);

private:
    std::vector<double> spots_;
    std::vector<double> times_;
    Matrix vols_;
    bool uniform_spots_ = false;
    bool uniform_times_ = false;

    friend struct AxisLocator;
};

VolSurface new_surface(std::vector<double> spots, std::vector<double> times, Matrix vols);

// Bilinear weights for one query. Out-of-range coordinates are clamped to
// the boundary (flat extrapolation); cells are half-open [x_i, x_{i+1})
// with the last cell closed on the right.
BilinearWeights weights(const VolSurface& surface, double x, double t);

// Batch interpolation at a common time t, index-gather backend: each output
// is the weighted sum of the four node vols of its cell.
std::vector<double> interp_gather(const VolSurface& surface, std::span<const double> xs, double t);

// Same result computed as W * V where W is the batch x (I*J) one-hot-scaled
// weight matrix (materialized in row chunks) and V the flattened vol grid.
// Under Emulatedbf16 the matmul operands are rounded to bfloat16 first;
// accumulation stays at working precision.
std::vector<double> interp_onehot(const VolSurface& surface, std::span<const double> xs, double t,
                                  PrecisionMode precision);

// Spatial slope of the interpolant: sum of dwdx_k * sigma_k over the cell
// nodes. Piecewise constant in x inside a cell, zero where x is clamped.
double dvol_dx(const VolSurface& surface, double x, double t);

// Reverse of interpolation: grad[node_k] += upstream * w_k for the four
// cell nodes. grad must match the surface dimensions.
void scatter_node_grads(const BilinearWeights& w, double upstream, Matrix& grad) noexcept;

// Smooth smile-with-term-structure demo surface:
//   sigma(x, t) = base + skew * ln(x/s0)^2 / (1 + t), clipped to [0.05, 1],
// sampled on a uniform grid spanning [s0*lo, s0*hi] x [0, maturity].
struct SyntheticSurfaceParams {
    std::size_t n_spots = 30;
    std::size_t n_times = 60;
    double s0 = 100.0;
    double base = 0.2;
    double skew = 0.3;
    double lo = 0.5;
    double hi = 2.0;
    double maturity = 1.5;
};

VolSurface synthetic_surface(const SyntheticSurfaceParams& params);

namespace detail {

// Resolved cell coordinate along one axis.
struct AxisCell {
    std::int32_t index = 0;  // lower node of the cell
    double frac = 0.0;       // position inside the cell, in [0, 1]
    double inv_width = 0.0;  // 1 / (node[index+1] - node[index])
    bool clamped = false;
};

AxisCell locate(std::span<const double> axis, bool uniform, double q);

BilinearWeights combine(const AxisCell& cx, const AxisCell& ct);

// sigma value for prebuilt weights (gather path).
double apply_weights(const VolSurface& surface, const BilinearWeights& w) noexcept;

// Batch backends on prebuilt weights; used by the simulation engine so the
// tape and the interpolation share one weight computation.
void gather_batch(const VolSurface& surface, std::span<const BilinearWeights> w,
                  std::span<double> out) noexcept;
void onehot_batch(const VolSurface& surface, std::span<const BilinearWeights> w,
                  PrecisionMode precision, std::span<double> out);

} // namespace detail

} // namespace dupire
