#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dupire/engine.hpp"
#include "dupire/matrix.hpp"

namespace dupire {

// Price plus the full first-order sensitivity set: delta and the gradient
// of the price with respect to every volatility node, with Monte Carlo
// standard errors for each estimate.
struct SensitivityReport {
    PriceEstimate price;
    double delta = 0.0;
    double delta_se = 0.0;
    Matrix vega_grid;
    Matrix vega_se_grid;
};

// Pathwise derivative of the payoff at the terminal state. The kink at
// x == strike returns 0 (measure-zero convention).
double payoff_grad(const Payoff& payoff, double x_terminal) noexcept;

// Reverse sweep over one recorded batch. Accumulates the summed pathwise
// vega contributions of the batch into vega_accum (caller averages over
// paths) and returns the per-path pathwise delta a_0.
std::vector<double> backward_batch(const Tape& tape, const SimConfig& config,
                                   const VolSurface& surface, const Payoff& payoff,
                                   Matrix& vega_accum);

// Full forward+backward over all batches: price, delta and the vega grid in
// one pass, deterministic merge order across any worker count.
SensitivityReport greeks(const SimConfig& config, const VolSurface& surface,
                         const Payoff& payoff, unsigned n_threads = 1);

namespace detail {

// Per-path sink for the reverse sweep. `node_ids` lists the flattened
// grid nodes this path touched; `contrib` is the dense I*J buffer holding
// the path's vega contributions at those ids.
using PathSink = std::function<void(std::uint64_t path_in_batch, double payoff_value, double a0,
                                    std::span<const std::uint32_t> node_ids,
                                    const double* contrib)>;

// Core reverse recursion; payoff value/gradient supplied as callables so
// tests can exercise scaled payoffs.
void backward_core(const Tape& tape, const SimConfig& config, const VolSurface& surface,
                   const std::function<double(double)>& payoff_fn,
                   const std::function<double(double)>& payoff_grad_fn,
                   const PathSink& sink);

} // namespace detail

} // namespace dupire
