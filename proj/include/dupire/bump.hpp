#pragma once

#include <cstdint>

#include "dupire/adjoint.hpp"
#include "dupire/engine.hpp"

namespace dupire {

// Central finite difference in one vol node with common random numbers:
// (price(sigma_ij + eps/2) - price(sigma_ij - eps/2)) / eps.
double bump_node(const SimConfig& config, const VolSurface& surface, const Payoff& payoff,
                 std::size_t i, std::size_t j, double eps, unsigned n_threads = 1);

struct BumpReport {
    Matrix grid;
    std::uint64_t n_simulations = 0;
    double wall_ms = 0.0;
    std::uint64_t stride = 1;  // nodes skipped by subsampling keep value 0
};

// bump_node over every node (optionally subsampled by `stride` in both axes
// for large grids). Records wall time and the 2 * (#bumped nodes)
// simulation count for the benchmark report.
BumpReport bump_all(const SimConfig& config, const VolSurface& surface, const Payoff& payoff,
                    double eps, unsigned n_threads = 1, std::uint64_t stride = 1);

// Central difference in the initial spot, relative bump size.
double bump_spot(const SimConfig& config, const VolSurface& surface, const Payoff& payoff,
                 double rel_eps, unsigned n_threads = 1);

// Central difference with every node shifted by +-eps/2; equals the sum of
// the vega grid by partition of unity.
double bump_uniform(const SimConfig& config, const VolSurface& surface, const Payoff& payoff,
                    double eps, unsigned n_threads = 1);

} // namespace dupire
