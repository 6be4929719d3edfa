#include "dupire/bump.hpp"

#include <chrono>
#include <string>

#include "dupire/errors.hpp"

namespace dupire {

namespace {

double price_with_vols(const SimConfig& config, const VolSurface& base, Matrix vols,
                       const Payoff& payoff, unsigned n_threads) {
    const VolSurface bumped = VolSurface::with_vols_unchecked(base, std::move(vols));
    return price(config, bumped, payoff, n_threads).mean;
}

} // namespace

double bump_node(const SimConfig& config, const VolSurface& surface, const Payoff& payoff,
                 std::size_t i, std::size_t j, double eps, unsigned n_threads) {
    if (i >= surface.n_spots() || j >= surface.n_times()) {
        raise(ErrorCode::DomainError, "bump node (" + std::to_string(i) + "," + std::to_string(j) +
                                          ") outside the surface grid");
    }
    if (!(eps > 0.0)) {
        raise(ErrorCode::DomainError, "bump eps must be positive");
    }

    Matrix up = surface.vols();
    Matrix dn = surface.vols();
    up(i, j) += 0.5 * eps;
    dn(i, j) -= 0.5 * eps;
    const double p_up = price_with_vols(config, surface, std::move(up), payoff, n_threads);
    const double p_dn = price_with_vols(config, surface, std::move(dn), payoff, n_threads);
    return (p_up - p_dn) / eps;
}

BumpReport bump_all(const SimConfig& config, const VolSurface& surface, const Payoff& payoff,
                    double eps, unsigned n_threads, std::uint64_t stride) {
    if (stride < 1) {
        raise(ErrorCode::DomainError, "stride must be >= 1");
    }
    BumpReport report;
    report.grid = Matrix(surface.n_spots(), surface.n_times());
    report.stride = stride;

    const auto start = std::chrono::steady_clock::now();
    for (std::size_t i = 0; i < surface.n_spots(); i += stride) {
        for (std::size_t j = 0; j < surface.n_times(); j += stride) {
            report.grid(i, j) = bump_node(config, surface, payoff, i, j, eps, n_threads);
            report.n_simulations += 2;
        }
    }
    const auto end = std::chrono::steady_clock::now();
    report.wall_ms = std::chrono::duration<double, std::milli>(end - start).count();
    return report;
}

double bump_spot(const SimConfig& config, const VolSurface& surface, const Payoff& payoff,
                 double rel_eps, unsigned n_threads) {
    if (!(rel_eps > 0.0)) {
        raise(ErrorCode::DomainError, "bump rel_eps must be positive");
    }
    SimConfig up = config;
    SimConfig dn = config;
    up.s0 = config.s0 * (1.0 + 0.5 * rel_eps);
    dn.s0 = config.s0 * (1.0 - 0.5 * rel_eps);
    const double p_up = price(up, surface, payoff, n_threads).mean;
    const double p_dn = price(dn, surface, payoff, n_threads).mean;
    return (p_up - p_dn) / (up.s0 - dn.s0);
}

double bump_uniform(const SimConfig& config, const VolSurface& surface, const Payoff& payoff,
                    double eps, unsigned n_threads) {
    if (!(eps > 0.0)) {
        raise(ErrorCode::DomainError, "bump eps must be positive");
    }
    Matrix up = surface.vols();
    Matrix dn = surface.vols();
    for (std::size_t k = 0; k < up.size(); ++k) {
        up.storage()[k] += 0.5 * eps;
        dn.storage()[k] -= 0.5 * eps;
    }
    const double p_up = price_with_vols(config, surface, std::move(up), payoff, n_threads);
    const double p_dn = price_with_vols(config, surface, std::move(dn), payoff, n_threads);
    return (p_up - p_dn) / eps;
}

} // namespace dupire
