#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "dupire/numerics.hpp"
#include "dupire/rng.hpp"
#include "dupire/surface.hpp"

namespace dupire {

enum class Scheme {
    Euler,     // X_{n+1} = X_n (1 + sigma sqrt(dt) Z), floored at 1e-12 * s0
    LogEuler,  // X_{n+1} = X_n exp(sigma sqrt(dt) Z - sigma^2 dt / 2)
};

enum class InterpBackend {
    Gather,
    OneHot,
};

struct SimConfig {
    double s0 = 100.0;
    double maturity = 1.0;
    std::uint32_t n_steps = 156;
    std::uint64_t n_paths = 500000;
    std::uint64_t batch_size = 2048;
    Scheme scheme = Scheme::Euler;
    RngKey key{};
    PrecisionMode precision = PrecisionMode::Full;
    InterpBackend interp_backend = InterpBackend::Gather;

    void validate() const;  // throws DomainError on violated invariants

    double dt() const noexcept { return maturity / static_cast<double>(n_steps); }
    double floor_value() const noexcept { return 1e-12 * s0; }

    std::uint64_t n_batches() const noexcept {
        return (n_paths + batch_size - 1) / batch_size;
    }
    // Paths in batch `b`; the last batch may be short.
    std::uint64_t batch_paths(std::uint64_t b) const noexcept {
        const std::uint64_t first = b * batch_size;
        return first >= n_paths ? 0 : (n_paths - first < batch_size ? n_paths - first : batch_size);
    }
};

enum class PayoffKind {
    EuropeanCall,
    EuropeanPut,
};

struct Payoff {
    PayoffKind kind = PayoffKind::EuropeanCall;
    double strike = 100.0;

    void validate() const;
};

struct PriceEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::uint64_t n_paths = 0;
};

struct StepResult {
    double x = 0.0;
    bool floored = false;
};

// One explicit Euler step of dX/X = sigma dW, floored at floor_value.
StepResult step_euler(double x, double sigma, double z, double dt, double floor_value) noexcept;

// Log-Euler step; exact in distribution for constant sigma, never floors.
double step_logeuler(double x, double sigma, double z, double dt) noexcept;

// Per-batch forward record consumed by the adjoint pass. Arrays are
// path-major: entry (p, n) lives at p * n_steps + n (states have n_steps+1
// slots per path).
struct Tape {
    std::uint64_t batch_paths = 0;
    std::uint32_t n_steps = 0;
    std::uint64_t first_path_id = 0;
    std::vector<double> states;
    std::vector<double> normals;
    std::vector<BilinearWeights> weights;
    std::vector<double> sigmas;
    std::vector<std::uint8_t> floored;

    void resize(std::uint64_t paths, std::uint32_t steps);

    double state(std::uint64_t p, std::uint32_t n) const noexcept {
        return states[p * (n_steps + 1) + n];
    }
};

// Simulates one batch of paths. Terminal values are returned; when `tape`
// is non-null the full forward record is written into it.
std::vector<double> simulate_batch(const SimConfig& config, const VolSurface& surface,
                                   std::uint64_t batch_index, Tape* tape = nullptr);

double payoff_value(const Payoff& payoff, double x_terminal) noexcept;

// Monte Carlo price with standard error. Batches are accumulated in batch
// index order whatever the worker count, so results are bit-identical for
// any n_threads (0 = hardware concurrency).
PriceEstimate price(const SimConfig& config, const VolSurface& surface, const Payoff& payoff,
                    unsigned n_threads = 1);

// Zero-rate, zero-dividend Black-Scholes call; the flat-vol oracle.
double black_scholes_call(double s0, double k, double sigma, double t);

double norm_cdf(double x) noexcept;
double norm_pdf(double x) noexcept;

// Runs fn(batch_index) for batch_index in [0, n_batches) on up to
// n_threads workers (0 = hardware concurrency).
void for_each_batch(std::uint64_t n_batches, unsigned n_threads,
                    const std::function<void(std::uint64_t)>& fn);

} // namespace dupire
