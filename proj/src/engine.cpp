#include "dupire/engine.hpp"

#include <atomic>
#include <cmath>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

#include "dupire/errors.hpp"

namespace dupire {

void SimConfig::validate() const {
    if (!(s0 > 0.0) || !std::isfinite(s0)) {
        raise(ErrorCode::DomainError, "s0 must be positive and finite, got " + std::to_string(s0));
    }
    if (!(maturity > 0.0) || !std::isfinite(maturity)) {
        raise(ErrorCode::DomainError, "maturity must be positive and finite, got " + std::to_string(maturity));
    }
    if (n_steps < 1) {
        raise(ErrorCode::DomainError, "n_steps must be >= 1");
    }
    if (n_paths < 1) {
        raise(ErrorCode::DomainError, "n_paths must be >= 1");
    }
    if (batch_size < 1 || batch_size > n_paths) {
        raise(ErrorCode::DomainError, "batch_size must lie in [1, n_paths]");
    }
    if (n_paths >= (std::uint64_t{1} << 32) || n_steps >= (std::uint32_t{1} << 31)) {
        raise(ErrorCode::DomainError, "path and step counts must fit the RNG counter (2^32)");
    }
}

void Payoff::validate() const {
    if (!(strike > 0.0) || !std::isfinite(strike)) {
        raise(ErrorCode::DomainError, "strike must be positive and finite, got " + std::to_string(strike));
    }
}

StepResult step_euler(double x, double sigma, double z, double dt, double floor_value) noexcept {
    const double next = x * (1.0 + sigma * std::sqrt(dt) * z);
    if (next < floor_value) {
        return {floor_value, true};
    }
    return {next, false};
}

double step_logeuler(double x, double sigma, double z, double dt) noexcept {
    return x * std::exp(sigma * std::sqrt(dt) * z - 0.5 * sigma * sigma * dt);
}

void Tape::resize(std::uint64_t paths, std::uint32_t steps) {
    batch_paths = paths;
    n_steps = steps;
    states.resize(paths * (steps + std::uint64_t{1}));
    normals.resize(paths * steps);
    weights.resize(paths * steps);
    sigmas.resize(paths * steps);
    floored.assign(paths * steps, 0);
}

std::vector<double> simulate_batch(const SimConfig& config, const VolSurface& surface,
                                   std::uint64_t batch_index, Tape* tape) {
    config.validate();
    const std::uint64_t paths = config.batch_paths(batch_index);
    if (paths == 0) {
        raise(ErrorCode::DomainError, "batch_index " + std::to_string(batch_index) + " out of range");
    }
    const std::uint32_t n_steps = config.n_steps;
    const std::uint64_t first_path = batch_index * config.batch_size;
    const double dt = config.dt();
    const double sqrt_dt = std::sqrt(dt);
    const double floor_value = config.floor_value();
    const bool log_scheme = config.scheme == Scheme::LogEuler;

    if (tape) {
        tape->resize(paths, n_steps);
        tape->first_path_id = first_path;
        for (std::uint64_t p = 0; p < paths; ++p) {
            tape->states[p * (n_steps + 1)] = config.s0;
        }
    }

    std::vector<double> x(paths, config.s0);
    std::vector<BilinearWeights> w(paths);
    std::vector<double> sigma(paths);

    for (std::uint32_t n = 0; n < n_steps; ++n) {
        const double t_n = static_cast<double>(n) * dt;
        const auto ct = detail::locate(surface.times(), surface.uniform_times(), t_n);
        for (std::uint64_t p = 0; p < paths; ++p) {
            const auto cx = detail::locate(surface.spots(), surface.uniform_spots(), x[p]);
            w[p] = detail::combine(cx, ct);
        }

        if (config.interp_backend == InterpBackend::OneHot) {
            detail::onehot_batch(surface, w, config.precision, sigma);
        } else {
            detail::gather_batch(surface, w, sigma);
        }

        for (std::uint64_t p = 0; p < paths; ++p) {
            const double z = normal(config.key, first_path + p, n);
            double next;
            bool floored = false;
            if (log_scheme) {
                next = x[p] * std::exp(sigma[p] * sqrt_dt * z - 0.5 * sigma[p] * sigma[p] * dt);
            } else {
                next = x[p] * (1.0 + sigma[p] * sqrt_dt * z);
                if (next < floor_value) {
                    next = floor_value;
                    floored = true;
                }
            }
            if (tape) {
                const std::uint64_t e = p * n_steps + n;
                tape->states[p * (n_steps + 1) + n + 1] = next;
                tape->normals[e] = z;
                tape->weights[e] = w[p];
                tape->sigmas[e] = sigma[p];
                tape->floored[e] = floored ? 1 : 0;
            }
            x[p] = next;
        }
    }
    return x;
}

double payoff_value(const Payoff& payoff, double x_terminal) noexcept {
    if (payoff.kind == PayoffKind::EuropeanCall) {
        return x_terminal > payoff.strike ? x_terminal - payoff.strike : 0.0;
    }
    return x_terminal < payoff.strike ? payoff.strike - x_terminal : 0.0;
}

PriceEstimate price(const SimConfig& config, const VolSurface& surface, const Payoff& payoff,
                    unsigned n_threads) {
    config.validate();
    payoff.validate();

    const std::uint64_t n_batches = config.n_batches();
    std::vector<WelfordAcc> partials(n_batches);
    for_each_batch(n_batches, n_threads, [&](std::uint64_t b) {
        const auto terminal = simulate_batch(config, surface, b);
        WelfordAcc acc;
        for (const double xt : terminal) {
            acc.add(payoff_value(payoff, xt));
        }
        partials[b] = acc;
    });

    WelfordAcc total;
    for (const auto& acc : partials) {
        total = welford_merge(total, acc);
    }
    return {total.mean, total.std_error(), total.count};
}

double norm_cdf(double x) noexcept {
    return 0.5 * std::erfc(-x * 0.7071067811865475244);
}

double norm_pdf(double x) noexcept {
    return 0.3989422804014326779 * std::exp(-0.5 * x * x);
}

double black_scholes_call(double s0, double k, double sigma, double t) {
    if (!(s0 > 0.0) || !(k > 0.0) || !(sigma > 0.0) || !(t > 0.0)) {
        raise(ErrorCode::DomainError, "black_scholes_call requires positive inputs");
    }
    const double sig_sqrt_t = sigma * std::sqrt(t);
    const double d1 = (std::log(s0 / k) + 0.5 * sigma * sigma * t) / sig_sqrt_t;
    const double d2 = d1 - sig_sqrt_t;
    return s0 * norm_cdf(d1) - k * norm_cdf(d2);
}

void for_each_batch(std::uint64_t n_batches, unsigned n_threads,
                    const std::function<void(std::uint64_t)>& fn) {
    if (n_threads == 0) {
        n_threads = std::thread::hardware_concurrency();
        if (n_threads == 0) {
            n_threads = 1;
        }
    }
    if (n_batches < n_threads) {
        n_threads = static_cast<unsigned>(n_batches);
    }

    if (n_threads <= 1) {
        for (std::uint64_t b = 0; b < n_batches; ++b) {
            fn(b);
        }
        return;
    }

    std::atomic<std::uint64_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    auto worker = [&] {
        while (true) {
            const std::uint64_t b = next.fetch_add(1, std::memory_order_relaxed);
            if (b >= n_batches) {
                return;
            }
            try {
                fn(b);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) {
                    error = std::current_exception();
                }
                next.store(n_batches, std::memory_order_relaxed);
                return;
            }
        }
    };

    std::vector<std::thread> threads;
    threads.reserve(n_threads);
    for (unsigned i = 0; i < n_threads; ++i) {
        threads.emplace_back(worker);
    }
    for (auto& t : threads) {
        t.join();
    }
    if (error) {
        std::rethrow_exception(error);
    }
}

} // namespace dupire
