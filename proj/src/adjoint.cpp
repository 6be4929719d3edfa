#include "dupire/adjoint.hpp"

#include <cmath>
#include <string>

#include "dupire/errors.hpp"

namespace dupire {

double payoff_grad(const Payoff& payoff, double x_terminal) noexcept {
    if (payoff.kind == PayoffKind::EuropeanCall) {
        return x_terminal > payoff.strike ? 1.0 : 0.0;
    }
    return x_terminal < payoff.strike ? -1.0 : 0.0;
}

namespace detail {

void backward_core(const Tape& tape, const SimConfig& config, const VolSurface& surface,
                   const std::function<double(double)>& payoff_fn,
                   const std::function<double(double)>& payoff_grad_fn, const PathSink& sink) {
    if (tape.n_steps != config.n_steps || tape.batch_paths == 0 ||
        tape.normals.size() != tape.batch_paths * tape.n_steps ||
        tape.states.size() != tape.batch_paths * (tape.n_steps + std::uint64_t{1})) {
        raise(ErrorCode::TapeMismatch, "tape dimensions disagree with config (steps " +
                                           std::to_string(tape.n_steps) + " vs " +
                                           std::to_string(config.n_steps) + ")");
    }

    const std::uint32_t n_steps = tape.n_steps;
    const double dt = config.dt();
    const double sqrt_dt = std::sqrt(dt);
    const bool log_scheme = config.scheme == Scheme::LogEuler;

    const double* vols = surface.vols().data();
    const std::size_t cols = surface.n_times();
    const std::size_t grid_size = surface.vols().size();

    // Path-local vega contributions: dense buffer plus the list of touched
    // nodes, both restored to zero after every path.
    static thread_local std::vector<double> contrib;
    static thread_local std::vector<std::uint8_t> seen;
    static thread_local std::vector<std::uint32_t> touched;
    if (contrib.size() < grid_size) {
        contrib.assign(grid_size, 0.0);
        seen.assign(grid_size, 0);
    }
    touched.clear();

    for (std::uint64_t p = 0; p < tape.batch_paths; ++p) {
        const double x_terminal = tape.state(p, n_steps);
        double a = payoff_grad_fn(x_terminal);

        if (a != 0.0) {
            const std::uint64_t base = p * n_steps;
            for (std::uint32_t m = n_steps; m-- > 0;) {
                const std::uint64_t e = base + m;
                if (tape.floored[e]) {
                    // Flooring is a constant branch: zero derivative through it.
                    a = 0.0;
                    break;
                }
                const BilinearWeights& w = tape.weights[e];
                const double z = tape.normals[e];
                const double sig = tape.sigmas[e];
                const double x_n = tape.state(p, m);

                const std::size_t base0 =
                    static_cast<std::size_t>(w.i) * cols + static_cast<std::size_t>(w.j);
                const std::size_t base1 = base0 + cols;
                const double dvdx = w.dwdx[0] * vols[base0] + w.dwdx[1] * vols[base1] +
                                    w.dwdx[2] * vols[base0 + 1] + w.dwdx[3] * vols[base1 + 1];

                double g;
                if (log_scheme) {
                    const double x_next = tape.state(p, m + 1);
                    const double factor = sqrt_dt * z - sig * dt;
                    g = a * x_next * factor;
                    a = a * (x_next / x_n + x_next * factor * dvdx);
                } else {
                    const double sqdt_z = sqrt_dt * z;
                    g = a * x_n * sqdt_z;
                    a = a * (1.0 + sig * sqdt_z + x_n * dvdx * sqdt_z);
                }

                if (g != 0.0) {
                    const std::uint32_t ids[4] = {
                        static_cast<std::uint32_t>(base0), static_cast<std::uint32_t>(base1),
                        static_cast<std::uint32_t>(base0 + 1), static_cast<std::uint32_t>(base1 + 1)};
                    for (int k = 0; k < 4; ++k) {
                        if (!seen[ids[k]]) {
                            seen[ids[k]] = 1;
                            touched.push_back(ids[k]);
                        }
                        contrib[ids[k]] += g * w.w[k];
                    }
                }
                if (a == 0.0) {
                    break;
                }
            }
        }

        sink(p, payoff_fn(x_terminal), a, touched, contrib.data());

        for (const std::uint32_t id : touched) {
            contrib[id] = 0.0;
            seen[id] = 0;
        }
        touched.clear();
    }
}

} // namespace detail

std::vector<double> backward_batch(const Tape& tape, const SimConfig& config,
                                   const VolSurface& surface, const Payoff& payoff,
                                   Matrix& vega_accum) {
    if (vega_accum.rows() != surface.n_spots() || vega_accum.cols() != surface.n_times()) {
        raise(ErrorCode::DimensionMismatch, "vega accumulator shape differs from surface");
    }
    std::vector<double> deltas(tape.batch_paths, 0.0);
    detail::backward_core(
        tape, config, surface, [&](double xt) { return payoff_value(payoff, xt); },
        [&](double xt) { return payoff_grad(payoff, xt); },
        [&](std::uint64_t p, double, double a0, std::span<const std::uint32_t> ids,
            const double* contrib) {
            deltas[p] = a0;
            double* accum = vega_accum.data();
            for (const std::uint32_t id : ids) {
                accum[id] += contrib[id];
            }
        });
    return deltas;
}

namespace {

// Per-node streaming moments for one batch: count of touched paths, running
// mean and M2. Untouched paths are folded in as exact zero observations when
// the batch closes.
struct NodeStats {
    std::vector<std::uint32_t> count;
    std::vector<double> mean;
    std::vector<double> m2;
    std::uint64_t paths = 0;

    void init(std::size_t n) {
        count.assign(n, 0);
        mean.assign(n, 0.0);
        m2.assign(n, 0.0);
        paths = 0;
    }

    void add(std::uint32_t id, double x) noexcept {
        const double n = static_cast<double>(++count[id]);
        const double delta = x - mean[id];
        mean[id] += delta / n;
        m2[id] += delta * (x - mean[id]);
    }

    // Fold the paths that never touched a node as zeros.
    void close() noexcept {
        const double total = static_cast<double>(paths);
        for (std::size_t id = 0; id < mean.size(); ++id) {
            const double cnt = static_cast<double>(count[id]);
            const std::uint64_t zeros = paths - count[id];
            if (zeros == 0 || cnt == 0.0) {
                if (cnt == 0.0) {
                    mean[id] = 0.0;
                    m2[id] = 0.0;
                }
                continue;
            }
            const double old_mean = mean[id];
            mean[id] = old_mean * (cnt / total);
            m2[id] += old_mean * old_mean * cnt * static_cast<double>(zeros) / total;
        }
    }
};

struct BatchPartial {
    WelfordAcc pay;
    WelfordAcc delta;
    NodeStats vega;
};

} // namespace

SensitivityReport greeks(const SimConfig& config, const VolSurface& surface, const Payoff& payoff,
                         unsigned n_threads) {
    config.validate();
    payoff.validate();

    const std::size_t grid_size = surface.vols().size();
    const std::uint64_t n_batches = config.n_batches();
    std::vector<BatchPartial> partials(n_batches);

    for_each_batch(n_batches, n_threads, [&](std::uint64_t b) {
        static thread_local Tape tape;
        simulate_batch(config, surface, b, &tape);

        BatchPartial& part = partials[b];
        part.vega.init(grid_size);
        part.vega.paths = tape.batch_paths;

        detail::backward_core(
            tape, config, surface, [&](double xt) { return payoff_value(payoff, xt); },
            [&](double xt) { return payoff_grad(payoff, xt); },
            [&](std::uint64_t, double pay, double a0, std::span<const std::uint32_t> ids,
                const double* contrib) {
                part.pay.add(pay);
                part.delta.add(a0);
                for (const std::uint32_t id : ids) {
                    part.vega.add(id, contrib[id]);
                }
            });
        part.vega.close();
    });

    // Deterministic merge in batch index order.
    WelfordAcc pay;
    WelfordAcc delta;
    const std::size_t rows = surface.n_spots();
    const std::size_t cols = surface.n_times();
    std::vector<WelfordAcc> vega(grid_size);
    for (const auto& part : partials) {
        pay = welford_merge(pay, part.pay);
        delta = welford_merge(delta, part.delta);
        for (std::size_t id = 0; id < grid_size; ++id) {
            WelfordAcc node;
            node.count = part.vega.paths;
            node.mean = part.vega.mean[id];
            node.m2 = part.vega.m2[id];
            vega[id] = welford_merge(vega[id], node);
        }
    }

    SensitivityReport report;
    report.price = {pay.mean, pay.std_error(), pay.count};
    report.delta = delta.mean;
    report.delta_se = delta.std_error();
    report.vega_grid = Matrix(rows, cols);
    report.vega_se_grid = Matrix(rows, cols);
    for (std::size_t id = 0; id < grid_size; ++id) {
        report.vega_grid.storage()[id] = vega[id].mean;
        report.vega_se_grid.storage()[id] = vega[id].std_error();
    }
    return report;
}

} // namespace dupire
