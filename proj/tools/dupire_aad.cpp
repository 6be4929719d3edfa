// dupire-aad: Monte Carlo pricing for the Dupire local volatility model with
// adjoint (pathwise) sensitivities, a bumping validator and a benchmark mode.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dupire/adjoint.hpp"
#include "dupire/bump.hpp"
#include "dupire/engine.hpp"
#include "dupire/errors.hpp"
#include "dupire/io.hpp"
#include "dupire/surface.hpp"

namespace {

using namespace dupire;
namespace fs = std::filesystem;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitTolerance = 4;

struct CommonOpts {
    std::string config_path;
    std::string out;
    std::optional<unsigned> threads;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> backend;
    std::optional<std::string> precision;
    std::optional<std::string> scheme;
};

void add_common_flags(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--config", opts.config_path, "run configuration JSON")->required();
    cmd->add_option("--out", opts.out, "output file (stdout when omitted)");
    cmd->add_option("--threads", opts.threads, "worker threads (0 = hardware default)");
    cmd->add_option("--seed", opts.seed, "override RNG seed");
    cmd->add_option("--backend", opts.backend, "gather|onehot");
    cmd->add_option("--precision", opts.precision, "full|bf16");
    cmd->add_option("--scheme", opts.scheme, "euler|logeuler");
}

io::RunConfig load_run(const CommonOpts& opts) {
    io::RunConfig config = io::load_config(opts.config_path);
    if (opts.threads) config.threads = *opts.threads;
    if (opts.seed) config.sim.key.seed = *opts.seed;
    if (opts.backend) config.sim.interp_backend = io::parse_backend(*opts.backend);
    if (opts.precision) config.sim.precision = io::parse_precision(*opts.precision);
    if (opts.scheme) config.sim.scheme = io::parse_scheme(*opts.scheme);
    return config;
}

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
        .count();
}

void emit_primary(const std::string& out_path, const std::string& content) {
    if (out_path.empty()) {
        std::fwrite(content.data(), 1, content.size(), stdout);
    } else {
        io::write_file_atomic(out_path, content);
    }
}

void emit_manifest(const std::string& subcommand, const io::RunConfig& config,
                   const std::string& out_path, double wall_ms, std::uint64_t n_simulations) {
    io::RunManifest manifest;
    manifest.subcommand = subcommand;
    manifest.config = config;
    manifest.wall_ms = wall_ms;
    manifest.n_simulations = n_simulations;
    const fs::path path =
        out_path.empty() ? fs::path(subcommand + ".manifest.json") : fs::path(out_path + ".manifest.json");
    io::write_manifest(manifest, path);
}

// ---------------------------------------------------------------------------
// price
// ---------------------------------------------------------------------------

int cmd_price(const CommonOpts& opts) {
    const io::RunConfig config = load_run(opts);

    const auto start = std::chrono::steady_clock::now();
    const PriceEstimate estimate =
        price(config.sim, config.surface_ref(), config.payoff, config.threads);
    const double wall_ms = elapsed_ms(start);

    io::JsonWriter w;
    w.begin_object();
    w.kv("price", estimate.mean);
    w.kv("std_error", estimate.std_error);
    w.kv("n_paths", estimate.n_paths);
    w.kv("wall_ms", wall_ms);
    w.end_object();
    emit_primary(opts.out, w.take() + "\n");
    emit_manifest("price", config, opts.out, wall_ms, 1);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// greeks
// ---------------------------------------------------------------------------

std::string vega_csv_long(const VolSurface& surface, const SensitivityReport& report) {
    std::string out = "i,j,spot,time,vega,vega_se\n";
    for (std::size_t i = 0; i < surface.n_spots(); ++i) {
        for (std::size_t j = 0; j < surface.n_times(); ++j) {
            out += std::to_string(i);
            out += ',';
            out += std::to_string(j);
            out += ',';
            out += io::format_g17(surface.spots()[i]);
            out += ',';
            out += io::format_g17(surface.times()[j]);
            out += ',';
            out += io::format_g17(report.vega_grid(i, j));
            out += ',';
            out += io::format_g17(report.vega_se_grid(i, j));
            out += '\n';
        }
    }
    return out;
}

std::string vega_tsv_wide(const VolSurface& surface, const SensitivityReport& report) {
    std::string out = "spot";
    for (const double t : surface.times()) {
        out += '\t';
        out += io::format_g17(t);
    }
    out += '\n';
    for (std::size_t i = 0; i < surface.n_spots(); ++i) {
        out += io::format_g17(surface.spots()[i]);
        for (std::size_t j = 0; j < surface.n_times(); ++j) {
            out += '\t';
            out += io::format_g17(report.vega_grid(i, j));
        }
        out += '\n';
    }
    return out;
}

int cmd_greeks(const CommonOpts& opts, bool wide) {
    const io::RunConfig config = load_run(opts);
    const VolSurface& surface = config.surface_ref();

    const auto start = std::chrono::steady_clock::now();
    const SensitivityReport report = greeks(config.sim, surface, config.payoff, config.threads);
    const double wall_ms = elapsed_ms(start);

    emit_primary(opts.out, wide ? vega_tsv_wide(surface, report) : vega_csv_long(surface, report));

    double vega_sum = 0.0;
    for (const double v : report.vega_grid.storage()) {
        vega_sum += v;
    }
    io::JsonWriter w;
    w.begin_object();
    w.kv("price", report.price.mean);
    w.kv("std_error", report.price.std_error);
    w.kv("n_paths", report.price.n_paths);
    w.kv("delta", report.delta);
    w.kv("delta_se", report.delta_se);
    w.kv("vega_sum", vega_sum);
    w.kv("wall_ms", wall_ms);
    w.end_object();
    const fs::path summary_path =
        opts.out.empty() ? fs::path("greeks.summary.json") : fs::path(opts.out + ".summary.json");
    io::write_file_atomic(summary_path, w.take() + "\n");
    emit_manifest("greeks", config, opts.out, wall_ms, 1);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

int cmd_validate(const CommonOpts& opts, double eps, double tol_rel, double tol_abs, bool force) {
    const io::RunConfig config = load_run(opts);
    const VolSurface& surface = config.surface_ref();
    const std::size_t n_nodes = surface.vols().size();
    if (n_nodes > 400 && !force) {
        throw io::ConfigError("validate: grid has " + std::to_string(n_nodes) +
                              " nodes (> 400); bumping would need " + std::to_string(2 * n_nodes) +
                              " pricings. Pass --force to run anyway.");
    }

    const auto start = std::chrono::steady_clock::now();
    const SensitivityReport report = greeks(config.sim, surface, config.payoff, config.threads);
    const BumpReport bumped = bump_all(config.sim, surface, config.payoff, eps, config.threads);
    const double wall_ms = elapsed_ms(start);

    double max_abs = 0.0;
    double max_rel = 0.0;
    double sum_abs = 0.0;
    std::size_t failures = 0;

    io::JsonWriter nodes;
    nodes.begin_array();
    for (std::size_t i = 0; i < surface.n_spots(); ++i) {
        for (std::size_t j = 0; j < surface.n_times(); ++j) {
            const double adj = report.vega_grid(i, j);
            const double bmp = bumped.grid(i, j);
            const double abs_dev = std::fabs(adj - bmp);
            const double rel_dev = std::fabs(bmp) > 0.0 ? abs_dev / std::fabs(bmp) : 0.0;
            const bool ok = abs_dev <= tol_abs || abs_dev <= tol_rel * std::fabs(bmp);
            if (!ok) {
                ++failures;
            }
            max_abs = std::max(max_abs, abs_dev);
            if (std::fabs(bmp) > 0.0) {
                max_rel = std::max(max_rel, rel_dev);
            }
            sum_abs += abs_dev;

            nodes.begin_object();
            nodes.kv("i", static_cast<std::uint64_t>(i));
            nodes.kv("j", static_cast<std::uint64_t>(j));
            nodes.kv("adjoint", adj);
            nodes.kv("bump", bmp);
            nodes.kv("abs_dev", abs_dev);
            nodes.kv("rel_dev", rel_dev);
            nodes.kv("pass", ok);
            nodes.end_object();
        }
    }
    nodes.end_array();

    const bool pass = failures == 0;
    io::JsonWriter w;
    w.begin_object();
    w.kv("pass", pass);
    w.kv("eps", eps);
    w.kv("tol_rel", tol_rel);
    w.kv("tol_abs", tol_abs);
    w.kv("n_nodes", static_cast<std::uint64_t>(n_nodes));
    w.kv("n_failures", static_cast<std::uint64_t>(failures));
    w.kv("max_abs_dev", max_abs);
    w.kv("max_rel_dev", max_rel);
    w.kv("mean_abs_dev", sum_abs / static_cast<double>(n_nodes));
    w.kv("wall_ms", wall_ms);
    w.key("nodes").raw(nodes.take());
    w.end_object();
    emit_primary(opts.out, w.take() + "\n");
    emit_manifest("validate", config, opts.out, wall_ms, 1 + bumped.n_simulations);

    if (!pass) {
        std::cerr << "validate: " << failures << " of " << n_nodes
                  << " nodes outside tolerance (max abs dev " << max_abs
                  << "); eps may be too large for the central-difference truncation error\n";
        return kExitTolerance;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int cmd_bench(const CommonOpts& opts, unsigned repeats) {
    const io::RunConfig base = load_run(opts);
    if (repeats < 1) {
        throw io::ConfigError("bench: --repeats must be >= 1");
    }

    struct Combo {
        InterpBackend backend;
        PrecisionMode precision;
    };
    const Combo combos[] = {
        {InterpBackend::Gather, PrecisionMode::Full},
        {InterpBackend::Gather, PrecisionMode::Emulatedbf16},
        {InterpBackend::OneHot, PrecisionMode::Full},
        {InterpBackend::OneHot, PrecisionMode::Emulatedbf16},
    };

    const double work = static_cast<double>(base.sim.n_paths) * base.sim.n_steps;
    std::uint64_t n_simulations = 0;

    io::JsonWriter combos_json;
    combos_json.begin_array();
    std::string table =
        "backend  precision  op      median_ms      min_ms  paths*steps/s\n"
        "-------  ---------  ------  ---------  ----------  -------------\n";

    const auto bench_start = std::chrono::steady_clock::now();
    for (const Combo& combo : combos) {
        io::RunConfig config = base;
        config.sim.interp_backend = combo.backend;
        config.sim.precision = combo.precision;

        std::vector<double> price_ms;
        std::vector<double> greeks_ms;
        PriceEstimate last_price{};
        SensitivityReport last_greeks{};
        for (unsigned r = 0; r < repeats; ++r) {
            auto t0 = std::chrono::steady_clock::now();
            last_price = price(config.sim, config.surface_ref(), config.payoff, config.threads);
            price_ms.push_back(elapsed_ms(t0));

            t0 = std::chrono::steady_clock::now();
            last_greeks = greeks(config.sim, config.surface_ref(), config.payoff, config.threads);
            greeks_ms.push_back(elapsed_ms(t0));
            n_simulations += 2;
        }

        double vega_sum = 0.0;
        for (const double v : last_greeks.vega_grid.storage()) {
            vega_sum += v;
        }

        const std::string backend_name(io::to_name(combo.backend));
        const std::string precision_name(io::to_name(combo.precision));
        const auto row = [&](const char* op, const std::vector<double>& ms) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%-7s  %-9s  %-6s  %9.3f  %10.3f  %13.3e\n",
                          backend_name.c_str(), precision_name.c_str(), op, median(ms),
                          *std::min_element(ms.begin(), ms.end()), work / (median(ms) / 1000.0));
            table += buf;
        };
        row("price", price_ms);
        row("greeks", greeks_ms);

        combos_json.begin_object();
        combos_json.kv("backend", backend_name);
        combos_json.kv("precision", precision_name);
        combos_json.key("price").begin_object();
        combos_json.kv("median_ms", median(price_ms));
        combos_json.kv("min_ms", *std::min_element(price_ms.begin(), price_ms.end()));
        combos_json.key("wall_ms").begin_array();
        for (const double ms : price_ms) combos_json.value(ms);
        combos_json.end_array();
        combos_json.kv("value", last_price.mean);
        combos_json.kv("std_error", last_price.std_error);
        combos_json.kv("paths_steps_per_sec", work / (median(price_ms) / 1000.0));
        combos_json.end_object();
        combos_json.key("greeks").begin_object();
        combos_json.kv("median_ms", median(greeks_ms));
        combos_json.kv("min_ms", *std::min_element(greeks_ms.begin(), greeks_ms.end()));
        combos_json.key("wall_ms").begin_array();
        for (const double ms : greeks_ms) combos_json.value(ms);
        combos_json.end_array();
        combos_json.kv("delta", last_greeks.delta);
        combos_json.kv("vega_sum", vega_sum);
        combos_json.kv("paths_steps_per_sec", work / (median(greeks_ms) / 1000.0));
        combos_json.end_object();
        combos_json.end_object();
    }
    combos_json.end_array();
    const double wall_ms = elapsed_ms(bench_start);

    io::JsonWriter w;
    w.begin_object();
    w.kv("repeats", static_cast<std::uint64_t>(repeats));
    w.kv("n_paths", base.sim.n_paths);
    w.kv("n_steps", static_cast<std::uint64_t>(base.sim.n_steps));
    w.kv("threads", static_cast<std::uint64_t>(base.threads));
    w.kv("timing_scope",
         "compute call including result materialization, excluding file and config I/O");
    w.key("combos").raw(combos_json.take());
    w.end_object();

    std::fwrite(table.data(), 1, table.size(), stdout);
    const std::string json_path = opts.out.empty() ? "bench.json" : opts.out;
    io::write_file_atomic(json_path, w.take() + "\n");
    emit_manifest("bench", base, json_path, wall_ms, n_simulations);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// gen-surface
// ---------------------------------------------------------------------------

int cmd_gen_surface(const SyntheticSurfaceParams& params, const std::string& out_path) {
    const VolSurface surface = [&] {
        try {
            return synthetic_surface(params);
        } catch (const Error& e) {
            // Parameter problems are usage errors for this subcommand.
            throw io::ConfigError(std::string("gen-surface: ") + e.what());
        }
    }();

    emit_primary(out_path, io::surface_to_tsv(surface));

    io::JsonWriter w;
    w.begin_object();
    w.kv("tool_version", io::kToolVersion);
    w.kv("subcommand", "gen-surface");
    w.key("params").begin_object();
    w.kv("spots", static_cast<std::uint64_t>(params.n_spots));
    w.kv("times", static_cast<std::uint64_t>(params.n_times));
    w.kv("s0", params.s0);
    w.kv("base", params.base);
    w.kv("skew", params.skew);
    w.kv("lo", params.lo);
    w.kv("hi", params.hi);
    w.kv("maturity", params.maturity);
    w.end_object();
    w.end_object();
    const fs::path manifest_path = out_path.empty() ? fs::path("gen-surface.manifest.json")
                                                    : fs::path(out_path + ".manifest.json");
    io::write_file_atomic(manifest_path, w.take() + "\n");
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dupire local volatility Monte Carlo pricer with adjoint vega surface"};
    app.require_subcommand(1);

    CommonOpts price_opts;
    CLI::App* price_cmd = app.add_subcommand("price", "Monte Carlo price with standard error");
    add_common_flags(price_cmd, price_opts);

    CommonOpts greeks_opts;
    bool greeks_wide = false;
    CLI::App* greeks_cmd =
        app.add_subcommand("greeks", "price, delta and the full vega grid via the adjoint pass");
    add_common_flags(greeks_cmd, greeks_opts);
    greeks_cmd->add_flag("--wide", greeks_wide, "emit the vega grid in the surface file layout");

    CommonOpts validate_opts;
    double validate_eps = 1e-4;
    double tol_rel = 0.01;
    double tol_abs = 2e-3;
    bool force = false;
    CLI::App* validate_cmd =
        app.add_subcommand("validate", "adjoint vs bump-and-revalue comparison on every node");
    add_common_flags(validate_cmd, validate_opts);
    validate_cmd->add_option("--eps", validate_eps, "central-difference bump size (vol units)");
    validate_cmd->add_option("--tol-rel", tol_rel, "per-node relative tolerance");
    validate_cmd->add_option("--tol-abs", tol_abs, "per-node absolute tolerance (price per vol)");
    validate_cmd->add_flag("--force", force, "allow grids with more than 400 nodes");

    CommonOpts bench_opts;
    unsigned repeats = 11;
    CLI::App* bench_cmd =
        app.add_subcommand("bench", "time price and greeks across backends and precision modes");
    add_common_flags(bench_cmd, bench_opts);
    bench_cmd->add_option("--repeats", repeats, "timed repetitions per combination");

    SyntheticSurfaceParams gen_params;
    std::string gen_out;
    CLI::App* gen_cmd = app.add_subcommand("gen-surface", "write a synthetic smile surface");
    gen_cmd->add_option("--spots", gen_params.n_spots, "number of spot levels (>= 2)");
    gen_cmd->add_option("--times", gen_params.n_times, "number of time nodes (>= 2)");
    gen_cmd->add_option("--s0", gen_params.s0, "smile center");
    gen_cmd->add_option("--base", gen_params.base, "base volatility level");
    gen_cmd->add_option("--skew", gen_params.skew, "smile curvature");
    gen_cmd->add_option("--lo", gen_params.lo, "lower spot bound as a fraction of s0");
    gen_cmd->add_option("--hi", gen_params.hi, "upper spot bound as a fraction of s0");
    gen_cmd->add_option("--maturity", gen_params.maturity, "last time node (years)");
    gen_cmd->add_option("--out", gen_out, "surface file path (stdout when omitted)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitConfig;
    }

    try {
        if (price_cmd->parsed()) return cmd_price(price_opts);
        if (greeks_cmd->parsed()) return cmd_greeks(greeks_opts, greeks_wide);
        if (validate_cmd->parsed())
            return cmd_validate(validate_opts, validate_eps, tol_rel, tol_abs, force);
        if (bench_cmd->parsed()) return cmd_bench(bench_opts, repeats);
        if (gen_cmd->parsed()) return cmd_gen_surface(gen_params, gen_out);
    } catch (const io::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return kExitConfig;
}
