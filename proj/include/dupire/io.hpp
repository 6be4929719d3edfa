#pragma once

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dupire/engine.hpp"
#include "dupire/surface.hpp"

namespace dupire::io {

// Config / usage problems map to CLI exit code 2 (data validation issues
// stay dupire::Error and map to 3).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Surface file format: tab-separated, header row `spot<TAB>t_0 ... t_{J-1}`,
// one row per spot level, values in decimal (%.17g on write).
// ---------------------------------------------------------------------------

std::string surface_to_tsv(const VolSurface& surface);
VolSurface parse_surface_tsv(std::string_view text);
void write_surface_tsv(const VolSurface& surface, const std::filesystem::path& path);
VolSurface read_surface_tsv(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run configuration: one JSON document with sections `simulation`, `payoff`,
// `surface` (inline values or file reference) and `run`.
// ---------------------------------------------------------------------------

struct RunConfig {
    SimConfig sim;
    Payoff payoff;
    std::optional<VolSurface> surface;
    std::string surface_file;  // empty when the surface was given inline
    unsigned threads = 0;

    const VolSurface& surface_ref() const;
};

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

// Enum spellings shared by the config schema and the CLI flag overrides.
Scheme parse_scheme(std::string_view name);
InterpBackend parse_backend(std::string_view name);
PrecisionMode parse_precision(std::string_view name);
PayoffKind parse_payoff_kind(std::string_view name);
std::string_view to_name(Scheme s);
std::string_view to_name(InterpBackend b);
std::string_view to_name(PrecisionMode p);
std::string_view to_name(PayoffKind k);

// Serializes the resolved config back to the schema accepted by
// parse_config (manifest round-trips rely on this).
std::string config_to_json(const RunConfig& config);

// ---------------------------------------------------------------------------
// Serialization helpers
// ---------------------------------------------------------------------------

// Shortest exact decimal is not required anywhere; all floats are emitted
// with 17 significant digits so serialized output is reproducible and
// round-trips to the identical double.
std::string format_g17(double v);

// Minimal ordered JSON emitter; key order is insertion order so repeated
// runs serialize byte-identically.
class JsonWriter {
public:
    JsonWriter& begin_object();
    JsonWriter& end_object();
    JsonWriter& begin_array();
    JsonWriter& end_array();
    JsonWriter& key(std::string_view k);
    JsonWriter& value(double v);
    JsonWriter& value(std::int64_t v);
    JsonWriter& value(std::uint64_t v);
    JsonWriter& value(int v) { return value(static_cast<std::int64_t>(v)); }
    JsonWriter& value(unsigned v) { return value(static_cast<std::uint64_t>(v)); }
    JsonWriter& value(std::string_view v);
    JsonWriter& value(const char* v) { return value(std::string_view(v)); }
    JsonWriter& value(bool v);
    JsonWriter& raw(std::string_view text);

    template <typename T>
    JsonWriter& kv(std::string_view k, T&& v) {
        key(k);
        return value(std::forward<T>(v));
    }

    std::string take() { return std::move(out_); }
    const std::string& str() const { return out_; }

private:
    void comma();
    std::string out_;
    std::vector<bool> first_;  // per open scope: no element emitted yet
    bool pending_key_ = false;
};

// Complete-or-nothing file write: temp file in the target directory, then
// atomic rename.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Run manifest: resolved config + provenance, serialized alongside every
// CLI output.
// ---------------------------------------------------------------------------

struct RunManifest {
    std::string subcommand;
    RunConfig config;
    double wall_ms = 0.0;
    std::uint64_t n_simulations = 0;
};

std::string manifest_to_json(const RunManifest& manifest, std::string_view timestamp_utc);
void write_manifest(const RunManifest& manifest, const std::filesystem::path& path);

inline constexpr std::string_view kToolVersion = "0.1.0";

} // namespace dupire::io
