#include "dupire/io.hpp"

#include <cerrno>
#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include <json.hpp>

#include "dupire/errors.hpp"

namespace dupire::io {

using nlohmann::json;

// ---------------------------------------------------------------------------
// number formatting
// ---------------------------------------------------------------------------

std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// surface TSV
// ---------------------------------------------------------------------------

std::string surface_to_tsv(const VolSurface& surface) {
    std::string out = "spot";
    for (const double t : surface.times()) {
        out += '\t';
        out += format_g17(t);
    }
    out += '\n';
    for (std::size_t i = 0; i < surface.n_spots(); ++i) {
        out += format_g17(surface.spots()[i]);
        for (std::size_t j = 0; j < surface.n_times(); ++j) {
            out += '\t';
            out += format_g17(surface.vols()(i, j));
        }
        out += '\n';
    }
    return out;
}

namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        const std::size_t pos = line.find('\t', start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

double parse_number(std::string_view cell, std::size_t line_no) {
    const std::string tmp(cell);
    char* end = nullptr;
    errno = 0;
    const double v = std::strtod(tmp.c_str(), &end);
    if (end == tmp.c_str() || *end != '\0' || errno == ERANGE) {
        raise(ErrorCode::DomainError,
              "surface file: bad numeric cell '" + tmp + "' on line " + std::to_string(line_no));
    }
    return v;
}

} // namespace

VolSurface parse_surface_tsv(std::string_view text) {
    std::vector<std::string_view> lines;
    std::size_t start = 0;
    while (start < text.size()) {
        std::size_t pos = text.find('\n', start);
        if (pos == std::string_view::npos) {
            pos = text.size();
        }
        std::string_view line = text.substr(start, pos - start);
        if (!line.empty() && line.back() == '\r') {
            line.remove_suffix(1);
        }
        if (!line.empty()) {
            lines.push_back(line);
        }
        start = pos + 1;
    }
    if (lines.size() < 2) {
        raise(ErrorCode::DomainError, "surface file: need a header and at least one spot row");
    }

    const auto header = split_tabs(lines[0]);
    if (header.size() < 2 || header[0] != "spot") {
        raise(ErrorCode::DomainError, "surface file: header must start with 'spot' and list time nodes");
    }
    std::vector<double> times;
    times.reserve(header.size() - 1);
    for (std::size_t c = 1; c < header.size(); ++c) {
        times.push_back(parse_number(header[c], 1));
    }

    const std::size_t n_times = times.size();
    std::vector<double> spots;
    Matrix vols(lines.size() - 1, n_times);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split_tabs(lines[r]);
        if (cells.size() != n_times + 1) {
            raise(ErrorCode::DomainError, "surface file: line " + std::to_string(r + 1) + " has " +
                                              std::to_string(cells.size()) + " cells, expected " +
                                              std::to_string(n_times + 1));
        }
        spots.push_back(parse_number(cells[0], r + 1));
        for (std::size_t c = 0; c < n_times; ++c) {
            vols(r - 1, c) = parse_number(cells[c + 1], r + 1);
        }
    }
    return VolSurface(std::move(spots), std::move(times), std::move(vols));
}

void write_surface_tsv(const VolSurface& surface, const std::filesystem::path& path) {
    write_file_atomic(path, surface_to_tsv(surface));
}

VolSurface read_surface_tsv(const std::filesystem::path& path) {
    return parse_surface_tsv(read_file(path));
}

// ---------------------------------------------------------------------------
// config
// ---------------------------------------------------------------------------

const VolSurface& RunConfig::surface_ref() const {
    if (!surface) {
        throw ConfigError("config has no resolved surface");
    }
    return *surface;
}

namespace {

[[noreturn]] void config_fail(const std::string& message) {
    throw ConfigError("config: " + message);
}

const json& require_section(const json& doc, const char* key) {
    const auto it = doc.find(key);
    if (it == doc.end() || !it->is_object()) {
        config_fail(std::string("missing section '") + key + "'");
    }
    return *it;
}

double get_double(const json& o, const char* key) {
    const auto it = o.find(key);
    if (it == o.end() || !it->is_number()) {
        config_fail(std::string("missing numeric field '") + key + "'");
    }
    return it->get<double>();
}

double get_double_or(const json& o, const char* key, double fallback) {
    const auto it = o.find(key);
    if (it == o.end()) {
        return fallback;
    }
    if (!it->is_number()) {
        config_fail(std::string("field '") + key + "' must be numeric");
    }
    return it->get<double>();
}

std::uint64_t get_uint(const json& o, const char* key) {
    const auto it = o.find(key);
    if (it == o.end() || !it->is_number_unsigned()) {
        config_fail(std::string("missing unsigned integer field '") + key + "'");
    }
    return it->get<std::uint64_t>();
}

std::uint64_t get_uint_or(const json& o, const char* key, std::uint64_t fallback) {
    const auto it = o.find(key);
    if (it == o.end()) {
        return fallback;
    }
    if (!it->is_number_unsigned()) {
        config_fail(std::string("field '") + key + "' must be an unsigned integer");
    }
    return it->get<std::uint64_t>();
}

std::string get_string_or(const json& o, const char* key, std::string fallback) {
    const auto it = o.find(key);
    if (it == o.end()) {
        return fallback;
    }
    if (!it->is_string()) {
        config_fail(std::string("field '") + key + "' must be a string");
    }
    return it->get<std::string>();
}

} // namespace

Scheme parse_scheme(std::string_view name) {
    if (name == "euler") return Scheme::Euler;
    if (name == "logeuler") return Scheme::LogEuler;
    config_fail("unknown scheme '" + std::string(name) + "' (expected euler|logeuler)");
}

InterpBackend parse_backend(std::string_view name) {
    if (name == "gather") return InterpBackend::Gather;
    if (name == "onehot") return InterpBackend::OneHot;
    config_fail("unknown backend '" + std::string(name) + "' (expected gather|onehot)");
}

PrecisionMode parse_precision(std::string_view name) {
    if (name == "full") return PrecisionMode::Full;
    if (name == "bf16") return PrecisionMode::Emulatedbf16;
    config_fail("unknown precision '" + std::string(name) + "' (expected full|bf16)");
}

PayoffKind parse_payoff_kind(std::string_view name) {
    if (name == "call") return PayoffKind::EuropeanCall;
    if (name == "put") return PayoffKind::EuropeanPut;
    config_fail("unknown payoff kind '" + std::string(name) + "' (expected call|put)");
}

std::string_view to_name(Scheme s) { return s == Scheme::Euler ? "euler" : "logeuler"; }
std::string_view to_name(InterpBackend b) { return b == InterpBackend::Gather ? "gather" : "onehot"; }
std::string_view to_name(PrecisionMode p) { return p == PrecisionMode::Full ? "full" : "bf16"; }
std::string_view to_name(PayoffKind k) { return k == PayoffKind::EuropeanCall ? "call" : "put"; }

RunConfig parse_config(std::string_view text, const std::filesystem::path& base_dir) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        config_fail(std::string("JSON parse error: ") + e.what());
    }
    if (!doc.is_object()) {
        config_fail("top-level document must be an object");
    }
    // Manifests embed the resolved config under "config"; accept them directly.
    if (!doc.contains("simulation") && doc.contains("config")) {
        doc = doc["config"];
    }

    RunConfig out;
    const json& sim = require_section(doc, "simulation");
    out.sim.s0 = get_double(sim, "s0");
    out.sim.maturity = get_double(sim, "maturity");
    out.sim.n_steps = static_cast<std::uint32_t>(get_uint(sim, "n_steps"));
    out.sim.n_paths = get_uint(sim, "n_paths");
    out.sim.batch_size = get_uint_or(sim, "batch_size", 2048);
    if (out.sim.batch_size > out.sim.n_paths) {
        out.sim.batch_size = out.sim.n_paths;
    }
    out.sim.scheme = parse_scheme(get_string_or(sim, "scheme", "euler"));
    out.sim.key.seed = get_uint_or(sim, "seed", 0);
    out.sim.key.stream_salt = get_uint_or(sim, "stream_salt", 0);
    out.sim.precision = parse_precision(get_string_or(sim, "precision", "full"));
    out.sim.interp_backend = parse_backend(get_string_or(sim, "backend", "gather"));

    const json& payoff = require_section(doc, "payoff");
    out.payoff.kind = parse_payoff_kind(get_string_or(payoff, "kind", "call"));
    out.payoff.strike = get_double(payoff, "strike");

    const json& surf = require_section(doc, "surface");
    if (surf.contains("file")) {
        if (!surf["file"].is_string()) {
            config_fail("surface.file must be a string path");
        }
        std::filesystem::path p = surf["file"].get<std::string>();
        if (p.is_relative()) {
            p = base_dir / p;
        }
        out.surface_file = p.string();
        out.surface = read_surface_tsv(p);
    } else if (surf.contains("spots")) {
        const auto need_array = [&](const char* key) -> const json& {
            const auto it = surf.find(key);
            if (it == surf.end() || !it->is_array()) {
                config_fail(std::string("inline surface needs array field '") + key + "'");
            }
            return *it;
        };
        std::vector<double> spots;
        for (const auto& v : need_array("spots")) spots.push_back(v.get<double>());
        std::vector<double> times;
        for (const auto& v : need_array("times")) times.push_back(v.get<double>());
        const json& rows = need_array("vols");
        Matrix vols(spots.size(), times.size());
        if (rows.size() != spots.size()) {
            config_fail("inline surface: vols must have one row per spot");
        }
        for (std::size_t i = 0; i < spots.size(); ++i) {
            if (!rows[i].is_array() || rows[i].size() != times.size()) {
                config_fail("inline surface: vols row " + std::to_string(i) +
                            " must have one value per time node");
            }
            for (std::size_t j = 0; j < times.size(); ++j) {
                vols(i, j) = rows[i][j].get<double>();
            }
        }
        out.surface = VolSurface(std::move(spots), std::move(times), std::move(vols));
    } else {
        config_fail("surface section needs either 'file' or inline 'spots'/'times'/'vols'");
    }

    if (doc.contains("run") && doc["run"].is_object()) {
        out.threads = static_cast<unsigned>(get_uint_or(doc["run"], "threads", 0));
    }

    try {
        out.sim.validate();
        out.payoff.validate();
    } catch (const Error& e) {
        config_fail(e.what());
    }
    return out;
}

RunConfig load_config(const std::filesystem::path& path) {
    return parse_config(read_file(path), path.has_parent_path() ? path.parent_path() : ".");
}

std::string config_to_json(const RunConfig& config) {
    JsonWriter w;
    w.begin_object();
    w.key("simulation").begin_object();
    w.kv("s0", config.sim.s0);
    w.kv("maturity", config.sim.maturity);
    w.kv("n_steps", static_cast<std::uint64_t>(config.sim.n_steps));
    w.kv("n_paths", config.sim.n_paths);
    w.kv("batch_size", config.sim.batch_size);
    w.kv("scheme", to_name(config.sim.scheme));
    w.kv("seed", config.sim.key.seed);
    w.kv("stream_salt", config.sim.key.stream_salt);
    w.kv("precision", to_name(config.sim.precision));
    w.kv("backend", to_name(config.sim.interp_backend));
    w.end_object();

    w.key("payoff").begin_object();
    w.kv("kind", to_name(config.payoff.kind));
    w.kv("strike", config.payoff.strike);
    w.end_object();

    w.key("surface").begin_object();
    if (!config.surface_file.empty()) {
        w.kv("file", config.surface_file);
    } else if (config.surface) {
        const VolSurface& s = *config.surface;
        w.key("spots").begin_array();
        for (const double v : s.spots()) w.value(v);
        w.end_array();
        w.key("times").begin_array();
        for (const double v : s.times()) w.value(v);
        w.end_array();
        w.key("vols").begin_array();
        for (std::size_t i = 0; i < s.n_spots(); ++i) {
            w.begin_array();
            for (std::size_t j = 0; j < s.n_times(); ++j) w.value(s.vols()(i, j));
            w.end_array();
        }
        w.end_array();
    }
    w.end_object();

    w.key("run").begin_object();
    w.kv("threads", static_cast<std::uint64_t>(config.threads));
    w.end_object();
    w.end_object();
    return w.take();
}

// ---------------------------------------------------------------------------
// JsonWriter
// ---------------------------------------------------------------------------

void JsonWriter::comma() {
    if (pending_key_) {
        pending_key_ = false;
        return;
    }
    if (!first_.empty()) {
        if (!first_.back()) {
            out_ += ',';
        }
        first_.back() = false;
    }
}

JsonWriter& JsonWriter::begin_object() {
    comma();
    out_ += '{';
    first_.push_back(true);
    return *this;
}

JsonWriter& JsonWriter::end_object() {
    first_.pop_back();
    out_ += '}';
    return *this;
}

JsonWriter& JsonWriter::begin_array() {
    comma();
    out_ += '[';
    first_.push_back(true);
    return *this;
}

JsonWriter& JsonWriter::end_array() {
    first_.pop_back();
    out_ += ']';
    return *this;
}

namespace {

void append_escaped(std::string& out, std::string_view s) {
    out += '"';
    for (const char c : s) {
        switch (c) {
            case '"': out += "\\\""; break;
            case '\\': out += "\\\\"; break;
            case '\n': out += "\\n"; break;
            case '\r': out += "\\r"; break;
            case '\t': out += "\\t"; break;
            default:
                if (static_cast<unsigned char>(c) < 0x20) {
                    char buf[8];
                    std::snprintf(buf, sizeof(buf), "\\u%04x", c);
                    out += buf;
                } else {
                    out += c;
                }
        }
    }
    out += '"';
}

} // namespace

JsonWriter& JsonWriter::key(std::string_view k) {
    if (!first_.empty()) {
        if (!first_.back()) {
            out_ += ',';
        }
        first_.back() = false;
    }
    append_escaped(out_, k);
    out_ += ':';
    pending_key_ = true;
    return *this;
}

JsonWriter& JsonWriter::value(double v) {
    comma();
    out_ += format_g17(v);
    return *this;
}

JsonWriter& JsonWriter::value(std::int64_t v) {
    comma();
    out_ += std::to_string(v);
    return *this;
}

JsonWriter& JsonWriter::value(std::uint64_t v) {
    comma();
    out_ += std::to_string(v);
    return *this;
}

JsonWriter& JsonWriter::value(std::string_view v) {
    comma();
    append_escaped(out_, v);
    return *this;
}

JsonWriter& JsonWriter::value(bool v) {
    comma();
    out_ += v ? "true" : "false";
    return *this;
}

JsonWriter& JsonWriter::raw(std::string_view text) {
    comma();
    out_ += text;
    return *this;
}

// ---------------------------------------------------------------------------
// files
// ---------------------------------------------------------------------------

void write_file_atomic(const std::filesystem::path& path, std::string_view content) {
    std::filesystem::path dir = path.parent_path();
    if (dir.empty()) {
        dir = ".";
    }
    const std::filesystem::path tmp =
        dir / (path.filename().string() + ".tmp." + std::to_string(::getpid()));
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) {
            throw std::runtime_error("cannot open temporary file " + tmp.string());
        }
        f.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!f) {
            throw std::runtime_error("short write to " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        raise(ErrorCode::DomainError, "cannot open file " + path.string());
    }
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// ---------------------------------------------------------------------------
// manifest
// ---------------------------------------------------------------------------

std::string manifest_to_json(const RunManifest& manifest, std::string_view timestamp_utc) {
    JsonWriter w;
    w.begin_object();
    w.kv("tool_version", kToolVersion);
    w.kv("created_utc", timestamp_utc);
    w.kv("subcommand", manifest.subcommand);
    w.kv("wall_ms", manifest.wall_ms);
    w.kv("n_simulations", manifest.n_simulations);
    w.key("config").raw(config_to_json(manifest.config));
    w.end_object();
    return w.take();
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& path) {
    std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    write_file_atomic(path, manifest_to_json(manifest, buf));
}

} // namespace dupire::io
