#include "dupire/surface.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "dupire/errors.hpp"

namespace dupire {

namespace {

bool is_uniform(const std::vector<double>& axis) noexcept {
    const double span = axis.back() - axis.front();
    const double h = span / static_cast<double>(axis.size() - 1);
    for (std::size_t k = 0; k + 1 < axis.size(); ++k) {
        if (std::fabs((axis[k + 1] - axis[k]) - h) > 1e-12 * span) {
            return false;
        }
    }
    return true;
}

void check_axis(const std::vector<double>& axis, const char* name) {
    if (axis.size() < 2) {
        raise(ErrorCode::TooFewNodes, std::string(name) + " axis needs at least 2 nodes, got " +
                                          std::to_string(axis.size()));
    }
    for (std::size_t k = 0; k < axis.size(); ++k) {
        if (!std::isfinite(axis[k])) {
            raise(ErrorCode::NonMonotonicAxis, std::string(name) + " axis has non-finite entry at " +
                                                   std::to_string(k));
        }
        if (k > 0 && !(axis[k] > axis[k - 1])) {
            raise(ErrorCode::NonMonotonicAxis, std::string(name) + " axis not strictly increasing at " +
                                                   std::to_string(k));
        }
    }
}

} // namespace

VolSurface::VolSurface(std::vector<double> spots, std::vector<double> times, Matrix vols)
    : spots_(std::move(spots)), times_(std::move(times)), vols_(std::move(vols)) {
    check_axis(spots_, "spot");
    check_axis(times_, "time");
    if (vols_.rows() != spots_.size() || vols_.cols() != times_.size()) {
        raise(ErrorCode::DimensionMismatch,
              "vols is " + std::to_string(vols_.rows()) + "x" + std::to_string(vols_.cols()) +
                  ", expected " + std::to_string(spots_.size()) + "x" + std::to_string(times_.size()));
    }
    for (std::size_t i = 0; i < vols_.rows(); ++i) {
        for (std::size_t j = 0; j < vols_.cols(); ++j) {
            const double v = vols_(i, j);
            if (!std::isfinite(v) || v < 0.0) {
                raise(ErrorCode::NegativeVol, "vol at (" + std::to_string(i) + "," + std::to_string(j) +
                                                  ") is " + std::to_string(v));
            }
        }
    }
    uniform_spots_ = is_uniform(spots_);
    uniform_times_ = is_uniform(times_);
}

VolSurface new_surface(std::vector<double> spots, std::vector<double> times, Matrix vols) {
    return VolSurface(std::move(spots), std::move(times), std::move(vols));
}

VolSurface VolSurface::with_vols_unchecked(const VolSurface& base, Matrix vols) {
    if (!vols.same_shape(base.vols_)) {
        raise(ErrorCode::DimensionMismatch, "replacement vol grid shape differs from surface");
    }
    VolSurface out = base;
    out.vols_ = std::move(vols);
    return out;
}

namespace detail {

AxisCell locate(std::span<const double> axis, bool uniform, double q) {
    const std::size_t n = axis.size();
    AxisCell cell;

    double qc = q;
    if (qc <= axis.front()) {
        cell.clamped = (qc < axis.front());
        qc = axis.front();
        cell.index = 0;
    } else if (qc >= axis.back()) {
        cell.clamped = (qc > axis.back());
        qc = axis.back();
        cell.index = static_cast<std::int32_t>(n) - 2;
    } else if (uniform) {
        const double h = (axis.back() - axis.front()) / static_cast<double>(n - 1);
        auto idx = static_cast<std::int64_t>((qc - axis.front()) / h);
        idx = std::clamp<std::int64_t>(idx, 0, static_cast<std::int64_t>(n) - 2);
        // fix up rounding so the half-open cell convention holds exactly
        if (qc < axis[static_cast<std::size_t>(idx)]) {
            --idx;
        } else if (idx + 1 < static_cast<std::int64_t>(n) - 1 &&
                   qc >= axis[static_cast<std::size_t>(idx) + 1]) {
            ++idx;
        }
        cell.index = static_cast<std::int32_t>(idx);
    } else {
        const auto it = std::upper_bound(axis.begin(), axis.end(), qc);
        auto idx = static_cast<std::int64_t>(it - axis.begin()) - 1;
        idx = std::clamp<std::int64_t>(idx, 0, static_cast<std::int64_t>(n) - 2);
        cell.index = static_cast<std::int32_t>(idx);
    }

    const double x0 = axis[static_cast<std::size_t>(cell.index)];
    const double x1 = axis[static_cast<std::size_t>(cell.index) + 1];
    cell.inv_width = 1.0 / (x1 - x0);
    cell.frac = (qc - x0) * cell.inv_width;
    return cell;
}

BilinearWeights combine(const AxisCell& cx, const AxisCell& ct) {
    BilinearWeights out;
    out.i = cx.index;
    out.j = ct.index;
    const double u = cx.frac;
    const double v = ct.frac;
    out.w = {(1.0 - u) * (1.0 - v), u * (1.0 - v), (1.0 - u) * v, u * v};
    const double dudx = cx.clamped ? 0.0 : cx.inv_width;
    out.dwdx = {-(1.0 - v) * dudx, (1.0 - v) * dudx, -v * dudx, v * dudx};
    return out;
}

double apply_weights(const VolSurface& surface, const BilinearWeights& w) noexcept {
    const double* v = surface.vols().data();
    const std::size_t cols = surface.n_times();
    const std::size_t base0 = static_cast<std::size_t>(w.i) * cols + static_cast<std::size_t>(w.j);
    const std::size_t base1 = base0 + cols;
    return w.w[0] * v[base0] + w.w[1] * v[base1] + w.w[2] * v[base0 + 1] + w.w[3] * v[base1 + 1];
}

void gather_batch(const VolSurface& surface, std::span<const BilinearWeights> w,
                  std::span<double> out) noexcept {
    for (std::size_t k = 0; k < w.size(); ++k) {
        out[k] = apply_weights(surface, w[k]);
    }
}

void onehot_batch(const VolSurface& surface, std::span<const BilinearWeights> w,
                  PrecisionMode precision, std::span<double> out) {
    const std::size_t cols = surface.n_times();
    const std::size_t grid_size = surface.vols().size();
    const bool emulate = precision == PrecisionMode::Emulatedbf16;

    // V: the flattened vol grid, rounded once per call under bf16 emulation.
    static thread_local std::vector<double> v_buf;
    const double* v = surface.vols().data();
    if (emulate) {
        v_buf.resize(grid_size);
        for (std::size_t k = 0; k < grid_size; ++k) {
            v_buf[k] = round_bf16(v[k]);
        }
        v = v_buf.data();
    }

    // W materialized in row chunks; each row is one-hot-scaled (at most four
    // nonzeros), the product W * V is a dense dot per row.
    constexpr std::size_t kChunk = 64;
    static thread_local std::vector<double> w_rows;
    if (w_rows.size() < kChunk * grid_size) {
        w_rows.assign(kChunk * grid_size, 0.0);  // rows are restored to zero after each dot
    }

    std::array<std::size_t, 4> touched{};
    for (std::size_t start = 0; start < w.size(); start += kChunk) {
        const std::size_t rows = std::min(kChunk, w.size() - start);
        for (std::size_t r = 0; r < rows; ++r) {
            const BilinearWeights& bw = w[start + r];
            double* row = w_rows.data() + r * grid_size;
            const std::size_t base0 =
                static_cast<std::size_t>(bw.i) * cols + static_cast<std::size_t>(bw.j);
            touched = {base0, base0 + cols, base0 + 1, base0 + cols + 1};
            if (emulate) {
                row[touched[0]] = round_bf16(bw.w[0]);
                row[touched[1]] = round_bf16(bw.w[1]);
                row[touched[2]] = round_bf16(bw.w[2]);
                row[touched[3]] = round_bf16(bw.w[3]);
            } else {
                row[touched[0]] = bw.w[0];
                row[touched[1]] = bw.w[1];
                row[touched[2]] = bw.w[2];
                row[touched[3]] = bw.w[3];
            }

            double acc = 0.0;
            for (std::size_t c = 0; c < grid_size; ++c) {
                acc += row[c] * v[c];
            }
            out[start + r] = acc;

            row[touched[0]] = 0.0;
            row[touched[1]] = 0.0;
            row[touched[2]] = 0.0;
            row[touched[3]] = 0.0;
        }
    }
}

} // namespace detail

namespace {

void check_query(double x, double t) {
    if (!std::isfinite(x) || !std::isfinite(t)) {
        raise(ErrorCode::NonFiniteQuery,
              "query (" + std::to_string(x) + ", " + std::to_string(t) + ")");
    }
}

std::vector<BilinearWeights> batch_weights(const VolSurface& surface, std::span<const double> xs,
                                           double t) {
    if (!std::isfinite(t)) {
        raise(ErrorCode::NonFiniteQuery, "time " + std::to_string(t));
    }
    const auto ct = detail::locate(surface.times(), surface.uniform_times(), t);
    std::vector<BilinearWeights> out(xs.size());
    for (std::size_t k = 0; k < xs.size(); ++k) {
        if (!std::isfinite(xs[k])) {
            raise(ErrorCode::NonFiniteQuery, "xs[" + std::to_string(k) + "] = " + std::to_string(xs[k]));
        }
        out[k] = detail::combine(detail::locate(surface.spots(), surface.uniform_spots(), xs[k]), ct);
    }
    return out;
}

} // namespace

BilinearWeights weights(const VolSurface& surface, double x, double t) {
    check_query(x, t);
    const auto cx = detail::locate(surface.spots(), surface.uniform_spots(), x);
    const auto ct = detail::locate(surface.times(), surface.uniform_times(), t);
    return detail::combine(cx, ct);
}

std::vector<double> interp_gather(const VolSurface& surface, std::span<const double> xs, double t) {
    const auto w = batch_weights(surface, xs, t);
    std::vector<double> out(xs.size());
    detail::gather_batch(surface, w, out);
    return out;
}

std::vector<double> interp_onehot(const VolSurface& surface, std::span<const double> xs, double t,
                                  PrecisionMode precision) {
    const auto w = batch_weights(surface, xs, t);
    std::vector<double> out(xs.size());
    detail::onehot_batch(surface, w, precision, out);
    return out;
}

double dvol_dx(const VolSurface& surface, double x, double t) {
    const auto w = weights(surface, x, t);
    const double* v = surface.vols().data();
    const std::size_t cols = surface.n_times();
    const std::size_t base0 = static_cast<std::size_t>(w.i) * cols + static_cast<std::size_t>(w.j);
    const std::size_t base1 = base0 + cols;
    return w.dwdx[0] * v[base0] + w.dwdx[1] * v[base1] + w.dwdx[2] * v[base0 + 1] +
           w.dwdx[3] * v[base1 + 1];
}

void scatter_node_grads(const BilinearWeights& w, double upstream, Matrix& grad) noexcept {
    const auto i = static_cast<std::size_t>(w.i);
    const auto j = static_cast<std::size_t>(w.j);
    grad(i, j) += upstream * w.w[0];
    grad(i + 1, j) += upstream * w.w[1];
    grad(i, j + 1) += upstream * w.w[2];
    grad(i + 1, j + 1) += upstream * w.w[3];
}

VolSurface synthetic_surface(const SyntheticSurfaceParams& p) {
    if (p.n_spots < 2 || p.n_times < 2) {
        raise(ErrorCode::TooFewNodes, "synthetic surface needs at least a 2x2 grid");
    }
    if (!(p.s0 > 0.0) || !(p.maturity > 0.0) || !(p.lo > 0.0) || !(p.hi > p.lo)) {
        raise(ErrorCode::DomainError, "invalid synthetic surface parameters");
    }

    std::vector<double> spots(p.n_spots);
    std::vector<double> times(p.n_times);
    for (std::size_t i = 0; i < p.n_spots; ++i) {
        const double a = static_cast<double>(i) / static_cast<double>(p.n_spots - 1);
        spots[i] = p.s0 * (p.lo + (p.hi - p.lo) * a);
    }
    for (std::size_t j = 0; j < p.n_times; ++j) {
        times[j] = p.maturity * static_cast<double>(j) / static_cast<double>(p.n_times - 1);
    }

    Matrix vols(p.n_spots, p.n_times);
    for (std::size_t i = 0; i < p.n_spots; ++i) {
        const double m = std::log(spots[i] / p.s0);
        for (std::size_t j = 0; j < p.n_times; ++j) {
            vols(i, j) = std::clamp(p.base + p.skew * m * m / (1.0 + times[j]), 0.05, 1.0);
        }
    }
    return VolSurface(std::move(spots), std::move(times), std::move(vols));
}

} // namespace dupire
