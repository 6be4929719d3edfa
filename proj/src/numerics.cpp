#include "dupire/numerics.hpp"

#include <cmath>
#include <limits>

namespace dupire {

double round_bf16(double x) noexcept {
    if (!std::isfinite(x) || x == 0.0) {
        return x;
    }

    const double ax = std::fabs(x);
    constexpr double kMinNormal = 0x1p-126;
    constexpr double kMaxBf16 = 0x1.FEp127;  // (2 - 2^-7) * 2^127

    double result;
    if (ax < kMinNormal) {
        // Subnormal range: fixed quantum 2^-133. Scaling by a power of two
        // is exact, so nearbyint applies round-to-nearest-even directly.
        result = std::ldexp(std::nearbyint(std::ldexp(ax, 133)), -133);
    } else {
        // Round to 8 significant bits: scale the mantissa onto [128, 256),
        // round to integer, scale back.
        int e = 0;
        std::frexp(ax, &e);
        result = std::ldexp(std::nearbyint(std::ldexp(ax, 8 - e)), e - 8);
        if (result > kMaxBf16) {
            result = std::numeric_limits<double>::infinity();
        }
    }
    return std::copysign(result, x);
}

double WelfordAcc::std_error() const noexcept {
    if (count < 2) {
        return 0.0;
    }
    return std::sqrt(sample_variance() / static_cast<double>(count));
}

WelfordAcc welford_merge(const WelfordAcc& a, const WelfordAcc& b) noexcept {
    if (a.count == 0) return b;
    if (b.count == 0) return a;

    WelfordAcc out;
    out.count = a.count + b.count;
    const double na = static_cast<double>(a.count);
    const double nb = static_cast<double>(b.count);
    const double n = na + nb;
    const double delta = b.mean - a.mean;
    out.mean = a.mean + delta * (nb / n);
    out.m2 = a.m2 + b.m2 + delta * delta * (na * nb / n);
    return out;
}

void welford_add_zeros(WelfordAcc& acc, std::uint64_t n_zeros) noexcept {
    WelfordAcc zeros;
    zeros.count = n_zeros;
    acc = welford_merge(acc, zeros);
}

} // namespace dupire
