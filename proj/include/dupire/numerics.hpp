#pragma once

#include <cstdint>

namespace dupire {

// Precision regime for the interpolation matmul. Emulatedbf16 rounds the
// matmul operands (weights and vol grid) to bfloat16 before multiplying;
// accumulation stays at working precision. Element-wise simulation math,
// RNG and payoff logic are never affected.
enum class PrecisionMode {
    Full,
    Emulatedbf16,
};

// Round to bfloat16 (1 sign, 8 exponent, 7 explicit mantissa bits),
// round-to-nearest-even, result returned as a double. Non-finite values
// pass through unchanged.
double round_bf16(double x) noexcept;

// Streaming mean/variance accumulator (Welford), mergeable across batches
// without precision loss.
struct WelfordAcc {
    std::uint64_t count = 0;
    double mean = 0.0;
    double m2 = 0.0;

    void add(double x) noexcept {
        ++count;
        const double delta = x - mean;
        mean += delta / static_cast<double>(count);
        m2 += delta * (x - mean);
    }

    double sample_variance() const noexcept {
        return count > 1 ? m2 / static_cast<double>(count - 1) : 0.0;
    }

    // sample std / sqrt(n)
    double std_error() const noexcept;
};

WelfordAcc welford_merge(const WelfordAcc& a, const WelfordAcc& b) noexcept;

// Folds `n_zeros` additional zero observations into the accumulator.
// Equivalent to calling add(0.0) that many times, in one exact step.
void welford_add_zeros(WelfordAcc& acc, std::uint64_t n_zeros) noexcept;

} // namespace dupire
