#pragma once

#include <array>
#include <cstdint>

namespace dupire {

// Identifies one logical random stream. All draws are pure functions of
// (key, path, step), so the adjoint pass, every bump run and any thread
// schedule see exactly the same numbers.
struct RngKey {
    std::uint64_t seed = 0;
    std::uint64_t stream_salt = 0;

    friend bool operator==(const RngKey&, const RngKey&) = default;
};

// Philox4x32-10 keyed block permutation (Salmon et al., SC'11).
// Exposed for the known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key) noexcept;

// Raw 64-bit word for (key, path, step): output words 0 and 1 of the Philox
// block at counter (step, path, salt_lo, salt_hi) under key (seed_lo, seed_hi).
std::uint64_t raw64(const RngKey& key, std::uint64_t path, std::uint64_t step) noexcept;

// Uniform draw strictly inside (0, 1): ((word >> 11) + 0.5) * 2^-53,
// so the inverse normal CDF below is always finite.
double uniform(const RngKey& key, std::uint64_t path, std::uint64_t step) noexcept;

// Standard normal draw via inverse-CDF transform of `uniform`. One counter
// maps to one normal, which keeps (path, step) indexing aligned across
// bump and adjoint runs.
double normal(const RngKey& key, std::uint64_t path, std::uint64_t step) noexcept;

// Inverse standard normal CDF (Wichura's AS241 rational approximation,
// absolute error below 1e-9 on (1e-15, 1 - 1e-15)). Exposed so tests can
// inject synthetic uniforms.
double inverse_normal_cdf(double u) noexcept;

} // namespace dupire
