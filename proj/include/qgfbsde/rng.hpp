#pragma once

#include <array>
#include <cstdint>

namespace qgfbsde {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
/// Output depends only on (counter, key): no state, no ordering constraints.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key);

/// Standard normal draw keyed by (seed, path, step, component).
double normal_draw(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t component);

/// Uniform draw in (0, 1) keyed the same way (independent stream from normal_draw).
double uniform_draw(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t component);

} // namespace qgfbsde
