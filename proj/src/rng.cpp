#include "qgfbsde/rng.hpp"

#include <cmath>
#include <numbers>

namespace qgfbsde {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(p >> 32);
    lo = static_cast<std::uint32_t>(p);
}

// 53-bit uniform strictly inside (0, 1)
inline double to_unit(std::uint32_t hi, std::uint32_t lo) {
    const std::uint64_t bits = ((static_cast<std::uint64_t>(hi) << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

PhiloxCounter counter_for(std::uint64_t path, std::uint32_t step, std::uint32_t slot) {
    return {step, slot, static_cast<std::uint32_t>(path), static_cast<std::uint32_t>(path >> 32)};
}

PhiloxKey key_for(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

} // namespace

PhiloxCounter philox4x32_10(PhiloxCounter ctr, PhiloxKey key) {
    for (int round = 0; round < 10; ++round) {
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
        key[0] += kWeyl0;
        key[1] += kWeyl1;
    }
    return ctr;
}

double normal_draw(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t component) {
    // one Philox block gives two Box-Muller normals: components 2j and 2j+1 share slot j
    const PhiloxCounter r = philox4x32_10(counter_for(path, step, component / 2u), key_for(seed));
    const double u1 = to_unit(r[0], r[1]);
    const double u2 = to_unit(r[2], r[3]);
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    return (component % 2u == 0u) ? radius * std::cos(angle) : radius * std::sin(angle);
}

double uniform_draw(std::uint64_t seed, std::uint64_t path, std::uint32_t step, std::uint32_t component) {
    // slot space above 2^31 is disjoint from the normal stream
    const PhiloxCounter r = philox4x32_10(counter_for(path, step, 0x80000000u | component), key_for(seed));
    return to_unit(r[0], r[1]);
}

} // namespace qgfbsde
