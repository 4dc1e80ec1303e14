#pragma once

// Portable seedable RNG for benchmark synthesis.
//
// The generator is the 32-bit Mersenne Twister exactly as specified by the
// C++ standard (std::mt19937), so any implementation of mt19937 reproduces
// the raw draw sequence bit for bit. Derived values avoid std::*_distribution
// (which varies across standard libraries):
//   - byte(levels): raw_u32() % levels; benchmark levels divide 2^32, so the
//     modulo carries no bias.
//   - gaussian(): Box-Muller on u = (raw_u32() + 0.5) / 2^32,
//     z = sqrt(-2 ln u1) * cos(2 pi u2), two draws per value, no caching.

#include <cmath>
#include <cstdint>
#include <random>

namespace softdisp {

class PortableRng {
public:
    explicit PortableRng(std::uint32_t seed) : gen_(seed) {}

    std::uint32_t raw_u32() { return gen_(); }

    std::uint8_t byte(std::uint32_t levels) {
        return static_cast<std::uint8_t>(raw_u32() % levels);
    }

    double gaussian() {
        const double u1 = (static_cast<double>(raw_u32()) + 0.5) * kInv2p32;
        const double u2 = (static_cast<double>(raw_u32()) + 0.5) * kInv2p32;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
    }

private:
    static constexpr double kInv2p32 = 1.0 / 4294967296.0;
    static constexpr double kPi = 3.14159265358979323846;
    std::mt19937 gen_;
};

}  // namespace softdisp
