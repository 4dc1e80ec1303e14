#pragma once

// Cost/probability volumes, disparity maps, and the softmax / soft-argmin
// readout family. All math runs in 64-bit floating point; every operation is
// a pure function over immutable inputs and may be row-partitioned freely.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "softdisp/errors.hpp"
#include "softdisp/parallel.hpp"

namespace softdisp {

/// Softmax sharpening factor. t = 1 is the plain softmax; larger t peaks the
/// distribution. Stored cost scale and t multiply inside the exponent, so they
/// are interchangeable knobs; this toolkit keeps costs in raw matcher units
/// and treats t as the single sharpness control.
struct Temperature {
    double value;
    explicit Temperature(double v) : value(v) {
        if (!(v > 0.0))
            throw invalid_input_error("Temperature must be > 0, got " + std::to_string(v));
    }
};

struct ValidityMask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> valid;  // row-major, nonzero = valid

    ValidityMask() = default;
    ValidityMask(int h, int w, bool initial = true)
        : height(h), width(w), valid(static_cast<std::size_t>(h) * w, initial ? 1 : 0) {
        if (h < 1 || w < 1) throw invalid_input_error("ValidityMask dimensions must be >= 1");
    }

    std::uint8_t& at(int r, int c) { return valid[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t at(int r, int c) const { return valid[static_cast<std::size_t>(r) * width + c]; }

    /// Number of valid pixels; the divisor of every masked mean.
    long long count() const {
        long long n = 0;
        for (auto v : valid) n += (v != 0);
        return n;
    }
};

struct DisparityMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;  // row-major, pixels

    DisparityMap() = default;
    DisparityMap(int h, int w, double fill = 0.0)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, fill) {
        if (h < 1 || w < 1) throw invalid_input_error("DisparityMap dimensions must be >= 1");
    }

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
};

/// Per-pixel matching cost over disparity hypotheses 0..d_max inclusive.
struct CostVolume {
    int height = 0;
    int width = 0;
    int d_max = 0;
    std::vector<double> costs;  // row-major (row, col, disparity index)

    CostVolume() = default;
    CostVolume(int h, int w, int dmax, double fill = 0.0)
        : height(h), width(w), d_max(dmax),
          costs(static_cast<std::size_t>(h) * w * (dmax + 1), fill) {
        if (h < 1 || w < 1) throw invalid_input_error("CostVolume dimensions must be >= 1");
        if (dmax < 1) throw invalid_input_error("CostVolume d_max must be >= 1");
    }

    int hypotheses() const { return d_max + 1; }

    double& at(int r, int c, int i) {
        return costs[(static_cast<std::size_t>(r) * width + c) * hypotheses() + i];
    }
    double at(int r, int c, int i) const {
        return costs[(static_cast<std::size_t>(r) * width + c) * hypotheses() + i];
    }
    std::span<double> pixel(int r, int c) {
        return {costs.data() + (static_cast<std::size_t>(r) * width + c) * hypotheses(),
                static_cast<std::size_t>(hypotheses())};
    }
    std::span<const double> pixel(int r, int c) const {
        return {costs.data() + (static_cast<std::size_t>(r) * width + c) * hypotheses(),
                static_cast<std::size_t>(hypotheses())};
    }

    void check_shape() const {
        if (costs.size() != static_cast<std::size_t>(height) * width * hypotheses())
            throw invalid_input_error("CostVolume storage does not match declared dimensions");
    }
};

/// softmax(-t*C) per pixel: non-negative, sums to 1 over hypotheses.
struct ProbabilityVolume {
    int height = 0;
    int width = 0;
    int d_max = 0;
    std::vector<double> probs;

    ProbabilityVolume() = default;
    ProbabilityVolume(int h, int w, int dmax)
        : height(h), width(w), d_max(dmax),
          probs(static_cast<std::size_t>(h) * w * (dmax + 1), 0.0) {
        if (h < 1 || w < 1) throw invalid_input_error("ProbabilityVolume dimensions must be >= 1");
        if (dmax < 1) throw invalid_input_error("ProbabilityVolume d_max must be >= 1");
    }

    int hypotheses() const { return d_max + 1; }

    double& at(int r, int c, int i) {
        return probs[(static_cast<std::size_t>(r) * width + c) * hypotheses() + i];
    }
    double at(int r, int c, int i) const {
        return probs[(static_cast<std::size_t>(r) * width + c) * hypotheses() + i];
    }
    std::span<double> pixel(int r, int c) {
        return {probs.data() + (static_cast<std::size_t>(r) * width + c) * hypotheses(),
                static_cast<std::size_t>(hypotheses())};
    }
    std::span<const double> pixel(int r, int c) const {
        return {probs.data() + (static_cast<std::size_t>(r) * width + c) * hypotheses(),
                static_cast<std::size_t>(hypotheses())};
    }

    void check_shape() const {
        if (probs.size() != static_cast<std::size_t>(height) * width * hypotheses())
            throw invalid_input_error("ProbabilityVolume storage does not match declared dimensions");
    }
};

// ---------------------------------------------------------------------------
// Per-pixel kernels. These are the single-vector building blocks the volume
// ops and the gradient-flow simulator share.

/// p(i) = exp(-t*c(i)) / sum_j exp(-t*c(j)), computed with per-vector max
/// subtraction of the exponent so large cost ranges cannot overflow.
inline void anisotropic_softmax_row(std::span<const double> costs, double t,
                                    std::span<double> probs_out) {
    const std::size_t n = costs.size();
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) zmax = std::max(zmax, -t * costs[i]);
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        probs_out[i] = std::exp(-t * costs[i] - zmax);
        sum += probs_out[i];
    }
    for (std::size_t i = 0; i < n; ++i) probs_out[i] /= sum;
}

/// Expected disparity index under p.
inline double soft_argmin_row(std::span<const double> probs) {
    double d = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) d += static_cast<double>(i) * probs[i];
    return d;
}

/// Smallest index attaining the minimum cost (ties -> lowest index).
inline int hard_argmin_row(std::span<const double> costs) {
    int best = 0;
    for (std::size_t i = 1; i < costs.size(); ++i)
        if (costs[i] < costs[best]) best = static_cast<int>(i);
    return best;
}

/// Smallest index attaining the maximum value (ties -> lowest index).
inline int argmax_row(std::span<const double> values) {
    int best = 0;
    for (std::size_t i = 1; i < values.size(); ++i)
        if (values[i] > values[best]) best = static_cast<int>(i);
    return best;
}

/// Jacobian of the anisotropic softmax at probability vector p:
///   d p(i) / d C(j) = t * p(i) * (p(j) - delta_ij).
/// At t = 1 this is the plain softmax Jacobian; the anisotropic version is
/// exactly t times that formula evaluated at the same probability vector.
inline std::vector<double> softmax_jacobian_row(std::span<const double> probs, double t) {
    const std::size_t n = probs.size();
    std::vector<double> jac(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            jac[i * n + j] = t * probs[i] * (probs[j] - (i == j ? 1.0 : 0.0));
    return jac;
}

// ---------------------------------------------------------------------------
// Volume-level operations.

inline ProbabilityVolume anisotropic_softmax(const CostVolume& volume, Temperature t) {
    volume.check_shape();
    for (int r = 0; r < volume.height; ++r)
        for (int c = 0; c < volume.width; ++c)
            for (int i = 0; i <= volume.d_max; ++i)
                if (!std::isfinite(volume.at(r, c, i)))
                    throw invalid_input_error("non-finite cost at pixel (" + std::to_string(r) +
                                              ", " + std::to_string(c) + "), disparity index " +
                                              std::to_string(i));
    ProbabilityVolume out(volume.height, volume.width, volume.d_max);
    detail::parallel_rows(volume.height, [&](int r) {
        for (int c = 0; c < volume.width; ++c)
            anisotropic_softmax_row(volume.pixel(r, c), t.value, out.pixel(r, c));
    });
    return out;
}

inline DisparityMap soft_argmin(const ProbabilityVolume& probs) {
    probs.check_shape();
    DisparityMap out(probs.height, probs.width);
    detail::parallel_rows(probs.height, [&](int r) {
        for (int c = 0; c < probs.width; ++c) out.at(r, c) = soft_argmin_row(probs.pixel(r, c));
    });
    return out;
}

inline DisparityMap hard_argmin(const CostVolume& volume) {
    volume.check_shape();
    DisparityMap out(volume.height, volume.width);
    detail::parallel_rows(volume.height, [&](int r) {
        for (int c = 0; c < volume.width; ++c)
            out.at(r, c) = static_cast<double>(hard_argmin_row(volume.pixel(r, c)));
    });
    return out;
}

/// Fused anisotropic softmax + soft argmin.
inline std::pair<ProbabilityVolume, DisparityMap> readout(const CostVolume& volume, Temperature t) {
    ProbabilityVolume probs = anisotropic_softmax(volume, t);
    DisparityMap disp = soft_argmin(probs);
    return {std::move(probs), std::move(disp)};
}

/// Subtracts each pixel's minimum cost from its hypotheses, leaving every
/// softmax readout unchanged (shift invariance). Useful only to put stored
/// costs on a canonical per-pixel scale; it does not decouple cost scale
/// from temperature — multiplying costs by k and dividing t by k is a no-op,
/// so the two must be documented together.
inline CostVolume shift_costs_to_zero_min(const CostVolume& volume) {
    volume.check_shape();
    CostVolume out = volume;
    detail::parallel_rows(volume.height, [&](int r) {
        for (int c = 0; c < volume.width; ++c) {
            auto px = out.pixel(r, c);
            double mn = *std::min_element(px.begin(), px.end());
            for (auto& v : px) v -= mn;
        }
    });
    return out;
}

}  // namespace softdisp
