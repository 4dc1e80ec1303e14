#pragma once

// The three distribution-sharpness measures (MSM, Entropy, PER) as per-pixel
// maps and as masked-mean scalar losses.
//
// Entropy uses the natural logarithm throughout; its range is
// [0, ln(d_max + 1)]. Base e is a toolkit convention — callers comparing
// against bit-based entropies must convert.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "softdisp/errors.hpp"
#include "softdisp/parallel.hpp"
#include "softdisp/volume.hpp"

namespace softdisp {

enum class MetricKind { MSM, Entropy, PER };

inline const char* metric_name(MetricKind kind) {
    switch (kind) {
        case MetricKind::MSM: return "msm";
        case MetricKind::Entropy: return "entropy";
        case MetricKind::PER: return "per";
    }
    return "?";
}

struct UncertaintyMetric {
    MetricKind kind = MetricKind::Entropy;
    double per_s = 0.5;  // Gaussian kernel scale, PER only; probability units

    UncertaintyMetric() = default;
    UncertaintyMetric(MetricKind k, double s = 0.5) : kind(k), per_s(s) {
        if (!(s > 0.0))
            throw invalid_input_error("PER scale s must be > 0, got " + std::to_string(s));
    }
};

/// Loss weight defaults: 1.0 for PER, 0.5 for MSM, 0.125 for Entropy.
inline double default_lambda(MetricKind kind) {
    switch (kind) {
        case MetricKind::PER: return 1.0;
        case MetricKind::MSM: return 0.5;
        case MetricKind::Entropy: return 0.125;
    }
    return 1.0;
}

struct UncertaintyMap {
    int height = 0;
    int width = 0;
    std::vector<double> values;
    UncertaintyMetric metric;

    UncertaintyMap() = default;
    UncertaintyMap(int h, int w, UncertaintyMetric m)
        : height(h), width(w), values(static_cast<std::size_t>(h) * w, 0.0), metric(m) {
        if (h < 1 || w < 1) throw invalid_input_error("UncertaintyMap dimensions must be >= 1");
    }

    double& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
};

// ---------------------------------------------------------------------------
// Per-pixel kernels.

/// 1 - p(i1), i1 = argmax (ties -> lowest index). Local measure, in [0, 1).
inline double msm_row(std::span<const double> probs) {
    return 1.0 - probs[argmax_row(probs)];
}

/// -sum p ln p with 0 ln 0 := 0. Global measure, in [0, ln n].
inline double entropy_row(std::span<const double> probs) {
    double h = 0.0;
    for (double p : probs)
        if (p > 0.0) h -= p * std::log(p);
    return h;
}

/// (1/M) sum_{i != i1} exp(-(p(i1) - p(i))^2 / s^2) with M = n - 1, the
/// hypothesis count excluding the argmax. Global measure, in (0, 1].
inline double per_row(std::span<const double> probs, double s) {
    const std::size_t n = probs.size();
    if (n < 2)
        throw degenerate_input_error("PER needs at least two hypotheses (M would be 0)");
    const int i1 = argmax_row(probs);
    const double p1 = probs[i1];
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (static_cast<int>(i) == i1) continue;
        const double d = p1 - probs[i];
        sum += std::exp(-(d * d) / (s * s));
    }
    return sum / static_cast<double>(n - 1);
}

inline double uncertainty_row(std::span<const double> probs, const UncertaintyMetric& metric) {
    switch (metric.kind) {
        case MetricKind::MSM: return msm_row(probs);
        case MetricKind::Entropy: return entropy_row(probs);
        case MetricKind::PER: return per_row(probs, metric.per_s);
    }
    throw invalid_input_error("unknown uncertainty metric");
}

// ---------------------------------------------------------------------------
// Map-level operations.

namespace detail {
template <class RowFn>
UncertaintyMap uncertainty_map_impl(const ProbabilityVolume& probs, UncertaintyMetric metric,
                                    RowFn&& fn) {
    probs.check_shape();
    UncertaintyMap out(probs.height, probs.width, metric);
    parallel_rows(probs.height, [&](int r) {
        for (int c = 0; c < probs.width; ++c) out.at(r, c) = fn(probs.pixel(r, c));
    });
    return out;
}
}  // namespace detail

inline UncertaintyMap msm(const ProbabilityVolume& probs) {
    return detail::uncertainty_map_impl(probs, UncertaintyMetric(MetricKind::MSM),
                                        [](auto px) { return msm_row(px); });
}

inline UncertaintyMap entropy(const ProbabilityVolume& probs) {
    return detail::uncertainty_map_impl(probs, UncertaintyMetric(MetricKind::Entropy),
                                        [](auto px) { return entropy_row(px); });
}

inline UncertaintyMap per(const ProbabilityVolume& probs, double s) {
    UncertaintyMetric metric(MetricKind::PER, s);
    if (probs.d_max < 1)
        throw degenerate_input_error("PER is undefined for a single-hypothesis volume");
    return detail::uncertainty_map_impl(probs, metric,
                                        [s](auto px) { return per_row(px, s); });
}

/// Dispatch on metric.kind; PER takes its scale from metric.per_s.
inline UncertaintyMap uncertainty_map(const ProbabilityVolume& probs,
                                      const UncertaintyMetric& metric) {
    switch (metric.kind) {
        case MetricKind::MSM: return msm(probs);
        case MetricKind::Entropy: return entropy(probs);
        case MetricKind::PER: return per(probs, metric.per_s);
    }
    throw invalid_input_error("unknown uncertainty metric");
}

/// Mean of the uncertainty map over valid pixels. For target-domain use the
/// mask is all-true: no ground truth exists there.
inline double uncertainty_loss(const ProbabilityVolume& probs, const UncertaintyMetric& metric,
                               const ValidityMask& mask) {
    if (mask.height != probs.height || mask.width != probs.width)
        throw invalid_input_error("uncertainty_loss: mask shape does not match volume");
    const long long n = mask.count();
    if (n == 0) throw degenerate_input_error("uncertainty_loss: mask has no valid pixels");
    UncertaintyMap map = uncertainty_map(probs, metric);
    double sum = 0.0;
    for (int r = 0; r < map.height; ++r)
        for (int c = 0; c < map.width; ++c)
            if (mask.at(r, c)) sum += map.at(r, c);
    return sum / static_cast<double>(n);
}

/// Normalizes a map to 8-bit grayscale for export: white = high uncertainty.
/// A constant map renders as black.
inline std::vector<std::uint8_t> to_gray8(const UncertaintyMap& map) {
    double lo = map.values.empty() ? 0.0 : map.values[0];
    double hi = lo;
    for (double v : map.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    std::vector<std::uint8_t> out(map.values.size(), 0);
    const double range = hi - lo;
    if (range > 0.0)
        for (std::size_t i = 0; i < out.size(); ++i)
            out[i] = static_cast<std::uint8_t>(
                std::lround(255.0 * (map.values[i] - lo) / range));
    return out;
}

}  // namespace softdisp
