#pragma once

// Disparity error metrics and the ROC sparsification curve.
//
// D1_all follows the KITTI 2015 convention: a pixel is an outlier when its
// error exceeds both 3 px and 5% of ground truth. bad-1.0 follows the ETH3D
// 1 px convention.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "softdisp/errors.hpp"
#include "softdisp/uncertainty.hpp"
#include "softdisp/volume.hpp"

namespace softdisp {

struct ErrorStats {
    double d1_all = 0.0;  // percent
    double bad_1 = 0.0;   // percent
    double epe = 0.0;     // mean absolute error, pixels
    long long n_valid = 0;
};

inline ErrorStats error_stats(const DisparityMap& pred, const DisparityMap& gt,
                              const ValidityMask& mask) {
    if (pred.height != gt.height || pred.width != gt.width || mask.height != pred.height ||
        mask.width != pred.width)
        throw invalid_input_error("error_stats: shape mismatch");
    ErrorStats out;
    double err_sum = 0.0;
    long long outliers = 0, bad = 0;
    for (int r = 0; r < pred.height; ++r) {
        for (int c = 0; c < pred.width; ++c) {
            if (!mask.at(r, c)) continue;
            ++out.n_valid;
            const double e = std::abs(pred.at(r, c) - gt.at(r, c));
            err_sum += e;
            if (e > 3.0 && e > 0.05 * gt.at(r, c)) ++outliers;
            if (e > 1.0) ++bad;
        }
    }
    if (out.n_valid == 0) throw degenerate_input_error("error_stats: mask has no valid pixels");
    out.d1_all = 100.0 * static_cast<double>(outliers) / static_cast<double>(out.n_valid);
    out.bad_1 = 100.0 * static_cast<double>(bad) / static_cast<double>(out.n_valid);
    out.epe = err_sum / static_cast<double>(out.n_valid);
    return out;
}

struct RocPoint {
    double density = 0.0;  // fraction of valid pixels retained
    double d1_all = 0.0;   // percent, over the retained set (0 for the empty set)
};

struct RocCurve {
    std::vector<RocPoint> points;  // densities descending from 1.0
};

/// Sorts valid pixels by decreasing uncertainty (ties broken by row-major
/// pixel index, so curves are bit-for-bit reproducible), then repeatedly
/// drops the most uncertain step-fraction. Retained counts are
/// N - floor(k * step * N), which stays within one pixel of the exact
/// fraction and removes the rounding remainder at the last level.
inline RocCurve roc_sparsification(const DisparityMap& pred, const DisparityMap& gt,
                                   const ValidityMask& mask, const UncertaintyMap& unc,
                                   double step = 0.05) {
    if (pred.height != unc.height || pred.width != unc.width)
        throw invalid_input_error("roc_sparsification: uncertainty shape mismatch");
    if (!(step > 0.0) || step > 0.5)
        throw invalid_input_error("roc_sparsification: step must lie in (0, 0.5]");

    struct Entry {
        double unc;
        double err;
        double gt;
    };
    std::vector<Entry> entries;
    for (int r = 0; r < pred.height; ++r)
        for (int c = 0; c < pred.width; ++c)
            if (mask.at(r, c))
                entries.push_back({unc.at(r, c), std::abs(pred.at(r, c) - gt.at(r, c)),
                                   gt.at(r, c)});
    const std::size_t n = entries.size();
    if (n == 0) throw degenerate_input_error("roc_sparsification: mask has no valid pixels");

    // descending uncertainty; stable sort keeps row-major pixel order on ties,
    // so tied pixels leave in ascending-index order
    std::stable_sort(entries.begin(), entries.end(),
                     [](const Entry& a, const Entry& b) { return a.unc > b.unc; });

    // outlier counts over suffixes of the removal order (the retained sets)
    std::vector<long long> outlier_suffix(n + 1, 0);
    for (std::size_t i = n; i-- > 0;)
        outlier_suffix[i] = outlier_suffix[i + 1] +
                            ((entries[i].err > 3.0 && entries[i].err > 0.05 * entries[i].gt) ? 1
                                                                                             : 0);

    RocCurve curve;
    for (int k = 0;; ++k) {
        const double removed_frac = std::min(1.0, k * step);
        const auto removed = static_cast<std::size_t>(
            std::floor(removed_frac * static_cast<double>(n)));
        const std::size_t kept = n - removed;
        RocPoint pt;
        pt.density = 1.0 - removed_frac;
        pt.d1_all = kept == 0 ? 0.0
                              : 100.0 * static_cast<double>(outlier_suffix[removed]) /
                                    static_cast<double>(kept);
        curve.points.push_back(pt);
        if (removed_frac >= 1.0) break;
    }
    return curve;
}

}  // namespace softdisp
