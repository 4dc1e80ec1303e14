#pragma once

// Uncertainty-thresholded pseudo-label generation: invalidate the delta% most
// uncertain pixels of a predicted disparity map so a downstream trainer can
// self-distill on the confident remainder.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "softdisp/errors.hpp"
#include "softdisp/uncertainty.hpp"
#include "softdisp/volume.hpp"

namespace softdisp {

struct PseudoLabel {
    DisparityMap disparity;   // 0 at invalid pixels
    ValidityMask validity;
    double delta_percent = 0.0;
    double threshold_value = 0.0;  // the realized cutoff
};

/// Threshold = the (100 - delta)-th nearest-rank percentile of the
/// uncertainty values; pixels strictly above it are invalidated and zeroed,
/// ties at the threshold stay valid. With distinct uncertainty values the
/// valid fraction lands within one pixel of 1 - delta/100; heavy ties only
/// ever keep more.
inline PseudoLabel make_pseudo_label(const DisparityMap& disp, const UncertaintyMap& unc,
                                     double delta_percent) {
    if (disp.height != unc.height || disp.width != unc.width)
        throw invalid_input_error("make_pseudo_label: shape mismatch");
    if (!(delta_percent > 0.0) || !(delta_percent < 100.0))
        throw invalid_input_error("delta must lie strictly inside (0, 100), got " +
                                  std::to_string(delta_percent));

    std::vector<double> sorted = unc.values;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t n = sorted.size();
    // nearest-rank percentile: k-th smallest with k = ceil(q/100 * n), k >= 1
    const double q = 100.0 - delta_percent;
    std::size_t k = static_cast<std::size_t>(std::ceil(q / 100.0 * static_cast<double>(n)));
    k = std::max<std::size_t>(k, 1);
    k = std::min(k, n);
    const double threshold = sorted[k - 1];

    PseudoLabel out;
    out.disparity = DisparityMap(disp.height, disp.width);
    out.validity = ValidityMask(disp.height, disp.width, true);
    out.delta_percent = delta_percent;
    out.threshold_value = threshold;
    for (int r = 0; r < disp.height; ++r) {
        for (int c = 0; c < disp.width; ++c) {
            if (unc.at(r, c) > threshold) {
                out.validity.at(r, c) = 0;
                out.disparity.at(r, c) = 0.0;
            } else {
                out.disparity.at(r, c) = disp.at(r, c);
            }
        }
    }
    return out;
}

}  // namespace softdisp
