#pragma once

// Classical cost-volume generation (SAD and census block matching) plus a
// synthetic random-dot stereogram generator. Together they provide
// ground-truthed desk-scale inputs: a clean rendering plays the labeled
// source domain, the same scene with sensor noise plays the target domain.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "softdisp/errors.hpp"
#include "softdisp/parallel.hpp"
#include "softdisp/rng.hpp"
#include "softdisp/volume.hpp"

namespace softdisp {

struct Image8 {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels;  // row-major grayscale

    Image8() = default;
    Image8(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), pixels(static_cast<std::size_t>(h) * w, fill) {
        if (h < 1 || w < 1) throw invalid_input_error("Image8 dimensions must be >= 1");
    }
    std::uint8_t& at(int r, int c) { return pixels[static_cast<std::size_t>(r) * width + c]; }
    std::uint8_t at(int r, int c) const { return pixels[static_cast<std::size_t>(r) * width + c]; }
};

/// Rectified grayscale pair: epipolar lines are horizontal, a left pixel
/// (x, y) with disparity d corresponds to right pixel (x - d, y).
struct StereoPair {
    Image8 left;
    Image8 right;
};

enum class PatternType { Constant, TiltedPlane, TwoLayer };

struct ScenePattern {
    PatternType type = PatternType::Constant;
    // Constant
    int disparity = 8;
    // TiltedPlane: round(d0 + sx*x + sy*y)
    double d0 = 4.0, sx = 0.1, sy = 0.0;
    // TwoLayer: background plane plus a raised foreground rectangle
    int background = 8, foreground = 20;
    int rect_x = 0, rect_y = 0, rect_w = 0, rect_h = 0;
};

struct SceneSpec {
    int width = 128;
    int height = 96;
    int d_max = 32;
    double noise_sigma = 0.0;  // Gaussian intensity noise on the right image
    std::uint32_t seed = 0;
    ScenePattern pattern;
};

struct Stereogram {
    StereoPair pair;
    DisparityMap gt;
    ValidityMask mask;  // false at out-of-frame and occluded pixels
};

/// Dot intensities span [0, kDotLevels). The reduced contrast keeps sigma~20
/// sensor noise comparable to the texture signal, so the noisy rendering
/// genuinely degrades matching instead of being shrugged off.
inline constexpr std::uint32_t kDotLevels = 64;

namespace detail {

inline int pattern_disparity(const ScenePattern& p, int x, int y) {
    switch (p.type) {
        case PatternType::Constant: return p.disparity;
        case PatternType::TiltedPlane:
            return static_cast<int>(std::lround(p.d0 + p.sx * x + p.sy * y));
        case PatternType::TwoLayer:
            return (x >= p.rect_x && x < p.rect_x + p.rect_w && y >= p.rect_y &&
                    y < p.rect_y + p.rect_h)
                       ? p.foreground
                       : p.background;
    }
    throw invalid_input_error("unknown scene pattern");
}

}  // namespace detail

/// Draw order (fixed so a seed pins every byte): left image row-major, then
/// newly exposed right pixels row-major, then one Gaussian per right pixel
/// row-major — the noise stage is skipped entirely when noise_sigma == 0, so
/// clean and noisy renderings of one seed share geometry and dots.
inline Stereogram generate_stereogram(const SceneSpec& spec) {
    if (spec.width < 1 || spec.height < 1)
        throw invalid_input_error("generate_stereogram: dimensions must be >= 1");
    if (spec.d_max < 1) throw invalid_input_error("generate_stereogram: d_max must be >= 1");
    if (spec.noise_sigma < 0.0)
        throw invalid_input_error("generate_stereogram: noise_sigma must be >= 0");

    Stereogram out;
    out.gt = DisparityMap(spec.height, spec.width);
    out.mask = ValidityMask(spec.height, spec.width, false);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            const int d = detail::pattern_disparity(spec.pattern, x, y);
            if (d < 0 || d > spec.d_max)
                throw invalid_input_error("pattern disparity " + std::to_string(d) +
                                          " outside [0, d_max] at (" + std::to_string(y) + ", " +
                                          std::to_string(x) + ")");
            out.gt.at(y, x) = static_cast<double>(d);
        }
    }

    PortableRng rng(spec.seed);
    out.pair.left = Image8(spec.height, spec.width);
    for (auto& px : out.pair.left.pixels) px = rng.byte(kDotLevels);

    // z-buffered warp: when several left pixels land on one right pixel the
    // nearer surface (larger disparity) wins; losers are occluded
    out.pair.right = Image8(spec.height, spec.width);
    std::vector<int> zbuf(static_cast<std::size_t>(spec.height) * spec.width, -1);
    for (int y = 0; y < spec.height; ++y) {
        for (int x = 0; x < spec.width; ++x) {
            const int d = static_cast<int>(out.gt.at(y, x));
            const int xr = x - d;
            if (xr < 0) continue;
            int& z = zbuf[static_cast<std::size_t>(y) * spec.width + xr];
            if (d > z) {
                z = d;
                out.pair.right.at(y, xr) = out.pair.left.at(y, x);
            }
        }
    }
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x) {
            const int d = static_cast<int>(out.gt.at(y, x));
            const int xr = x - d;
            out.mask.at(y, x) =
                (xr >= 0 && zbuf[static_cast<std::size_t>(y) * spec.width + xr] == d) ? 1 : 0;
        }
    // newly exposed right pixels get fresh dots
    for (int y = 0; y < spec.height; ++y)
        for (int x = 0; x < spec.width; ++x)
            if (zbuf[static_cast<std::size_t>(y) * spec.width + x] < 0)
                out.pair.right.at(y, x) = rng.byte(kDotLevels);

    if (spec.noise_sigma > 0.0) {
        for (auto& px : out.pair.right.pixels) {
            const double noisy = std::lround(px + spec.noise_sigma * rng.gaussian());
            px = static_cast<std::uint8_t>(std::clamp(noisy, 0.0, 255.0));
        }
    }
    return out;
}

/// The canonical domain-shift benchmark scene: two-layer geometry (background
/// plane at disparity 8, raised rectangle at 20) on a 128x96 frame with
/// d_max 32. noise_sigma 0 plays the clean source domain; 20 the noisy
/// target.
inline SceneSpec domain_shift_benchmark_scene(double noise_sigma, std::uint32_t seed) {
    SceneSpec spec;
    spec.width = 128;
    spec.height = 96;
    spec.d_max = 32;
    spec.noise_sigma = noise_sigma;
    spec.seed = seed;
    spec.pattern.type = PatternType::TwoLayer;
    spec.pattern.background = 8;
    spec.pattern.foreground = 20;
    spec.pattern.rect_x = 32;
    spec.pattern.rect_y = 24;
    spec.pattern.rect_w = 56;
    spec.pattern.rect_h = 48;
    return spec;
}

/// Cost assigned to hypotheses whose right-image center falls out of frame.
/// 255 exceeds any achievable SAD mean (and trivially any normalized census
/// cost); soft-argmin consumers should mask pixels where it dominates.
inline constexpr double kSentinelCost = 255.0;

namespace detail {

inline void check_matcher_args(const StereoPair& pair, int d_max, int window) {
    if (pair.left.height != pair.right.height || pair.left.width != pair.right.width)
        throw invalid_input_error("stereo pair images must share dimensions");
    if (window < 1 || window % 2 == 0)
        throw invalid_input_error("window must be odd and >= 1, got " + std::to_string(window));
    if (d_max < 1) throw invalid_input_error("d_max must be >= 1");
    if (d_max >= pair.left.width)
        throw invalid_input_error("d_max " + std::to_string(d_max) +
                                  " must be smaller than image width " +
                                  std::to_string(pair.left.width));
}

}  // namespace detail

/// C(y, x, d) = mean |left - right| over the window offsets where both
/// patches stay in frame; windows truncate at image borders. A pixel's mask
/// bit clears only if every hypothesis is the out-of-frame sentinel (which
/// cannot happen while d = 0 stays in frame; kept for contract symmetry).
inline std::pair<CostVolume, ValidityMask> sad_cost_volume(const StereoPair& pair, int d_max,
                                                           int window) {
    detail::check_matcher_args(pair, d_max, window);
    const int h = pair.left.height, w = pair.left.width, r2 = window / 2;
    CostVolume vol(h, w, d_max, kSentinelCost);
    ValidityMask mask(h, w, true);
    detail::parallel_rows(h, [&](int y) {
        const int y0 = std::max(0, y - r2), y1 = std::min(h, y + r2 + 1);
        for (int x = 0; x < w; ++x) {
            bool any_real = false;
            for (int d = 0; d <= d_max; ++d) {
                if (x - d < 0) continue;
                const int x0 = std::max(x - r2, d), x1 = std::min(w, x + r2 + 1);
                if (x0 >= x1) continue;
                double sum = 0.0;
                int count = 0;
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx) {
                        sum += std::abs(static_cast<double>(pair.left.at(yy, xx)) -
                                        static_cast<double>(pair.right.at(yy, xx - d)));
                        ++count;
                    }
                vol.at(y, x, d) = sum / count;
                any_real = true;
            }
            if (!any_real) mask.at(y, x) = 0;
        }
    });
    return {std::move(vol), std::move(mask)};
}

namespace detail {

/// Census transform: one bit per non-center window pixel, row-major offset
/// order, bit = (neighbor < center). Borders replicate (coordinates clamp).
inline std::vector<std::uint64_t> census_transform(const Image8& img, int window,
                                                   int words_per_px) {
    const int h = img.height, w = img.width, r2 = window / 2;
    std::vector<std::uint64_t> codes(
        static_cast<std::size_t>(h) * w * words_per_px, 0);
    parallel_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const std::uint8_t center = img.at(y, x);
            std::uint64_t* word =
                codes.data() + (static_cast<std::size_t>(y) * w + x) * words_per_px;
            int bit = 0;
            for (int dy = -r2; dy <= r2; ++dy) {
                for (int dx = -r2; dx <= r2; ++dx) {
                    if (dy == 0 && dx == 0) continue;
                    const int yy = std::clamp(y + dy, 0, h - 1);
                    const int xx = std::clamp(x + dx, 0, w - 1);
                    if (img.at(yy, xx) < center) word[bit / 64] |= std::uint64_t{1} << (bit % 64);
                    ++bit;
                }
            }
        }
    });
    return codes;
}

}  // namespace detail

/// Hamming distance between census codes, normalized by the code length
/// (window^2 - 1 bits) into [0, 1]. Invariant to monotone intensity shifts,
/// unlike SAD.
inline std::pair<CostVolume, ValidityMask> census_cost_volume(const StereoPair& pair, int d_max,
                                                              int window) {
    detail::check_matcher_args(pair, d_max, window);
    if (window < 3)
        throw invalid_input_error("census window must be >= 3 (a 1x1 window has no code bits)");
    const int h = pair.left.height, w = pair.left.width;
    const int bits = window * window - 1;
    const int words = (bits + 63) / 64;
    const auto left_codes = detail::census_transform(pair.left, window, words);
    const auto right_codes = detail::census_transform(pair.right, window, words);

    CostVolume vol(h, w, d_max, kSentinelCost);
    ValidityMask mask(h, w, true);
    detail::parallel_rows(h, [&](int y) {
        for (int x = 0; x < w; ++x) {
            const std::uint64_t* lc =
                left_codes.data() + (static_cast<std::size_t>(y) * w + x) * words;
            for (int d = 0; d <= d_max; ++d) {
                if (x - d < 0) continue;
                const std::uint64_t* rc =
                    right_codes.data() + (static_cast<std::size_t>(y) * w + (x - d)) * words;
                int ham = 0;
                for (int k = 0; k < words; ++k) ham += std::popcount(lc[k] ^ rc[k]);
                vol.at(y, x, d) = static_cast<double>(ham) / bits;
            }
        }
    });
    return {std::move(vol), std::move(mask)};
}

}  // namespace softdisp
