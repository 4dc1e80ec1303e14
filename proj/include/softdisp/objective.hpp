#pragma once

// Smooth-L1 and uncertainty losses over cost volumes, their closed-form
// gradients with respect to the costs, and a central finite-difference
// verification harness.
//
// All gradients factor through the anisotropic-softmax Jacobian
//   d p(i) / d C(j) = t * p(i) * (p(j) - delta_ij),
// which is exactly t times the plain softmax Jacobian formula evaluated at
// the same probability vector. Given g = dU/dp, the chain collapses to
//   dU/dC(j) = t * p(j) * (<g, p> - g(j)).

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "softdisp/errors.hpp"
#include "softdisp/uncertainty.hpp"
#include "softdisp/volume.hpp"

namespace softdisp {

struct LossConfig {
    Temperature t{16.0};
    double lambda = 1.0;  // weight of the uncertainty term; >= 0
    UncertaintyMetric metric;

    LossConfig(Temperature temp, double lam, UncertaintyMetric m)
        : t(temp), lambda(lam), metric(m) {
        if (lambda < 0.0)
            throw invalid_input_error("lambda must be >= 0, got " + std::to_string(lambda));
    }
    static LossConfig with_default_lambda(Temperature temp, UncertaintyMetric m) {
        return LossConfig(temp, default_lambda(m.kind), m);
    }
};

/// Entries are dL/dC(row, col, i).
struct GradientVolume {
    int height = 0;
    int width = 0;
    int d_max = 0;
    std::vector<double> values;

    GradientVolume() = default;
    GradientVolume(int h, int w, int dmax)
        : height(h), width(w), d_max(dmax),
          values(static_cast<std::size_t>(h) * w * (dmax + 1), 0.0) {}

    int hypotheses() const { return d_max + 1; }
    double& at(int r, int c, int i) {
        return values[(static_cast<std::size_t>(r) * width + c) * hypotheses() + i];
    }
    double at(int r, int c, int i) const {
        return values[(static_cast<std::size_t>(r) * width + c) * hypotheses() + i];
    }
    std::span<double> pixel(int r, int c) {
        return {values.data() + (static_cast<std::size_t>(r) * width + c) * hypotheses(),
                static_cast<std::size_t>(hypotheses())};
    }
};

// ---------------------------------------------------------------------------
// Smooth L1.

/// 0.5 x^2 for |x| < 1, |x| - 0.5 otherwise. Continuous at |x| = 1.
inline double smooth_l1_rho(double x) {
    const double a = std::abs(x);
    return a < 1.0 ? 0.5 * x * x : a - 0.5;
}

/// Derivative of rho; the |x| = 1 kink takes the clamp value +-1.
inline double smooth_l1_rho_prime(double x) {
    return std::clamp(x, -1.0, 1.0);
}

inline double smooth_l1(const DisparityMap& pred, const DisparityMap& gt,
                        const ValidityMask& mask) {
    if (pred.height != gt.height || pred.width != gt.width || pred.height != mask.height ||
        pred.width != mask.width)
        throw invalid_input_error("smooth_l1: shape mismatch");
    const long long n = mask.count();
    if (n == 0) throw degenerate_input_error("smooth_l1: mask has no valid pixels");
    double sum = 0.0;
    for (int r = 0; r < pred.height; ++r)
        for (int c = 0; c < pred.width; ++c)
            if (mask.at(r, c)) sum += smooth_l1_rho(gt.at(r, c) - pred.at(r, c));
    return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Per-pixel gradient kernels (loss normalizer 1/N applied by volume wrappers).

/// d rho(soft_argmin(p') - gt) / d C(j) = rho'(d - gt) * t * p'(j) * (d - j).
inline void grad_smooth_l1_row(std::span<const double> costs, double gt, double t,
                               std::span<double> grad_out) {
    const std::size_t n = costs.size();
    std::vector<double> p(n);
    anisotropic_softmax_row(costs, t, p);
    const double d = soft_argmin_row(p);
    const double rp = smooth_l1_rho_prime(d - gt);
    for (std::size_t j = 0; j < n; ++j)
        grad_out[j] = rp * t * p[j] * (d - static_cast<double>(j));
}

/// d U(p'(C)) / d C for one pixel. The argmax index i1 used by MSM and PER is
/// held fixed (it is piecewise constant in C); this is a subgradient choice at
/// tie points and the exact derivative elsewhere.
inline void grad_uncertainty_row(std::span<const double> costs, const UncertaintyMetric& metric,
                                 double t, std::span<double> grad_out) {
    const std::size_t n = costs.size();
    std::vector<double> p(n);
    anisotropic_softmax_row(costs, t, p);
    switch (metric.kind) {
        case MetricKind::Entropy: {
            // t * p(j) * (H + ln p(j)); p(j) = 0 contributes 0 by continuity.
            const double h = entropy_row(p);
            for (std::size_t j = 0; j < n; ++j)
                grad_out[j] = p[j] > 0.0 ? t * p[j] * (h + std::log(p[j])) : 0.0;
            return;
        }
        case MetricKind::MSM: {
            const int i1 = argmax_row(p);
            const double p1 = p[i1];
            for (std::size_t j = 0; j < n; ++j)
                grad_out[j] = t * p[j] * ((static_cast<int>(j) == i1 ? 1.0 : 0.0) - p1);
            return;
        }
        case MetricKind::PER: {
            const double s2 = metric.per_s * metric.per_s;
            const double m = static_cast<double>(n - 1);
            const int i1 = argmax_row(p);
            // g = dU/dp with i1 detached; then chain through the Jacobian.
            std::vector<double> g(n, 0.0);
            double g1 = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (static_cast<int>(i) == i1) continue;
                const double delta = p[i1] - p[i];
                const double term = 2.0 * delta / (m * s2) * std::exp(-delta * delta / s2);
                g[i] = term;
                g1 -= term;
            }
            g[i1] = g1;
            double gp = 0.0;
            for (std::size_t i = 0; i < n; ++i) gp += g[i] * p[i];
            for (std::size_t j = 0; j < n; ++j) grad_out[j] = t * p[j] * (gp - g[j]);
            return;
        }
    }
    throw invalid_input_error("unknown uncertainty metric");
}

// ---------------------------------------------------------------------------
// Volume-level losses and gradients.

/// Smooth-L1 of the anisotropic readout against ground truth, masked mean.
inline double smooth_l1_loss_on_volume(const CostVolume& cost, const DisparityMap& gt,
                                       const ValidityMask& mask, Temperature t) {
    auto [probs, disp] = readout(cost, t);
    return smooth_l1(disp, gt, mask);
}

/// Gradient of smooth_l1_loss_on_volume with respect to every cost entry.
/// Invalid pixels get zero gradient.
inline GradientVolume grad_smooth_l1_wrt_cost(const CostVolume& cost, const DisparityMap& gt,
                                              const ValidityMask& mask, Temperature t) {
    cost.check_shape();
    if (gt.height != cost.height || gt.width != cost.width || mask.height != cost.height ||
        mask.width != cost.width)
        throw invalid_input_error("grad_smooth_l1_wrt_cost: shape mismatch");
    const long long n = mask.count();
    if (n == 0) throw degenerate_input_error("grad_smooth_l1_wrt_cost: empty mask");
    GradientVolume out(cost.height, cost.width, cost.d_max);
    const double inv_n = 1.0 / static_cast<double>(n);
    detail::parallel_rows(cost.height, [&](int r) {
        for (int c = 0; c < cost.width; ++c) {
            if (!mask.at(r, c)) continue;
            auto g = out.pixel(r, c);
            grad_smooth_l1_row(cost.pixel(r, c), gt.at(r, c), t.value, g);
            for (auto& v : g) v *= inv_n;
        }
    });
    return out;
}

/// Gradient of uncertainty_loss (mean over all pixels, Eq-9-style all-true
/// mask) with respect to every cost entry.
inline GradientVolume grad_uncertainty_wrt_cost(const CostVolume& cost,
                                                const UncertaintyMetric& metric, Temperature t) {
    cost.check_shape();
    GradientVolume out(cost.height, cost.width, cost.d_max);
    const double inv_n = 1.0 / (static_cast<double>(cost.height) * cost.width);
    detail::parallel_rows(cost.height, [&](int r) {
        for (int c = 0; c < cost.width; ++c) {
            auto g = out.pixel(r, c);
            grad_uncertainty_row(cost.pixel(r, c), metric, t.value, g);
            for (auto& v : g) v *= inv_n;
        }
    });
    return out;
}

struct CombinedLoss {
    double total = 0.0;
    double source = 0.0;  // smooth L1 via anisotropic readout on source
    double target = 0.0;  // mean uncertainty over all target pixels
};

/// total = source + lambda * target. The target mask is all-true: the target
/// domain has no ground truth.
inline CombinedLoss combined_loss(const CostVolume& source_cost, const DisparityMap& source_gt,
                                  const ValidityMask& source_mask, const CostVolume& target_cost,
                                  const LossConfig& cfg) {
    CombinedLoss out;
    out.source = smooth_l1_loss_on_volume(source_cost, source_gt, source_mask, cfg.t);
    ValidityMask all(target_cost.height, target_cost.width, true);
    ProbabilityVolume target_probs = anisotropic_softmax(target_cost, cfg.t);
    out.target = uncertainty_loss(target_probs, cfg.metric, all);
    out.total = out.source + cfg.lambda * out.target;
    return out;
}

// ---------------------------------------------------------------------------
// Finite-difference harness.

struct FdReport {
    /// largest per-entry |analytic - numeric|, with its location below
    double max_abs_err = 0.0;
    /// max_abs_err relative to the gradient scale max(||a||_inf, ||fd||_inf);
    /// 0 when both sides vanish. Entry-wise ratios are meaningless here:
    /// sharp softmaxes legitimately push single entries below the finite-
    /// difference noise floor.
    double max_rel_err = 0.0;
    int argmax_row = 0;
    int argmax_col = 0;
    int argmax_index = 0;
};

/// Compares an analytic gradient against central differences
/// (L(C + h e) - L(C - h e)) / 2h for every cost entry.
inline FdReport finite_difference_check(const CostVolume& cost,
                                        const std::function<double(const CostVolume&)>& loss_fn,
                                        const GradientVolume& analytic, double h) {
    if (!(h > 0.0)) throw invalid_input_error("finite_difference_check: h must be > 0");
    cost.check_shape();
    FdReport rep;
    CostVolume work = cost;
    double scale = 0.0;
    for (int r = 0; r < cost.height; ++r) {
        for (int c = 0; c < cost.width; ++c) {
            for (int i = 0; i <= cost.d_max; ++i) {
                const double saved = work.at(r, c, i);
                work.at(r, c, i) = saved + h;
                const double lp = loss_fn(work);
                work.at(r, c, i) = saved - h;
                const double lm = loss_fn(work);
                work.at(r, c, i) = saved;
                const double fd = (lp - lm) / (2.0 * h);
                const double a = analytic.at(r, c, i);
                const double d = std::abs(a - fd);
                scale = std::max({scale, std::abs(a), std::abs(fd)});
                if (d > rep.max_abs_err) {
                    rep.max_abs_err = d;
                    rep.argmax_row = r;
                    rep.argmax_col = c;
                    rep.argmax_index = i;
                }
            }
        }
    }
    rep.max_rel_err = scale > 0.0 ? rep.max_abs_err / scale : 0.0;
    return rep;
}

enum class LossId { SmoothL1, Uncertainty, Combined };

struct FdParams {
    Temperature t{16.0};
    UncertaintyMetric metric;
    double lambda = 1.0;
    const DisparityMap* gt = nullptr;      // SmoothL1 / Combined
    const ValidityMask* mask = nullptr;    // SmoothL1 / Combined
};

namespace detail {

/// Sample-point guards: central differences are only trusted away from the
/// smooth-L1 kink (|d - gt| near 1) and away from argmax ties (margin must
/// exceed 10h so the detached index cannot flip under the probe).
inline void check_fd_guards(const CostVolume& cost, LossId id, const FdParams& params, double h) {
    ProbabilityVolume probs = anisotropic_softmax(cost, params.t);
    for (int r = 0; r < cost.height; ++r) {
        for (int c = 0; c < cost.width; ++c) {
            auto px = probs.pixel(r, c);
            if (id != LossId::Uncertainty && params.gt && params.mask && params.mask->at(r, c)) {
                const double d = soft_argmin_row(px);
                if (std::abs(std::abs(d - params.gt->at(r, c)) - 1.0) < 1e-3)
                    throw resample_error("sample sits near the smooth-L1 kink at pixel (" +
                                         std::to_string(r) + ", " + std::to_string(c) + ")");
            }
            if (id != LossId::SmoothL1 && params.metric.kind != MetricKind::Entropy) {
                const int i1 = argmax_row(px);
                double second = -1.0;
                for (int i = 0; i <= cost.d_max; ++i)
                    if (i != i1) second = std::max(second, px[i]);
                // Margin in cost units bounds how far the probe can move p.
                double cost_margin = std::numeric_limits<double>::infinity();
                const double cmin = cost.pixel(r, c)[static_cast<std::size_t>(
                    hard_argmin_row(cost.pixel(r, c)))];
                for (int i = 0; i <= cost.d_max; ++i) {
                    const double gap = cost.at(r, c, i) - cmin;
                    if (gap > 0.0) cost_margin = std::min(cost_margin, gap);
                }
                if (px[i1] - second < 1e-9 || cost_margin <= 10.0 * h)
                    throw resample_error("argmax margin too small at pixel (" + std::to_string(r) +
                                         ", " + std::to_string(c) + ")");
            }
        }
    }
}

}  // namespace detail

/// Builds the named loss, checks the sample-point guards, and runs the
/// central-difference comparison against the matching analytic gradient.
inline FdReport finite_difference_check(const CostVolume& cost, LossId id, const FdParams& params,
                                        double h) {
    detail::check_fd_guards(cost, id, params, h);

    auto uncertainty_part = [&params](const CostVolume& c) {
        ProbabilityVolume p = anisotropic_softmax(c, params.t);
        ValidityMask all(c.height, c.width, true);
        return uncertainty_loss(p, params.metric, all);
    };
    std::function<double(const CostVolume&)> loss_fn;
    GradientVolume analytic;
    switch (id) {
        case LossId::SmoothL1:
            if (!params.gt || !params.mask)
                throw invalid_input_error("finite_difference_check: SmoothL1 needs gt and mask");
            loss_fn = [&params](const CostVolume& c) {
                return smooth_l1_loss_on_volume(c, *params.gt, *params.mask, params.t);
            };
            analytic = grad_smooth_l1_wrt_cost(cost, *params.gt, *params.mask, params.t);
            break;
        case LossId::Uncertainty:
            loss_fn = uncertainty_part;
            analytic = grad_uncertainty_wrt_cost(cost, params.metric, params.t);
            break;
        case LossId::Combined: {
            if (!params.gt || !params.mask)
                throw invalid_input_error("finite_difference_check: Combined needs gt and mask");
            loss_fn = [&params, uncertainty_part](const CostVolume& c) {
                return smooth_l1_loss_on_volume(c, *params.gt, *params.mask, params.t) +
                       params.lambda * uncertainty_part(c);
            };
            analytic = grad_smooth_l1_wrt_cost(cost, *params.gt, *params.mask, params.t);
            GradientVolume gu = grad_uncertainty_wrt_cost(cost, params.metric, params.t);
            for (std::size_t i = 0; i < analytic.values.size(); ++i)
                analytic.values[i] += params.lambda * gu.values[i];
            break;
        }
    }
    return finite_difference_check(cost, loss_fn, analytic, h);
}

}  // namespace softdisp
