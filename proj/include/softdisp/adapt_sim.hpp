#pragma once

// Per-pixel gradient-flow simulator over a single cost vector. The cost
// vector itself is the optimization variable — a desk-scale stand-in for the
// logits a network would produce — driven by the same analytic gradients the
// loss module exposes.
//
// The flow shows two stages: an entropy-driven collapse onto one mode, then
// (when ground truth is present) migration of that mode onto the true index.

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "softdisp/errors.hpp"
#include "softdisp/objective.hpp"
#include "softdisp/uncertainty.hpp"
#include "softdisp/volume.hpp"

namespace softdisp {

struct SimConfig {
    Temperature t{16.0};
    double lambda = default_lambda(MetricKind::Entropy);
    UncertaintyMetric metric{MetricKind::Entropy};
    double step_size = 0.05;
    int max_steps = 2000;
    /// Backtracking line search: halve the step (at most 30 times) until the
    /// loss does not increase, making monotone-decrease assertions exact.
    /// Disable for fixed-step runs when measuring decay rates.
    bool line_search = true;
    /// Present = supervised (source-style) pixel; absent = target-style.
    std::optional<double> gt;

    void validate(std::size_t n_hypotheses) const {
        if (!(step_size > 0.0)) throw invalid_input_error("step_size must be > 0");
        if (max_steps < 1) throw invalid_input_error("max_steps must be >= 1");
        if (gt && (*gt < 0.0 || *gt > static_cast<double>(n_hypotheses - 1)))
            throw invalid_input_error("gt disparity outside [0, d_max]");
    }
};

struct StepRecord {
    double loss = 0.0;
    double entropy = 0.0;   // Shannon entropy of the current readout
    double max_prob = 0.0;
    double disparity = 0.0; // soft argmin of the current readout
};

struct ConvergenceLog {
    std::vector<StepRecord> steps;  // steps[0] is the initial state
    std::vector<double> final_costs;

    const StepRecord& last() const { return steps.back(); }

    /// First step index whose |disparity - gt| < threshold, or -1 if the
    /// trajectory never gets there.
    int steps_to_threshold(double gt, double threshold) const {
        for (std::size_t k = 0; k < steps.size(); ++k)
            if (std::abs(steps[k].disparity - gt) < threshold) return static_cast<int>(k);
        return -1;
    }
};

namespace detail {

inline double sim_loss(std::span<const double> costs, const SimConfig& cfg,
                       std::span<double> probs_scratch) {
    anisotropic_softmax_row(costs, cfg.t.value, probs_scratch);
    double loss = 0.0;
    if (cfg.gt) loss += smooth_l1_rho(soft_argmin_row(probs_scratch) - *cfg.gt);
    loss += cfg.lambda * uncertainty_row(probs_scratch, cfg.metric);
    return loss;
}

inline void sim_grad(std::span<const double> costs, const SimConfig& cfg,
                     std::span<double> grad_out) {
    const std::size_t n = costs.size();
    std::vector<double> gu(n);
    grad_uncertainty_row(costs, cfg.metric, cfg.t.value, gu);
    if (cfg.gt) {
        grad_smooth_l1_row(costs, *cfg.gt, cfg.t.value, grad_out);
        for (std::size_t j = 0; j < n; ++j) grad_out[j] += cfg.lambda * gu[j];
    } else {
        for (std::size_t j = 0; j < n; ++j) grad_out[j] = cfg.lambda * gu[j];
    }
}

}  // namespace detail

/// Gradient descent on one cost vector. Returns the full trajectory,
/// including the initial state, so the log holds at most max_steps + 1
/// records. Throws divergence_error if the loss leaves the finite range.
inline ConvergenceLog simulate_pixel(std::vector<double> init_cost, const SimConfig& cfg) {
    const std::size_t n = init_cost.size();
    if (n < 2) throw invalid_input_error("simulate_pixel: need at least two hypotheses");
    for (double c : init_cost)
        if (!std::isfinite(c)) throw invalid_input_error("simulate_pixel: non-finite init cost");
    cfg.validate(n);

    std::vector<double> costs = std::move(init_cost);
    std::vector<double> probs(n), grad(n), candidate(n);
    ConvergenceLog log;
    log.steps.reserve(static_cast<std::size_t>(cfg.max_steps) + 1);

    auto record = [&](double loss) {
        anisotropic_softmax_row(costs, cfg.t.value, probs);
        StepRecord rec;
        rec.loss = loss;
        rec.entropy = entropy_row(probs);
        rec.max_prob = probs[argmax_row(probs)];
        rec.disparity = soft_argmin_row(probs);
        log.steps.push_back(rec);
    };

    double loss = detail::sim_loss(costs, cfg, probs);
    if (!std::isfinite(loss)) throw divergence_error("non-finite loss at step 0", 0);
    record(loss);

    for (int k = 0; k < cfg.max_steps; ++k) {
        detail::sim_grad(costs, cfg, grad);
        double step = cfg.step_size;
        auto try_step = [&](double s) {
            for (std::size_t j = 0; j < n; ++j) candidate[j] = costs[j] - s * grad[j];
            return detail::sim_loss(candidate, cfg, probs);
        };
        double new_loss = try_step(step);
        if (cfg.line_search) {
            int halvings = 0;
            while (new_loss > loss && halvings < 30) {
                step *= 0.5;
                ++halvings;
                new_loss = try_step(step);
            }
            if (new_loss > loss) {  // no acceptable step; hold position
                candidate = costs;
                new_loss = loss;
            }
        }
        costs.swap(candidate);
        loss = new_loss;
        bool finite = std::isfinite(loss);
        for (std::size_t j = 0; finite && j < n; ++j) finite = std::isfinite(costs[j]);
        if (!finite)
            throw divergence_error("non-finite loss at step " + std::to_string(k + 1),
                                   static_cast<std::size_t>(k + 1));
        record(loss);
    }
    log.final_costs = std::move(costs);
    return log;
}

struct CaseBReport {
    ConvergenceLog log;
    int final_argmax = -1;
    bool argmax_at_gt = false;
};

/// Runs simulate_pixel on a wrong-peak init and reports whether the final
/// argmax landed on the true index.
inline CaseBReport simulate_case_b(std::vector<double> init_cost, double gt, SimConfig cfg) {
    cfg.gt = gt;
    CaseBReport rep;
    rep.log = simulate_pixel(std::move(init_cost), cfg);
    std::vector<double> probs(rep.log.final_costs.size());
    anisotropic_softmax_row(rep.log.final_costs, cfg.t.value, probs);
    rep.final_argmax = argmax_row(probs);
    rep.argmax_at_gt = rep.final_argmax == static_cast<int>(std::lround(gt));
    return rep;
}

// ---------------------------------------------------------------------------
// Entropy decay-rate estimation.

struct DecayFit {
    double gamma = 0.0;      // minus the slope of ln H versus step
    double r_squared = 0.0;  // coefficient of determination of that fit
};

/// Least-squares fit of ln H over steps [begin, end). Requires at least two
/// samples and strictly positive entropy across the window. A constant
/// series fits exactly (gamma 0, R^2 1).
inline DecayFit fit_decay_rate(const ConvergenceLog& log, std::size_t begin, std::size_t end) {
    if (end > log.steps.size()) end = log.steps.size();
    if (begin >= end || end - begin < 2)
        throw degenerate_input_error("fit_decay_rate: window must hold at least 2 steps");
    const std::size_t m = end - begin;
    double sx = 0.0, sy = 0.0;
    std::vector<double> ys(m);
    for (std::size_t k = 0; k < m; ++k) {
        const double h = log.steps[begin + k].entropy;
        if (!(h > 0.0))
            throw degenerate_input_error("fit_decay_rate: entropy must stay positive in window");
        ys[k] = std::log(h);
        sx += static_cast<double>(k);
        sy += ys[k];
    }
    const double mx = sx / static_cast<double>(m);
    const double my = sy / static_cast<double>(m);
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double dx = static_cast<double>(k) - mx;
        sxx += dx * dx;
        sxy += dx * (ys[k] - my);
    }
    const double slope = sxy / sxx;
    double ss_res = 0.0, ss_tot = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
        const double fit = my + slope * (static_cast<double>(k) - mx);
        ss_res += (ys[k] - fit) * (ys[k] - fit);
        ss_tot += (ys[k] - my) * (ys[k] - my);
    }
    DecayFit out;
    out.gamma = -slope;
    out.r_squared = ss_tot > 0.0 ? 1.0 - ss_res / ss_tot : (ss_res < 1e-18 ? 1.0 : 0.0);
    return out;
}

/// The entropy-collapse stretch of a trajectory: from the first step where H
/// fell to 90% of H(0) (skipping any pre-collapse plateau, e.g. near-tied
/// modes idling at a saddle) through the step where H crossed 2% of H(0)
/// (below which the distribution is essentially single-mode). Always spans
/// at least 5 samples, clamped to the log length.
inline std::pair<std::size_t, std::size_t> concentration_window(const ConvergenceLog& log) {
    const double h0 = log.steps.empty() ? 0.0 : log.steps.front().entropy;
    std::size_t begin = 0;
    for (std::size_t k = 0; k < log.steps.size(); ++k) {
        if (log.steps[k].entropy <= 0.9 * h0) {
            begin = k;
            break;
        }
    }
    std::size_t end = log.steps.size();
    for (std::size_t k = begin; k < log.steps.size(); ++k) {
        if (log.steps[k].entropy < 0.02 * h0) {
            end = k;
            break;
        }
    }
    if (end < begin + 5) end = std::min(begin + 5, log.steps.size());
    if (begin + 2 > end) begin = end >= 2 ? end - 2 : 0;
    return {begin, end};
}

// ---------------------------------------------------------------------------
// Named toy cases. Each returns a cost vector over 20 hypotheses whose t=16
// readout matches the documented probability shape, plus the true disparity
// when the case is supervised.

struct ToyCase {
    std::string name;
    std::vector<double> costs;
    std::optional<double> gt;
};

namespace detail {

/// Cost vector whose anisotropic readout at t_ref reproduces the given
/// probability shape (shifted so the minimum cost is 0).
inline std::vector<double> costs_from_probs(std::span<const double> probs, double t_ref) {
    double sum = 0.0;
    for (double p : probs) sum += p;
    std::vector<double> costs(probs.size());
    double cmin = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < probs.size(); ++i) {
        costs[i] = -std::log(probs[i] / sum) / t_ref;
        cmin = std::min(cmin, costs[i]);
    }
    for (auto& c : costs) c -= cmin;
    return costs;
}

}  // namespace detail

inline std::vector<std::string> toy_case_names() {
    return {"fig5a", "fig5b", "bimodal", "uniform"};
}

/// fig5a: multimodal with the higher peak already at the true index (0.45 at
///        gt=6 versus 0.35 at 14).
/// fig5b: highest probability at a wrong index with only faint mass at the
///        true one (0.60 at 14 versus 0.10 at gt=6).
/// bimodal: two nearly equal peaks (0.42 / 0.40); the exact tie is a
///        stationary saddle, so the documented case carries a slight tilt.
/// uniform: flat costs with a tiny linear ramp (amplitude 0.002/index);
///        exactly uniform probabilities are a stationary maximum.
inline ToyCase toy_case(const std::string& name) {
    constexpr int n = 20;
    constexpr double t_ref = 16.0;
    if (name == "fig5a") {
        std::vector<double> p(n, 0.20 / 18.0);
        p[6] = 0.45;
        p[14] = 0.35;
        return {name, detail::costs_from_probs(p, t_ref), 6.0};
    }
    if (name == "fig5b") {
        std::vector<double> p(n, 0.30 / 18.0);
        p[14] = 0.60;
        p[6] = 0.10;
        return {name, detail::costs_from_probs(p, t_ref), 6.0};
    }
    if (name == "bimodal") {
        std::vector<double> p(n, 0.18 / 18.0);
        p[8] = 0.42;
        p[14] = 0.40;
        return {name, detail::costs_from_probs(p, t_ref), std::nullopt};
    }
    if (name == "uniform") {
        std::vector<double> costs(n);
        for (int i = 0; i < n; ++i) costs[i] = 0.002 * i;
        return {name, costs, std::nullopt};
    }
    std::string valid;
    for (const auto& s : toy_case_names()) valid += (valid.empty() ? "" : ", ") + s;
    throw invalid_input_error("unknown toy case '" + name + "' (valid: " + valid + ")");
}

}  // namespace softdisp
