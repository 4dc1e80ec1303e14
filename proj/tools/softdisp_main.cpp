// softdisp command-line front end: classical matching, anisotropic readout,
// uncertainty maps, gradient verification, per-pixel adaptation flows, ROC
// sparsification, and pseudo-label export, wired for reproducible runs.
//
// Exit codes: 0 success, 1 assertion/acceptance failure, 2 usage/input error.

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <softdisp/adapt_sim.hpp>
#include <softdisp/eval.hpp>
#include <softdisp/matcher.hpp>
#include <softdisp/objective.hpp>
#include <softdisp/pseudo_label.hpp>
#include <softdisp/storage.hpp>
#include <softdisp/uncertainty.hpp>
#include <softdisp/volume.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace softdisp;

namespace {

MetricKind parse_metric(const std::string& name) {
    if (name == "msm") return MetricKind::MSM;
    if (name == "entropy") return MetricKind::Entropy;
    if (name == "per") return MetricKind::PER;
    throw invalid_input_error("unknown metric '" + name + "' (use msm|entropy|per)");
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw invalid_input_error("cannot open file for writing: " + path.string());
    out << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.12g", v);
    return buf;
}

// ---------------------------------------------------------------------------
// Scene configs.

SceneSpec scene_from_json(const json& j) {
    SceneSpec spec;
    spec.width = j.at("width").get<int>();
    spec.height = j.at("height").get<int>();
    spec.d_max = j.at("d_max").get<int>();
    spec.noise_sigma = j.value("noise_sigma", 0.0);
    spec.seed = j.value("seed", 0u);
    const json& p = j.at("pattern");
    const std::string type = p.at("type").get<std::string>();
    if (type == "constant") {
        spec.pattern.type = PatternType::Constant;
        spec.pattern.disparity = p.at("disparity").get<int>();
    } else if (type == "tilted_plane") {
        spec.pattern.type = PatternType::TiltedPlane;
        spec.pattern.d0 = p.at("d0").get<double>();
        spec.pattern.sx = p.value("sx", 0.0);
        spec.pattern.sy = p.value("sy", 0.0);
    } else if (type == "two_layer") {
        spec.pattern.type = PatternType::TwoLayer;
        spec.pattern.background = p.at("background").get<int>();
        spec.pattern.foreground = p.at("foreground").get<int>();
        spec.pattern.rect_x = p.at("rect").at("x").get<int>();
        spec.pattern.rect_y = p.at("rect").at("y").get<int>();
        spec.pattern.rect_w = p.at("rect").at("w").get<int>();
        spec.pattern.rect_h = p.at("rect").at("h").get<int>();
    } else {
        throw invalid_input_error("unknown pattern type '" + type +
                                  "' (use constant|tilted_plane|two_layer)");
    }
    return spec;
}

SceneSpec load_scene(const std::string& path) {
    const auto bytes = read_file(path);
    json j = json::parse(bytes.begin(), bytes.end(), nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded()) throw invalid_input_error("scene config is not valid JSON: " + path);
    try {
        return scene_from_json(j);
    } catch (const json::exception& e) {
        throw invalid_input_error("bad scene config " + path + ": " + e.what());
    }
}

std::pair<CostVolume, ValidityMask> run_matcher(const std::string& matcher,
                                                const StereoPair& pair, int d_max, int window) {
    if (matcher == "sad") return sad_cost_volume(pair, d_max, window);
    if (matcher == "census") return census_cost_volume(pair, d_max, window);
    throw invalid_input_error("unknown matcher '" + matcher + "' (use sad|census)");
}

/// Reads a disparity map by extension: .pfm (all pixels valid) or .png
/// (KITTI 16-bit, mask from the zero sentinel).
std::pair<DisparityMap, ValidityMask> load_disparity(const std::string& path) {
    switch (format_from_path(path)) {
        case FileFormat::PFM: {
            DisparityMap map = pfm_read(path);
            return {map, ValidityMask(map.height, map.width, true)};
        }
        case FileFormat::KittiPng16:
            return kitti_png_read(path);
        default:
            throw invalid_input_error("unsupported disparity format '" + path +
                                      "' (use .pfm or .png)");
    }
}

UncertaintyMap load_uncertainty(const std::string& path) {
    DisparityMap raw = pfm_read(path);
    UncertaintyMap map(raw.height, raw.width, UncertaintyMetric(MetricKind::Entropy));
    map.values = raw.values;
    return map;
}

ValidityMask intersect(const ValidityMask& a, const ValidityMask& b) {
    if (a.height != b.height || a.width != b.width)
        throw invalid_input_error("mask shapes do not match");
    ValidityMask out(a.height, a.width, false);
    for (std::size_t i = 0; i < out.valid.size(); ++i) out.valid[i] = a.valid[i] && b.valid[i];
    return out;
}

// ---------------------------------------------------------------------------
// estimate

struct EstimateArgs {
    std::string left, right, volume, scene, matcher = "sad";
    int window = 9, d_max = 32;
    double t = 16.0, s = 0.5;
    bool save_volume = false;
    std::string out_dir = ".";
};

int cmd_estimate(const EstimateArgs& a) {
    CostVolume vol;
    ValidityMask mask;
    if (!a.volume.empty()) {
        vol = raw_volume_read(a.volume);
        mask = ValidityMask(vol.height, vol.width, true);
    } else {
        StereoPair pair;
        if (!a.scene.empty()) {
            const Stereogram sg = generate_stereogram(load_scene(a.scene));
            pair = sg.pair;
        } else {
            if (a.left.empty() || a.right.empty())
                throw invalid_input_error(
                    "estimate needs --left/--right images, --volume, or --scene");
            pair.left = pgm_read(a.left);
            pair.right = pgm_read(a.right);
        }
        auto [v, m] = run_matcher(a.matcher, pair, a.d_max, a.window);
        vol = std::move(v);
        mask = std::move(m);
    }

    auto [probs, disp] = readout(vol, Temperature(a.t));
    fs::create_directories(a.out_dir);
    const fs::path out(a.out_dir);
    pfm_write(disp, (out / "disparity.pfm").string());
    kitti_png_write(disp, mask, (out / "disparity.png").string());
    if (a.save_volume) raw_volume_write(vol, (out / "volume.bin").string());

    json summary;
    summary["t"] = a.t;
    summary["per_s"] = a.s;
    summary["d_max"] = vol.d_max;
    summary["width"] = vol.width;
    summary["height"] = vol.height;
    for (auto kind : {MetricKind::MSM, MetricKind::Entropy, MetricKind::PER}) {
        UncertaintyMetric metric(kind, a.s);
        UncertaintyMap umap = uncertainty_map(probs, metric);
        summary[std::string("mean_") + metric_name(kind)] =
            uncertainty_loss(probs, metric, mask);
        Image8 gray(umap.height, umap.width);
        gray.pixels = to_gray8(umap);
        pgm_write(gray, (out / (std::string("uncertainty_") + metric_name(kind) + ".pgm"))
                            .string());
        DisparityMap raw(umap.height, umap.width);
        raw.values = umap.values;
        pfm_write(raw, (out / (std::string("uncertainty_") + metric_name(kind) + ".pfm"))
                           .string());
    }
    write_json(out / "summary.json", summary);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck

struct GradcheckArgs {
    int trials = 20;
    unsigned seed = 1;
    std::vector<double> h_values = {1e-5};
    double tolerance = 1e-6;
    bool negate_analytic = false;  // hidden fault injection for harness tests
};

int cmd_gradcheck(const GradcheckArgs& a) {
    std::mt19937 gen(a.seed);
    std::uniform_real_distribution<double> cdist(0.0, 3.0);
    std::uniform_real_distribution<double> gdist(0.0, 31.0);

    struct Row {
        std::string name;
        std::vector<double> err_by_h;
    };
    std::vector<Row> rows;

    auto run_loss = [&](const std::string& name, LossId id, const FdParams& base,
                        const CostVolume& cost, const DisparityMap* gt,
                        const ValidityMask* mask) {
        FdParams params = base;
        params.gt = gt;
        params.mask = mask;
        Row* row = nullptr;
        for (auto& r : rows)
            if (r.name == name) row = &r;
        if (!row) {
            rows.push_back({name, std::vector<double>(a.h_values.size(), 0.0)});
            row = &rows.back();
        }
        for (std::size_t k = 0; k < a.h_values.size(); ++k) {
            double err;
            if (a.negate_analytic) {
                // fault injection: hand the harness a sign-flipped gradient
                detail::check_fd_guards(cost, id, params, a.h_values[k]);
                GradientVolume broken(cost.height, cost.width, cost.d_max);
                auto fill = [&](const GradientVolume& g) {
                    for (std::size_t i = 0; i < g.values.size(); ++i)
                        broken.values[i] = -g.values[i];
                };
                std::function<double(const CostVolume&)> loss_fn;
                ValidityMask all(cost.height, cost.width, true);
                switch (id) {
                    case LossId::SmoothL1:
                        loss_fn = [&params](const CostVolume& c) {
                            return smooth_l1_loss_on_volume(c, *params.gt, *params.mask,
                                                            params.t);
                        };
                        fill(grad_smooth_l1_wrt_cost(cost, *gt, *mask, params.t));
                        break;
                    case LossId::Uncertainty:
                        loss_fn = [&params, &all](const CostVolume& c) {
                            return uncertainty_loss(anisotropic_softmax(c, params.t),
                                                    params.metric, all);
                        };
                        fill(grad_uncertainty_wrt_cost(cost, params.metric, params.t));
                        break;
                    case LossId::Combined: {
                        loss_fn = [&params, &all](const CostVolume& c) {
                            return smooth_l1_loss_on_volume(c, *params.gt, *params.mask,
                                                            params.t) +
                                   params.lambda *
                                       uncertainty_loss(anisotropic_softmax(c, params.t),
                                                        params.metric, all);
                        };
                        GradientVolume g = grad_smooth_l1_wrt_cost(cost, *gt, *mask, params.t);
                        GradientVolume gu = grad_uncertainty_wrt_cost(cost, params.metric,
                                                                      params.t);
                        for (std::size_t i = 0; i < g.values.size(); ++i)
                            g.values[i] += params.lambda * gu.values[i];
                        fill(g);
                        break;
                    }
                }
                err = finite_difference_check(cost, loss_fn, broken, a.h_values[k]).max_rel_err;
            } else {
                err = finite_difference_check(cost, id, params, a.h_values[k]).max_rel_err;
            }
            row->err_by_h[k] = std::max(row->err_by_h[k], err);
        }
    };

    int done = 0, attempts = 0;
    while (done < a.trials && attempts < a.trials * 4) {
        ++attempts;
        CostVolume cost(1, 1, 31);
        for (auto& c : cost.costs) c = cdist(gen);
        DisparityMap gt(1, 1);
        gt.at(0, 0) = gdist(gen);
        ValidityMask mask(1, 1, true);
        try {
            for (double t : {1.0, 4.0, 16.0})
                run_loss("smooth_l1(t=" + fmt(t) + ")", LossId::SmoothL1,
                         {Temperature(t), UncertaintyMetric(MetricKind::Entropy), 0.0}, cost,
                         &gt, &mask);
            for (auto kind : {MetricKind::Entropy, MetricKind::MSM, MetricKind::PER})
                run_loss(std::string("uncertainty(") + metric_name(kind) + ")",
                         LossId::Uncertainty,
                         {Temperature(16.0), UncertaintyMetric(kind, 0.5), 0.0}, cost, nullptr,
                         nullptr);
            run_loss("combined(entropy)", LossId::Combined,
                     {Temperature(16.0), UncertaintyMetric(MetricKind::Entropy),
                      default_lambda(MetricKind::Entropy)},
                     cost, &gt, &mask);
        } catch (const resample_error&) {
            continue;  // sample hit a kink or tie; draw a fresh vector
        }
        ++done;
    }
    if (done < a.trials) {
        std::cerr << "gradcheck: could not draw enough clean samples\n";
        return 1;
    }

    std::printf("%-24s", "loss");
    for (double h : a.h_values) std::printf("  h=%-12g", h);
    std::printf("\n");
    bool ok = true;
    for (const auto& row : rows) {
        std::printf("%-24s", row.name.c_str());
        double best = 1e300;
        for (double e : row.err_by_h) {
            std::printf("  %-14.3e", e);
            best = std::min(best, e);
        }
        std::printf("\n");
        if (best >= a.tolerance) ok = false;
    }
    std::printf("gradcheck %s (tolerance %.1e, %d trials)\n", ok ? "PASS" : "FAIL", a.tolerance,
                done);
    return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------
// adapt-sim

struct AdaptSimArgs {
    std::string case_name;
    std::vector<double> costs;
    double gt = -1.0;  // < 0 means unsupervised
    std::string metric = "entropy";
    double t = 16.0, lambda = -1.0, s = 0.5, step = 0.05;
    int max_steps = 2000;
    bool no_line_search = false;
    double threshold = 0.5;
    std::string out_dir = ".";
};

int cmd_adapt_sim(const AdaptSimArgs& a) {
    std::vector<double> costs = a.costs;
    std::optional<double> gt;
    if (a.gt >= 0.0) gt = a.gt;
    if (!a.case_name.empty()) {
        ToyCase tc = toy_case(a.case_name);
        costs = tc.costs;
        if (!gt) gt = tc.gt;
    }
    if (costs.empty())
        throw invalid_input_error("adapt-sim needs --case or an explicit --costs vector");

    SimConfig cfg;
    cfg.t = Temperature(a.t);
    cfg.metric = UncertaintyMetric(parse_metric(a.metric), a.s);
    cfg.lambda = a.lambda >= 0.0 ? a.lambda : default_lambda(cfg.metric.kind);
    cfg.step_size = a.step;
    cfg.max_steps = a.max_steps;
    cfg.line_search = !a.no_line_search;
    cfg.gt = gt;

    const ConvergenceLog log = simulate_pixel(costs, cfg);

    fs::create_directories(a.out_dir);
    const fs::path out(a.out_dir);
    std::string csv = "step,loss,entropy,max_prob,disparity\n";
    for (std::size_t k = 0; k < log.steps.size(); ++k) {
        const auto& rec = log.steps[k];
        csv += std::to_string(k) + "," + fmt(rec.loss) + "," + fmt(rec.entropy) + "," +
               fmt(rec.max_prob) + "," + fmt(rec.disparity) + "\n";
    }
    write_text(out / "trajectory.csv", csv);

    json summary;
    summary["case"] = a.case_name.empty() ? "custom" : a.case_name;
    summary["t"] = a.t;
    summary["lambda"] = cfg.lambda;
    summary["metric"] = a.metric;
    summary["line_search"] = cfg.line_search;
    summary["step_size"] = cfg.step_size;
    summary["steps_run"] = log.steps.size() - 1;
    summary["final_loss"] = log.last().loss;
    summary["final_entropy"] = log.last().entropy;
    summary["final_max_prob"] = log.last().max_prob;
    summary["final_disparity"] = log.last().disparity;
    std::vector<double> probs(costs.size());
    anisotropic_softmax_row(log.final_costs, cfg.t.value, probs);
    summary["final_argmax"] = argmax_row(probs);
    if (gt) {
        summary["gt"] = *gt;
        summary["abs_error"] = std::abs(log.last().disparity - *gt);
        summary["steps_to_threshold"] = log.steps_to_threshold(*gt, a.threshold);
        summary["threshold"] = a.threshold;
    }
    try {
        auto [lo, hi] = concentration_window(log);
        const DecayFit fit = fit_decay_rate(log, lo, hi);
        summary["gamma"] = fit.gamma;
        summary["r_squared"] = fit.r_squared;
        summary["window_end"] = hi;
    } catch (const degenerate_input_error&) {
        summary["gamma"] = nullptr;  // entropy hit zero inside the window
    }
    write_json(out / "summary.json", summary);
    std::cout << summary.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// roc / pseudo / metrics

struct RocArgs {
    std::string pred, gt, unc;
    double step = 0.05;
    std::string out_dir = ".";
};

std::string curve_to_csv(const RocCurve& curve) {
    std::string csv = "density,d1_all\n";
    for (const auto& pt : curve.points) csv += fmt(pt.density) + "," + fmt(pt.d1_all) + "\n";
    return csv;
}

int cmd_roc(const RocArgs& a) {
    auto [pred, pred_mask] = load_disparity(a.pred);
    auto [gt, gt_mask] = load_disparity(a.gt);
    const UncertaintyMap unc = load_uncertainty(a.unc);
    const ValidityMask mask = intersect(pred_mask, gt_mask);
    const RocCurve curve = roc_sparsification(pred, gt, mask, unc, a.step);

    fs::create_directories(a.out_dir);
    const fs::path out(a.out_dir);
    write_text(out / "roc.csv", curve_to_csv(curve));
    json j;
    j["step"] = a.step;
    j["points"] = json::array();
    for (const auto& pt : curve.points)
        j["points"].push_back({{"density", pt.density}, {"d1_all", pt.d1_all}});
    write_json(out / "roc.json", j);
    std::cout << curve_to_csv(curve);
    return 0;
}

struct PseudoArgs {
    std::string pred, unc;
    double delta = 20.0;
    std::string out_dir = ".";
};

int cmd_pseudo(const PseudoArgs& a) {
    auto [pred, pred_mask] = load_disparity(a.pred);
    const UncertaintyMap unc = load_uncertainty(a.unc);
    const PseudoLabel label = make_pseudo_label(pred, unc, a.delta);
    // a pixel invalid in the prediction stays invalid in the label
    const ValidityMask validity = intersect(label.validity, pred_mask);

    fs::create_directories(a.out_dir);
    const fs::path out(a.out_dir);
    kitti_png_write(label.disparity, validity, (out / "pseudo_label.png").string());
    json j;
    j["delta_percent"] = a.delta;
    j["threshold_value"] = label.threshold_value;
    j["valid_fraction"] =
        double(validity.count()) / (double(label.validity.height) * label.validity.width);
    write_json(out / "pseudo_summary.json", j);
    std::cout << j.dump(2) << "\n";
    return 0;
}

struct MetricsArgs {
    std::string pred, gt;
    std::string out_dir;
};

json stats_to_json(const ErrorStats& s) {
    return {{"d1_all", s.d1_all}, {"bad_1", s.bad_1}, {"epe", s.epe}, {"n_valid", s.n_valid}};
}

int cmd_metrics(const MetricsArgs& a) {
    auto [pred, pred_mask] = load_disparity(a.pred);
    auto [gt, gt_mask] = load_disparity(a.gt);
    const ErrorStats stats = error_stats(pred, gt, intersect(pred_mask, gt_mask));
    const json j = stats_to_json(stats);
    if (!a.out_dir.empty()) {
        fs::create_directories(a.out_dir);
        write_json(fs::path(a.out_dir) / "metrics.json", j);
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

// ---------------------------------------------------------------------------
// bench domain-shift

struct BenchArgs {
    unsigned seed = 7;
    std::string matcher = "sad";
    int window = 9;
    double delta = 20.0, s = 0.5;
    std::string out_dir = "bench_out";
};

int cmd_bench_domain_shift(const BenchArgs& a) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(a.out_dir);
    const fs::path out(a.out_dir);

    const Stereogram clean = generate_stereogram(domain_shift_benchmark_scene(0.0, a.seed));
    const Stereogram noisy = generate_stereogram(domain_shift_benchmark_scene(20.0, a.seed));
    auto [clean_vol, clean_vmask] = run_matcher(a.matcher, clean.pair, 32, a.window);
    auto [noisy_vol, noisy_vmask] = run_matcher(a.matcher, noisy.pair, 32, a.window);

    // evaluation mask: geometry-valid pixels whose window stays interior
    const int b = a.window / 2;
    ValidityMask eval_mask(clean.mask.height, clean.mask.width, false);
    for (int y = b; y < eval_mask.height - b; ++y)
        for (int x = b; x < eval_mask.width - b; ++x)
            eval_mask.at(y, x) = clean.mask.at(y, x);

    int failures = 0;
    auto check = [&failures](const std::string& name, bool ok, const std::string& detail) {
        std::printf("[%s] %s (%s)\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
        if (!ok) ++failures;
    };

    json report;
    report["seed"] = a.seed;
    report["matcher"] = a.matcher;

    // source-vs-target sharpness, t = 1 readout
    auto pc1 = anisotropic_softmax(clean_vol, Temperature(1.0));
    auto pn1 = anisotropic_softmax(noisy_vol, Temperature(1.0));
    auto pn16 = anisotropic_softmax(noisy_vol, Temperature(16.0));
    for (auto kind : {MetricKind::MSM, MetricKind::Entropy, MetricKind::PER}) {
        UncertaintyMetric metric(kind, a.s);
        const double mc = uncertainty_loss(pc1, metric, eval_mask);
        const double mn = uncertainty_loss(pn1, metric, eval_mask);
        const double mn16 = uncertainty_loss(pn16, metric, eval_mask);
        const std::string name = metric_name(kind);
        report["mean_" + name]["clean_t1"] = mc;
        report["mean_" + name]["noisy_t1"] = mn;
        report["mean_" + name]["noisy_t16"] = mn16;
        check("noisy " + name + " > clean " + name + " (t=1)", mn > mc,
              fmt(mn) + " vs " + fmt(mc));
        check("t=16 lowers noisy " + name, mn16 < mn, fmt(mn16) + " vs " + fmt(mn));
    }

    // disparity quality and sparsification on the noisy volume
    const DisparityMap disp16 = soft_argmin(pn16);
    const ErrorStats dense = error_stats(disp16, noisy.gt, eval_mask);
    report["noisy_t16_dense"] = stats_to_json(dense);

    for (auto kind : {MetricKind::MSM, MetricKind::Entropy, MetricKind::PER}) {
        UncertaintyMetric metric(kind, a.s);
        const UncertaintyMap umap = uncertainty_map(pn1, metric);
        const std::string name = metric_name(kind);

        const RocCurve curve = roc_sparsification(disp16, noisy.gt, eval_mask, umap, 0.05);
        write_text(out / ("roc_" + name + ".csv"), curve_to_csv(curve));
        double d1_half = curve.points.front().d1_all;
        for (const auto& pt : curve.points)
            if (std::abs(pt.density - 0.5) < 1e-9) d1_half = pt.d1_all;
        check("ROC density 0.5 <= density 1.0 (" + name + ")",
              d1_half <= curve.points.front().d1_all,
              fmt(d1_half) + " vs " + fmt(curve.points.front().d1_all));
        report["roc_" + name]["d1_full"] = curve.points.front().d1_all;
        report["roc_" + name]["d1_half"] = d1_half;

        const PseudoLabel label = make_pseudo_label(disp16, umap, a.delta);
        const ErrorStats retained =
            error_stats(disp16, noisy.gt, intersect(label.validity, eval_mask));
        check("pseudo-label delta=" + fmt(a.delta) + " keeps D1 <= dense (" + name + ")",
              retained.d1_all <= dense.d1_all, fmt(retained.d1_all) + " vs " + fmt(dense.d1_all));
        report["pseudo_" + name]["d1_retained"] = retained.d1_all;
        report["pseudo_" + name]["valid_fraction"] =
            double(label.validity.count()) / (double(label.validity.height) *
                                              label.validity.width);
        kitti_png_write(label.disparity, intersect(label.validity, noisy.mask),
                        (out / ("pseudo_" + name + ".png")).string());
    }

    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report["elapsed_seconds"] = elapsed;
    report["failures"] = failures;
    write_json(out / "report.json", report);
    std::printf("bench domain-shift: %d failures, %.2f s, artifacts in %s\n", failures, elapsed,
                a.out_dir.c_str());
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"softdisp: disparity-distribution toolkit over stereo cost volumes"};
    app.require_subcommand(1);

    EstimateArgs est;
    auto* cmd_est = app.add_subcommand(
        "estimate", "match a stereo pair (or load a volume) and write disparity + uncertainty");
    cmd_est->add_option("--left", est.left, "left image (PGM)");
    cmd_est->add_option("--right", est.right, "right image (PGM)");
    cmd_est->add_option("--volume", est.volume, "raw cost volume file");
    cmd_est->add_option("--scene", est.scene, "scene spec JSON (synthesizes the pair)");
    cmd_est->add_option("--matcher", est.matcher, "sad|census")->capture_default_str();
    cmd_est->add_option("--window", est.window, "matcher window (odd)")->capture_default_str();
    cmd_est->add_option("--dmax", est.d_max, "disparity search bound")->capture_default_str();
    cmd_est->add_option("--t", est.t, "softmax temperature")->capture_default_str();
    cmd_est->add_option("--s", est.s, "PER kernel scale")->capture_default_str();
    cmd_est->add_flag("--save-volume", est.save_volume, "also dump the cost volume (RawVolume)");
    cmd_est->add_option("--out", est.out_dir, "output directory")->capture_default_str();

    GradcheckArgs gc;
    auto* cmd_gc = app.add_subcommand(
        "gradcheck", "verify analytic gradients against central finite differences");
    cmd_gc->add_option("--trials", gc.trials, "random cost vectors per loss")
        ->capture_default_str();
    cmd_gc->add_option("--seed", gc.seed, "RNG seed")->capture_default_str();
    cmd_gc->add_option("--fd-step", gc.h_values, "finite-difference steps to sweep")
        ->capture_default_str();
    cmd_gc->add_option("--tolerance", gc.tolerance, "max relative error gate")
        ->capture_default_str();
    cmd_gc->add_flag("--negate-analytic", gc.negate_analytic)->group("");  // test fixture

    AdaptSimArgs as;
    auto* cmd_as = app.add_subcommand(
        "adapt-sim", "run the per-pixel gradient flow on a named case or custom cost vector");
    cmd_as->add_option("--case", as.case_name, "fig5a|fig5b|bimodal|uniform");
    cmd_as->add_option("--costs", as.costs, "explicit cost vector");
    cmd_as->add_option("--gt", as.gt, "true disparity (omit for unsupervised)");
    cmd_as->add_option("--metric", as.metric, "msm|entropy|per")->capture_default_str();
    cmd_as->add_option("--t", as.t, "softmax temperature")->capture_default_str();
    cmd_as->add_option("--lambda", as.lambda, "uncertainty weight (default per metric)");
    cmd_as->add_option("--s", as.s, "PER kernel scale")->capture_default_str();
    cmd_as->add_option("--step", as.step, "learning rate")->capture_default_str();
    cmd_as->add_option("--steps", as.max_steps, "max steps")->capture_default_str();
    cmd_as->add_flag("--no-line-search", as.no_line_search, "fixed-step mode");
    cmd_as->add_option("--threshold", as.threshold, "|d - gt| hit threshold")
        ->capture_default_str();
    cmd_as->add_option("--out", as.out_dir, "output directory")->capture_default_str();

    RocArgs roc;
    auto* cmd_roc_p = app.add_subcommand("roc", "sparsification curve from prediction + gt + "
                                                "uncertainty");
    cmd_roc_p->add_option("--pred", roc.pred, "predicted disparity (.pfm/.png)")->required();
    cmd_roc_p->add_option("--gt", roc.gt, "ground-truth disparity (.pfm/.png)")->required();
    cmd_roc_p->add_option("--unc", roc.unc, "uncertainty map (.pfm)")->required();
    cmd_roc_p->add_option("--step", roc.step, "fraction removed per level")
        ->capture_default_str();
    cmd_roc_p->add_option("--out", roc.out_dir, "output directory")->capture_default_str();

    PseudoArgs ps;
    auto* cmd_ps = app.add_subcommand("pseudo", "filter high-uncertainty pixels into a "
                                                "pseudo-label PNG");
    cmd_ps->add_option("--pred", ps.pred, "predicted disparity (.pfm/.png)")->required();
    cmd_ps->add_option("--unc", ps.unc, "uncertainty map (.pfm)")->required();
    cmd_ps->add_option("--delta", ps.delta, "percent of pixels to drop, in (0,100)")
        ->capture_default_str();
    cmd_ps->add_option("--out", ps.out_dir, "output directory")->capture_default_str();

    MetricsArgs mt;
    auto* cmd_mt = app.add_subcommand("metrics", "D1_all / bad-1.0 / EPE between maps");
    cmd_mt->add_option("--pred", mt.pred, "predicted disparity (.pfm/.png)")->required();
    cmd_mt->add_option("--gt", mt.gt, "ground-truth disparity (.pfm/.png)")->required();
    cmd_mt->add_option("--out", mt.out_dir, "optional output directory");

    BenchArgs bench;
    auto* cmd_bench = app.add_subcommand("bench", "composite reproduction runs");
    auto* cmd_ds = cmd_bench->add_subcommand(
        "domain-shift", "clean-vs-noisy pipeline with directional checks");
    cmd_ds->add_option("--seed", bench.seed, "scene seed")->capture_default_str();
    cmd_ds->add_option("--matcher", bench.matcher, "sad|census")->capture_default_str();
    cmd_ds->add_option("--window", bench.window, "matcher window")->capture_default_str();
    cmd_ds->add_option("--delta", bench.delta, "pseudo-label delta percent")
        ->capture_default_str();
    cmd_ds->add_option("--out", bench.out_dir, "output directory")->capture_default_str();
    cmd_bench->require_subcommand(1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;  // help/version exit 0, usage errors exit 2
    }

    try {
        if (cmd_est->parsed()) return cmd_estimate(est);
        if (cmd_gc->parsed()) return cmd_gradcheck(gc);
        if (cmd_as->parsed()) return cmd_adapt_sim(as);
        if (cmd_roc_p->parsed()) return cmd_roc(roc);
        if (cmd_ps->parsed()) return cmd_pseudo(ps);
        if (cmd_mt->parsed()) return cmd_metrics(mt);
        if (cmd_ds->parsed()) return cmd_bench_domain_shift(bench);
    } catch (const invalid_input_error& e) {
        std::cerr << "input error: " << e.what() << "\n";
        return 2;
    } catch (const format_error& e) {
        std::cerr << "format error: " << e.what() << "\n";
        return 2;
    } catch (const error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
