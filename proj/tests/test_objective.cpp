#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include <softdisp/objective.hpp>

using namespace softdisp;
using Catch::Matchers::WithinAbs;

namespace {

CostVolume single_pixel(const std::vector<double>& costs) {
    CostVolume v(1, 1, static_cast<int>(costs.size()) - 1);
    for (std::size_t i = 0; i < costs.size(); ++i) v.at(0, 0, i) = costs[i];
    return v;
}

struct PixelCase {
    CostVolume cost;
    DisparityMap gt;
    ValidityMask mask;
};

PixelCase random_pixel_case(std::mt19937& gen, int n = 32) {
    std::uniform_real_distribution<double> cdist(0.0, 3.0);
    std::uniform_real_distribution<double> gdist(0.0, double(n - 1));
    PixelCase pc{CostVolume(1, 1, n - 1), DisparityMap(1, 1), ValidityMask(1, 1, true)};
    for (auto& c : pc.cost.costs) c = cdist(gen);
    pc.gt.at(0, 0) = gdist(gen);
    return pc;
}

}  // namespace

TEST_CASE("smooth L1 branches") {
    DisparityMap pred(1, 1), gt(1, 1);
    ValidityMask mask(1, 1, true);
    gt.at(0, 0) = 10.0;

    pred.at(0, 0) = 10.5;  // quadratic branch
    REQUIRE_THAT(smooth_l1(pred, gt, mask), WithinAbs(0.125, 1e-15));
    pred.at(0, 0) = 12.0;  // linear branch
    REQUIRE_THAT(smooth_l1(pred, gt, mask), WithinAbs(1.5, 1e-15));
    pred.at(0, 0) = 11.0;  // the branches agree at |x| = 1
    REQUIRE_THAT(smooth_l1(pred, gt, mask), WithinAbs(0.5, 1e-15));

    SECTION("masked mean over several pixels") {
        DisparityMap p2(1, 3), g2(1, 3);
        ValidityMask m2(1, 3, true);
        m2.at(0, 2) = 0;
        p2.at(0, 0) = 1.0;
        g2.at(0, 0) = 1.5;   // rho = 0.125
        p2.at(0, 1) = 4.0;
        g2.at(0, 1) = 1.0;   // rho = 2.5
        p2.at(0, 2) = 99.0;  // masked out
        REQUIRE_THAT(smooth_l1(p2, g2, m2), WithinAbs((0.125 + 2.5) / 2.0, 1e-15));
    }
    SECTION("empty mask is degenerate") {
        ValidityMask none(1, 1, false);
        REQUIRE_THROWS_AS(smooth_l1(pred, gt, none), degenerate_input_error);
    }
}

TEST_CASE("smooth L1 gradient against finite differences") {
    std::mt19937 gen(42);
    SECTION("Dirac volume with pred == gt has zero gradient") {
        std::vector<double> costs(16, 50.0);
        costs[9] = 0.0;
        auto vol = single_pixel(costs);
        DisparityMap gt(1, 1);
        gt.at(0, 0) = 9.0;  // soft argmin is exactly 9 after underflow
        ValidityMask mask(1, 1, true);
        auto g = grad_smooth_l1_wrt_cost(vol, gt, mask, Temperature(16.0));
        for (double v : g.values) REQUIRE_THAT(v, WithinAbs(0.0, 1e-300));
    }
    SECTION("random costs, t in {1,4,16}, rel err < 1e-6 at h = 1e-5") {
        for (double t : {1.0, 4.0, 16.0}) {
            for (int trial = 0; trial < 10; ++trial) {
                auto pc = random_pixel_case(gen);
                FdParams params{Temperature(t), UncertaintyMetric(MetricKind::Entropy), 0.0,
                                &pc.gt, &pc.mask};
                FdReport rep;
                try {
                    rep = finite_difference_check(pc.cost, LossId::SmoothL1, params, 1e-5);
                } catch (const resample_error&) {
                    continue;  // drew a point at the kink; skip per contract
                }
                INFO("t=" << t << " trial=" << trial);
                REQUIRE(rep.max_rel_err < 1e-6);
            }
        }
    }
}

TEST_CASE("anisotropic softmax Jacobian is t times the plain formula") {
    std::mt19937 gen(1234);
    std::uniform_real_distribution<double> dist(0.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> costs(16);
        for (auto& c : costs) c = dist(gen);
        for (double t : {1.0, 2.0, 4.0, 8.0, 16.0, 32.0}) {
            auto probs = anisotropic_softmax(single_pixel(costs), Temperature(t));
            auto jt = softmax_jacobian_row(probs.pixel(0, 0), t);
            auto j1 = softmax_jacobian_row(probs.pixel(0, 0), 1.0);
            for (std::size_t k = 0; k < jt.size(); ++k)
                REQUIRE_THAT(jt[k], WithinAbs(t * j1[k], 1e-12));
        }
    }

    SECTION("the Jacobian itself matches finite differences of the softmax") {
        std::vector<double> costs(8);
        for (auto& c : costs) c = dist(gen);
        const double t = 4.0, h = 1e-6;
        auto probs = anisotropic_softmax(single_pixel(costs), Temperature(t));
        auto jac = softmax_jacobian_row(probs.pixel(0, 0), t);
        for (int j = 0; j < 8; ++j) {
            auto up = costs, dn = costs;
            up[j] += h;
            dn[j] -= h;
            auto pu = anisotropic_softmax(single_pixel(up), Temperature(t));
            auto pd = anisotropic_softmax(single_pixel(dn), Temperature(t));
            for (int i = 0; i < 8; ++i) {
                const double fd = (pu.at(0, 0, i) - pd.at(0, 0, i)) / (2 * h);
                REQUIRE_THAT(jac[i * 8 + j], WithinAbs(fd, 1e-6));
            }
        }
    }
}

TEST_CASE("uncertainty gradients against finite differences") {
    std::mt19937 gen(77);

    SECTION("uniform distribution is stationary for entropy") {
        auto vol = single_pixel(std::vector<double>(12, 0.4));
        auto g = grad_uncertainty_wrt_cost(vol, UncertaintyMetric(MetricKind::Entropy),
                                           Temperature(2.0));
        for (double v : g.values) REQUIRE_THAT(v, WithinAbs(0.0, 1e-14));
    }

    SECTION("each metric matches central differences away from ties") {
        for (auto kind : {MetricKind::Entropy, MetricKind::MSM, MetricKind::PER}) {
            UncertaintyMetric metric(kind, 0.5);
            int checked = 0;
            for (int trial = 0; trial < 12 && checked < 8; ++trial) {
                auto pc = random_pixel_case(gen);
                FdParams params{Temperature(16.0), metric, 0.0, nullptr, nullptr};
                FdReport rep;
                try {
                    rep = finite_difference_check(pc.cost, LossId::Uncertainty, params, 1e-5);
                } catch (const resample_error&) {
                    continue;
                }
                ++checked;
                INFO(metric_name(kind));
                REQUIRE(rep.max_rel_err < 1e-6);
            }
            REQUIRE(checked >= 8);
        }
    }

    SECTION("one descent step on a tilted two-peak distribution raises max prob") {
        // peaks at 1 and 3, slightly unequal so the saddle is left behind
        std::vector<double> costs = {2.0, 0.00, 2.0, 0.02, 2.0};
        auto vol = single_pixel(costs);
        const double t = 4.0;
        auto probs0 = anisotropic_softmax(vol, Temperature(t));
        const double max0 = probs0.at(0, 0, argmax_row(probs0.pixel(0, 0)));
        auto g = grad_uncertainty_wrt_cost(vol, UncertaintyMetric(MetricKind::Entropy),
                                           Temperature(t));
        CostVolume stepped = vol;
        for (std::size_t i = 0; i < stepped.costs.size(); ++i)
            stepped.costs[i] -= 0.05 * g.values[i];
        auto probs1 = anisotropic_softmax(stepped, Temperature(t));
        const double max1 = probs1.at(0, 0, argmax_row(probs1.pixel(0, 0)));
        REQUIRE(max1 > max0);
    }
}

TEST_CASE("gradients of softmax-backed losses sum to zero per pixel") {
    std::mt19937 gen(31);
    for (int trial = 0; trial < 10; ++trial) {
        auto pc = random_pixel_case(gen, 24);
        auto gs = grad_smooth_l1_wrt_cost(pc.cost, pc.gt, pc.mask, Temperature(8.0));
        double sum = 0.0;
        for (double v : gs.values) sum += v;
        REQUIRE_THAT(sum, WithinAbs(0.0, 1e-10));
        for (auto kind : {MetricKind::Entropy, MetricKind::MSM, MetricKind::PER}) {
            auto gu = grad_uncertainty_wrt_cost(pc.cost, UncertaintyMetric(kind, 0.5),
                                                Temperature(8.0));
            sum = 0.0;
            for (double v : gu.values) sum += v;
            REQUIRE_THAT(sum, WithinAbs(0.0, 1e-10));
        }
    }
}

TEST_CASE("entropy loss vanishes only at Dirac distributions") {
    ProbabilityVolume dirac(1, 1, 7);
    dirac.at(0, 0, 5) = 1.0;
    ValidityMask all(1, 1, true);
    REQUIRE(uncertainty_loss(dirac, UncertaintyMetric(MetricKind::Entropy), all) == 0.0);

    std::mt19937 gen(17);
    std::uniform_real_distribution<double> dist(0.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> p(8, 0.0);
        const double eps = 1e-6;
        p[1] = eps;
        p[4] = 1.0 - eps;
        ProbabilityVolume v(1, 1, 7);
        for (int i = 0; i < 8; ++i) v.at(0, 0, i) = p[i];
        REQUIRE(uncertainty_loss(v, UncertaintyMetric(MetricKind::Entropy), all) > 0.0);
    }
}

TEST_CASE("combined loss") {
    std::mt19937 gen(55);
    SECTION("lambda = 0 reduces to the source term") {
        auto src = random_pixel_case(gen, 16);
        auto tgt = random_pixel_case(gen, 16);
        LossConfig cfg(Temperature(4.0), 0.0, UncertaintyMetric(MetricKind::PER));
        auto out = combined_loss(src.cost, src.gt, src.mask, tgt.cost, cfg);
        REQUIRE(out.total == out.source);
    }
    SECTION("perfect source prediction and Dirac target give zero total") {
        std::vector<double> src_costs(16, 80.0);
        src_costs[6] = 0.0;
        auto src = single_pixel(src_costs);
        DisparityMap gt(1, 1);
        gt.at(0, 0) = 6.0;
        ValidityMask mask(1, 1, true);
        std::vector<double> tgt_costs(16, 80.0);
        tgt_costs[2] = 0.0;
        auto tgt = single_pixel(tgt_costs);
        LossConfig cfg = LossConfig::with_default_lambda(Temperature(16.0),
                                                         UncertaintyMetric(MetricKind::Entropy));
        auto out = combined_loss(src, gt, mask, tgt, cfg);
        REQUIRE(out.total == 0.0);
    }
    SECTION("random instance recomposes from the two sub-losses") {
        auto src = random_pixel_case(gen, 20);
        auto tgt = random_pixel_case(gen, 20);
        LossConfig cfg(Temperature(16.0), 0.5, UncertaintyMetric(MetricKind::MSM));
        auto out = combined_loss(src.cost, src.gt, src.mask, tgt.cost, cfg);
        const double ls = smooth_l1_loss_on_volume(src.cost, src.gt, src.mask, cfg.t);
        ValidityMask all(1, 1, true);
        const double lu =
            uncertainty_loss(anisotropic_softmax(tgt.cost, cfg.t), cfg.metric, all);
        REQUIRE_THAT(out.source, WithinAbs(ls, 1e-15));
        REQUIRE_THAT(out.target, WithinAbs(lu, 1e-15));
        REQUIRE_THAT(out.total, WithinAbs(ls + 0.5 * lu, 1e-15));
    }
    REQUIRE_THROWS_AS(LossConfig(Temperature(1.0), -0.1, UncertaintyMetric(MetricKind::MSM)),
                      invalid_input_error);
}

TEST_CASE("finite-difference harness") {
    SECTION("linear loss agrees to round-off") {
        // L = sum a_j C(j): central differences are exact on linear functions
        std::mt19937 gen(8);
        std::uniform_real_distribution<double> dist(-1.0, 1.0);
        CostVolume vol(1, 1, 15);
        std::vector<double> a(16);
        for (auto& x : a) x = dist(gen);
        for (auto& c : vol.costs) c = dist(gen) + 1.5;
        auto loss = [&a](const CostVolume& c) {
            double s = 0.0;
            for (int i = 0; i <= c.d_max; ++i) s += a[i] * c.at(0, 0, i);
            return s;
        };
        GradientVolume analytic(1, 1, 15);
        for (int i = 0; i < 16; ++i) analytic.at(0, 0, i) = a[i];
        auto rep = finite_difference_check(vol, loss, analytic, 1e-5);
        REQUIRE(rep.max_abs_err < 1e-9);
        REQUIRE(rep.max_rel_err < 1e-9);
    }
    SECTION("kink proximity raises the resample signal") {
        std::vector<double> costs(8, 3.0);
        costs[4] = 0.0;
        auto vol = single_pixel(costs);
        DisparityMap gt(1, 1);
        ValidityMask mask(1, 1, true);
        auto probs = anisotropic_softmax(vol, Temperature(16.0));
        gt.at(0, 0) = soft_argmin_row(probs.pixel(0, 0)) - 1.0;  // residual exactly 1
        FdParams params{Temperature(16.0), UncertaintyMetric(MetricKind::Entropy), 0.0, &gt,
                        &mask};
        REQUIRE_THROWS_AS(finite_difference_check(vol, LossId::SmoothL1, params, 1e-5),
                          resample_error);
    }
    SECTION("argmax tie proximity raises the resample signal for MSM") {
        std::vector<double> costs(8, 2.0);
        costs[1] = 0.5;
        costs[6] = 0.5;  // exact tie
        auto vol = single_pixel(costs);
        FdParams params{Temperature(4.0), UncertaintyMetric(MetricKind::MSM), 0.0, nullptr,
                        nullptr};
        REQUIRE_THROWS_AS(finite_difference_check(vol, LossId::Uncertainty, params, 1e-5),
                          resample_error);
    }
    SECTION("combined loss checks out end to end") {
        std::mt19937 gen(12);
        int checked = 0;
        for (int trial = 0; trial < 10 && checked < 4; ++trial) {
            auto pc = random_pixel_case(gen, 24);
            FdParams params{Temperature(16.0), UncertaintyMetric(MetricKind::Entropy), 0.125,
                            &pc.gt, &pc.mask};
            try {
                auto rep = finite_difference_check(pc.cost, LossId::Combined, params, 1e-5);
                REQUIRE(rep.max_rel_err < 1e-6);
                ++checked;
            } catch (const resample_error&) {
            }
        }
        REQUIRE(checked >= 4);
    }
}
