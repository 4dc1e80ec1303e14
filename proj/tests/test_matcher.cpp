#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>

#include <softdisp/matcher.hpp>
#include <softdisp/uncertainty.hpp>
#include <softdisp/volume.hpp>

using namespace softdisp;

namespace {

SceneSpec constant_scene(int disparity, double sigma, std::uint32_t seed) {
    SceneSpec spec;
    spec.width = 96;
    spec.height = 64;
    spec.d_max = 32;
    spec.noise_sigma = sigma;
    spec.seed = seed;
    spec.pattern.type = PatternType::Constant;
    spec.pattern.disparity = disparity;
    return spec;
}

SceneSpec two_layer_scene(double sigma, std::uint32_t seed) {
    SceneSpec spec;
    spec.width = 128;
    spec.height = 96;
    spec.d_max = 32;
    spec.noise_sigma = sigma;
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

/// accuracy of hard argmin against gt over valid pixels at least `border`
/// away from the image edge
double argmin_accuracy(const CostVolume& vol, const Stereogram& sg, int border) {
    long long hits = 0, total = 0;
    for (int y = border; y < sg.gt.height - border; ++y)
        for (int x = border; x < sg.gt.width - border; ++x) {
            if (!sg.mask.at(y, x)) continue;
            ++total;
            if (hard_argmin_row(vol.pixel(y, x)) == static_cast<int>(sg.gt.at(y, x))) ++hits;
        }
    return total ? double(hits) / double(total) : 0.0;
}

}  // namespace

TEST_CASE("stereogram generation") {
    SECTION("constant disparity: gt flat, leftmost columns invalid") {
        auto sg = generate_stereogram(constant_scene(8, 0.0, 1));
        for (int y = 0; y < sg.gt.height; ++y)
            for (int x = 0; x < sg.gt.width; ++x) {
                REQUIRE(sg.gt.at(y, x) == 8.0);
                REQUIRE(sg.mask.at(y, x) == (x >= 8 ? 1 : 0));
            }
        // shifted copy: right(x-8) == left(x) wherever valid
        for (int y = 0; y < sg.gt.height; ++y)
            for (int x = 8; x < sg.gt.width; ++x)
                REQUIRE(sg.pair.right.at(y, x - 8) == sg.pair.left.at(y, x));
    }
    SECTION("fixed seed reproduces everything bitwise") {
        auto a = generate_stereogram(two_layer_scene(20.0, 7));
        auto b = generate_stereogram(two_layer_scene(20.0, 7));
        REQUIRE(a.pair.left.pixels == b.pair.left.pixels);
        REQUIRE(a.pair.right.pixels == b.pair.right.pixels);
        REQUIRE(a.gt.values == b.gt.values);
        REQUIRE(a.mask.valid == b.mask.valid);
        auto c = generate_stereogram(two_layer_scene(20.0, 8));
        REQUIRE(a.pair.left.pixels != c.pair.left.pixels);
    }
    SECTION("clean and noisy share geometry and left image for one seed") {
        auto clean = generate_stereogram(two_layer_scene(0.0, 7));
        auto noisy = generate_stereogram(two_layer_scene(20.0, 7));
        REQUIRE(clean.pair.left.pixels == noisy.pair.left.pixels);
        REQUIRE(clean.gt.values == noisy.gt.values);
        REQUIRE(clean.mask.valid == noisy.mask.valid);
        REQUIRE(clean.pair.right.pixels != noisy.pair.right.pixels);
    }
    SECTION("two-layer occlusion band sits left of the foreground, width = disparity gap") {
        auto sg = generate_stereogram(two_layer_scene(0.0, 7));
        // background rows: occluded band covers x in [rect_x - (20-8), rect_x)
        for (int y = 30; y < 60; ++y) {
            for (int x = 0; x < sg.gt.width; ++x) {
                const bool out_of_frame = x < 8 && sg.gt.at(y, x) == 8.0;
                const bool occluded = x >= 20 && x < 32;
                const bool expect_invalid = out_of_frame || occluded;
                INFO("y=" << y << " x=" << x);
                REQUIRE(sg.mask.at(y, x) == (expect_invalid ? 0 : 1));
            }
        }
    }
    SECTION("pattern disparity beyond d_max is rejected") {
        auto spec = constant_scene(8, 0.0, 1);
        spec.pattern.disparity = 40;
        REQUIRE_THROWS_AS(generate_stereogram(spec), invalid_input_error);
    }
}

TEST_CASE("SAD cost volume") {
    SECTION("noise-free constant scene: argmin recovers gt on >= 99% interior") {
        auto sg = generate_stereogram(constant_scene(8, 0.0, 3));
        auto [vol, mask] = sad_cost_volume(sg.pair, 32, 9);
        REQUIRE(argmin_accuracy(vol, sg, 4) >= 0.99);
    }
    SECTION("identical images put the argmin at disparity 0") {
        auto sg = generate_stereogram(constant_scene(8, 0.0, 5));
        StereoPair same{sg.pair.left, sg.pair.left};
        auto [vol, mask] = sad_cost_volume(same, 16, 5);
        for (int y = 10; y < 20; ++y)
            for (int x = 40; x < 60; ++x) REQUIRE(hard_argmin_row(vol.pixel(y, x)) == 0);
    }
    SECTION("window 1 on a noise-free pair hits cost exactly 0 at the match") {
        auto sg = generate_stereogram(constant_scene(6, 0.0, 9));
        auto [vol, mask] = sad_cost_volume(sg.pair, 16, 1);
        for (int y = 5; y < 15; ++y)
            for (int x = 30; x < 50; ++x)
                if (sg.mask.at(y, x)) REQUIRE(vol.at(y, x, 6) == 0.0);
    }
    SECTION("out-of-frame hypotheses carry the sentinel") {
        auto sg = generate_stereogram(constant_scene(4, 0.0, 2));
        auto [vol, mask] = sad_cost_volume(sg.pair, 8, 3);
        REQUIRE(vol.at(10, 2, 5) == kSentinelCost);
        REQUIRE(vol.at(10, 2, 2) != kSentinelCost);
    }
    SECTION("argument validation") {
        auto sg = generate_stereogram(constant_scene(4, 0.0, 2));
        REQUIRE_THROWS_AS(sad_cost_volume(sg.pair, 96, 9), invalid_input_error);   // d_max >= w
        REQUIRE_THROWS_AS(sad_cost_volume(sg.pair, 16, 4), invalid_input_error);   // even window
        StereoPair bad{sg.pair.left, Image8(10, 10)};
        REQUIRE_THROWS_AS(sad_cost_volume(bad, 8, 3), invalid_input_error);
    }
}

TEST_CASE("census cost volume") {
    SECTION("identical images give zero cost at disparity 0") {
        auto sg = generate_stereogram(constant_scene(8, 0.0, 11));
        StereoPair same{sg.pair.left, sg.pair.left};
        auto [vol, mask] = census_cost_volume(same, 16, 5);
        for (int y = 8; y < 16; ++y)
            for (int x = 40; x < 56; ++x) REQUIRE(vol.at(y, x, 0) == 0.0);
    }
    SECTION("hand-computed 3x3 census Hamming distance") {
        // left patch centered at (1,1):      right patch centered at (1,1):
        //   10 20 30                            10 20 30
        //   40 50 60                            40 50 60
        //   70 80 90                            70 80 10
        // codes differ in exactly the bottom-right bit: (90 < 50) = 0 versus
        // (10 < 50) = 1, so the normalized cost is 1/8.
        Image8 left(3, 3), right(3, 3);
        const std::uint8_t vals[9] = {10, 20, 30, 40, 50, 60, 70, 80, 90};
        for (int i = 0; i < 9; ++i) {
            left.pixels[i] = vals[i];
            right.pixels[i] = vals[i];
        }
        right.at(2, 2) = 10;
        auto [vol, mask] = census_cost_volume({left, right}, 1, 3);
        REQUIRE(vol.at(1, 1, 0) == 1.0 / 8.0);
    }
    SECTION("census shrugs off a +30 brightness shift that wrecks SAD") {
        auto sg = generate_stereogram(constant_scene(8, 0.0, 7));
        StereoPair shifted = sg.pair;
        for (auto& px : shifted.right.pixels)
            px = static_cast<std::uint8_t>(std::min(255, int(px) + 30));
        auto [cvol, cmask] = census_cost_volume(shifted, 32, 9);
        auto [svol, smask] = sad_cost_volume(shifted, 32, 9);
        const double census_acc = argmin_accuracy(cvol, sg, 4);
        const double sad_acc = argmin_accuracy(svol, sg, 4);
        REQUIRE(census_acc >= 0.95);
        REQUIRE(sad_acc < census_acc);
    }
    SECTION("window 1 has no code bits and is rejected") {
        auto sg = generate_stereogram(constant_scene(4, 0.0, 2));
        REQUIRE_THROWS_AS(census_cost_volume(sg.pair, 8, 1), invalid_input_error);
    }
}

TEST_CASE("noise-free benchmark accuracy for both matchers") {
    auto sg = generate_stereogram(constant_scene(8, 0.0, 7));
    auto [sad, m1] = sad_cost_volume(sg.pair, 32, 9);
    auto [cen, m2] = census_cost_volume(sg.pair, 32, 9);
    REQUIRE(argmin_accuracy(sad, sg, 4) >= 0.99);
    REQUIRE(argmin_accuracy(cen, sg, 4) >= 0.99);
}

TEST_CASE("domain shift raises mean entropy of the t=1 readout") {
    auto clean = generate_stereogram(two_layer_scene(0.0, 7));
    auto noisy = generate_stereogram(two_layer_scene(20.0, 7));
    auto [vc, mc] = sad_cost_volume(clean.pair, 32, 9);
    auto [vn, mn] = sad_cost_volume(noisy.pair, 32, 9);
    auto pc = anisotropic_softmax(vc, Temperature(1.0));
    auto pn = anisotropic_softmax(vn, Temperature(1.0));
    const double hc = uncertainty_loss(pc, UncertaintyMetric(MetricKind::Entropy), clean.mask);
    const double hn = uncertainty_loss(pn, UncertaintyMetric(MetricKind::Entropy), noisy.mask);
    REQUIRE(hn > hc);
}

TEST_CASE("cost volumes are reproducible bitwise") {
    auto a = generate_stereogram(two_layer_scene(20.0, 42));
    auto b = generate_stereogram(two_layer_scene(20.0, 42));
    auto [va, ma] = sad_cost_volume(a.pair, 32, 9);
    auto [vb, mb] = sad_cost_volume(b.pair, 32, 9);
    REQUIRE(va.costs == vb.costs);
    auto [ca, cma] = census_cost_volume(a.pair, 32, 9);
    auto [cb, cmb] = census_cost_volume(b.pair, 32, 9);
    REQUIRE(ca.costs == cb.costs);
}
