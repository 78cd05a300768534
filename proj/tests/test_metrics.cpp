#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "partialseg/metrics.hpp"
#include "partialseg/rng.hpp"

using namespace partialseg;

namespace {

LabelMask mask_from(const std::vector<int>& values, int h, int w, int classes) {
    LabelMask mask(h, w, classes);
    mask.labels = values;
    return mask;
}

LabelSpace make_space(int n) {
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) names.push_back("c" + std::to_string(i));
    return LabelSpace(std::move(names));
}

}  // namespace

TEST_CASE("argmax prediction with low-index tie break") {
    ProbMap probs{PixelField(1, 3, 3), {}};
    double rows[3][3] = {{0.2, 0.3, 0.5}, {0.5, 0.5, 0.0}, {0.0, 0.0, 1.0}};
    for (int p = 0; p < 3; ++p)
        for (int n = 0; n < 3; ++n) probs.values.pixel(p)[n] = rows[p][n];
    const LabelMask pred = argmax_predict(probs);
    CHECK(pred.labels == std::vector<int>{2, 0, 2});
}

TEST_CASE("dice coefficient") {
    const LabelMask a = mask_from({1, 1, 0, 0}, 2, 2, 2);
    const LabelMask b = mask_from({1, 1, 0, 0}, 2, 2, 2);
    CHECK(dice_coefficient(a, b, 1) == 1.0);

    const LabelMask disjoint = mask_from({0, 0, 1, 1}, 2, 2, 2);
    CHECK(dice_coefficient(a, disjoint, 1) == 0.0);

    // |A| = |B| = 4, overlap 2
    const LabelMask c = mask_from({1, 1, 1, 1, 0, 0, 0, 0}, 2, 4, 2);
    const LabelMask d = mask_from({0, 0, 1, 1, 1, 1, 0, 0}, 2, 4, 2);
    CHECK(dice_coefficient(c, d, 1) == 0.5);

    SUBCASE("both empty means 1") {
        CHECK(dice_coefficient(mask_from({0, 0}, 1, 2, 2), mask_from({0, 0}, 1, 2, 2), 1) == 1.0);
    }
    SUBCASE("shape mismatch") {
        CHECK_THROWS_AS(dice_coefficient(a, mask_from({0}, 1, 1, 2), 1), ShapeMismatch);
    }
}

TEST_CASE("hausdorff distance") {
    SUBCASE("identical sets") {
        const LabelMask a = mask_from({1, 0, 0, 1}, 2, 2, 2);
        CHECK(hausdorff_distance(a, a, 1) == 0.0);
    }
    SUBCASE("3-4-5 triangle") {
        LabelMask a(5, 5, 2), b(5, 5, 2);
        a.at(0, 0) = 1;
        b.at(3, 4) = 1;
        CHECK(hausdorff_distance(a, b, 1) == doctest::Approx(5.0));
    }
    SUBCASE("directed asymmetry") {
        LabelMask a(1, 4, 2), b(1, 4, 2);
        a.at(0, 0) = 1;
        b.at(0, 0) = 1;
        b.at(0, 3) = 1;
        CHECK(hausdorff_distance(a, b, 1) == doctest::Approx(3.0));
    }
    SUBCASE("empty set sentinel is the image diagonal") {
        const LabelMask empty(4, 3, 2);
        const LabelMask some = mask_from({1, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0}, 4, 3, 2);
        const HausdorffResult result = hausdorff_distance_checked(some, empty, 1);
        CHECK(result.sentinel);
        CHECK(result.distance == doctest::Approx(std::hypot(4.0, 3.0)));
    }
}

TEST_CASE("metric properties on random masks") {
    Rng rng(73);
    for (int trial = 0; trial < 60; ++trial) {
        const int h = rng.uniform_int(1, 12);
        const int w = rng.uniform_int(1, 12);
        LabelMask a(h, w, 3), b(h, w, 3);
        for (int& v : a.labels) v = rng.uniform_int(0, 2);
        for (int& v : b.labels) v = rng.uniform_int(0, 2);

        // symmetry
        CHECK(dice_coefficient(a, b, 1) == dice_coefficient(b, a, 1));
        CHECK(hausdorff_distance(a, b, 1) == hausdorff_distance(b, a, 1));

        // brute-force equivalence
        CHECK(dice_coefficient(a, b, 1) == oracle::dice_bruteforce(a, b, 1));
        CHECK(std::fabs(hausdorff_distance(a, b, 1) - oracle::hausdorff_bruteforce(a, b, 1)) <=
              1e-9);
    }
}

TEST_CASE("hausdorff translation invariance") {
    Rng rng(79);
    for (int trial = 0; trial < 20; ++trial) {
        LabelMask a(10, 10, 2), b(10, 10, 2);
        for (int k = 0; k < 5; ++k) {
            a.at(rng.uniform_int(0, 5), rng.uniform_int(0, 5)) = 1;
            b.at(rng.uniform_int(0, 5), rng.uniform_int(0, 5)) = 1;
        }
        LabelMask a_shift(10, 10, 2), b_shift(10, 10, 2);
        for (int y = 0; y < 6; ++y)
            for (int x = 0; x < 6; ++x) {
                a_shift.at(y + 3, x + 3) = a.at(y, x);
                b_shift.at(y + 3, x + 3) = b.at(y, x);
            }
        CHECK(hausdorff_distance(a, b, 1) ==
              doctest::Approx(hausdorff_distance(a_shift, b_shift, 1)).epsilon(1e-12));
    }
}

TEST_CASE("dice equals one iff masks identical, hausdorff zero iff identical non-empty") {
    const LabelMask a = mask_from({1, 0, 1, 0}, 2, 2, 2);
    const LabelMask b = mask_from({1, 0, 0, 1}, 2, 2, 2);
    CHECK(dice_coefficient(a, a, 1) == 1.0);
    CHECK(dice_coefficient(a, b, 1) < 1.0);
    CHECK(hausdorff_distance(a, a, 1) == 0.0);
    CHECK(hausdorff_distance(a, b, 1) > 0.0);
}

TEST_CASE("evaluate_dataset scores only annotated classes") {
    const LabelSpace space = make_space(4);

    // two tiny samples with the same layout
    Sample sample;
    sample.id = "s0";
    sample.image = PixelField(2, 4, 1);
    sample.gt_full = mask_from({0, 1, 2, 3, 0, 1, 2, 3}, 2, 4, 4);

    SUBCASE("fully labeled dataset, perfect predictions") {
        DatasetDescriptor desc("F", DatasetRole::Full, {1, 2, 3}, identity_partition(space));
        sample.gt_visible = project_labels(sample.gt_full, desc.partition);
        const MetricsReport report =
            evaluate_dataset({sample.gt_full}, {&sample}, desc);
        REQUIRE(report.per_class_dice.size() == 3);
        for (const auto& [cls, dice] : report.per_class_dice) CHECK(dice == 1.0);
        for (const auto& [cls, hd] : report.per_class_hausdorff) CHECK(hd == 0.0);
        CHECK(report.mean_dice == 1.0);
    }

    SUBCASE("partial dataset keeping one class reports exactly one entry") {
        DatasetDescriptor desc("P2", DatasetRole::Partial, {2},
                               single_organ_partition(space, {2}));
        sample.gt_visible = project_labels(sample.gt_full, desc.partition);
        const MetricsReport report = evaluate_dataset({sample.gt_full}, {&sample}, desc);
        REQUIRE(report.per_class_dice.size() == 1);
        CHECK(report.per_class_dice.count(2) == 1);
        CHECK(report.per_class_dice.at(2) == 1.0);

        // a prediction mistaking unlabeled organs for background still
        // scores perfectly on the kept class
        LabelMask merged_elsewhere = sample.gt_full;
        for (int& v : merged_elsewhere.labels)
            if (v == 1 || v == 3) v = 0;
        CHECK(evaluate_dataset({merged_elsewhere}, {&sample}, desc).per_class_dice.at(2) == 1.0);
    }

    SUBCASE("a far false-positive blob barely moves dice but jumps hausdorff") {
        const LabelSpace big_space = make_space(2);
        DatasetDescriptor desc("F", DatasetRole::Full, {1}, identity_partition(big_space));

        Sample wide;
        wide.id = "s1";
        wide.image = PixelField(32, 32, 1);
        wide.gt_full = LabelMask(32, 32, 2);
        for (int y = 2; y < 12; ++y)
            for (int x = 2; x < 12; ++x) wide.gt_full.at(y, x) = 1;
        wide.gt_visible = project_labels(wide.gt_full, desc.partition);

        LabelMask pred = wide.gt_full;
        pred.at(30, 30) = 1;  // one stray pixel far away

        const MetricsReport clean = evaluate_dataset({wide.gt_full}, {&wide}, desc);
        const MetricsReport noisy = evaluate_dataset({pred}, {&wide}, desc);
        CHECK(clean.per_class_dice.at(1) == 1.0);
        CHECK(noisy.per_class_dice.at(1) > 0.98);
        CHECK(clean.per_class_hausdorff.at(1) == 0.0);
        CHECK(noisy.per_class_hausdorff.at(1) >
              oracle::hausdorff_bruteforce(pred, wide.gt_full, 1) - 1e-9);
        CHECK(noisy.per_class_hausdorff.at(1) > 20.0);
    }
}
