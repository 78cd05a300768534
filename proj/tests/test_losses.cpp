#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "partialseg/gradcheck.hpp"
#include "partialseg/losses.hpp"
#include "partialseg/rng.hpp"

using namespace partialseg;

namespace {

LabelSpace make_space(int n) {
    std::vector<std::string> names;
    for (int i = 0; i < n; ++i) names.push_back("c" + std::to_string(i));
    return LabelSpace(std::move(names));
}

// single-pixel probability map built directly (no softmax)
ProbMap prob_pixel(const std::vector<double>& p) {
    ProbMap probs{PixelField(1, 1, static_cast<int>(p.size())), {}};
    for (std::size_t n = 0; n < p.size(); ++n) probs.values.data()[n] = p[n];
    return probs;
}

LogitMap logit_pixel(const std::vector<double>& a) {
    LogitMap logits(1, 1, static_cast<int>(a.size()));
    for (std::size_t n = 0; n < a.size(); ++n) logits.data()[n] = a[n];
    return logits;
}

LabelMask mask_pixel(int label, int classes, const std::string& space = {}) {
    LabelMask mask(1, 1, classes, space);
    mask.labels[0] = label;
    return mask;
}

LogitMap random_logits(int h, int w, int c, Rng& rng, double amplitude = 4.0) {
    LogitMap logits(h, w, c);
    for (std::size_t i = 0; i < logits.size(); ++i)
        logits.data()[i] = rng.uniform(-amplitude, amplitude);
    return logits;
}

LabelMask random_mask(int h, int w, int classes, Rng& rng, const std::string& space = {}) {
    LabelMask mask(h, w, classes, space);
    for (int& v : mask.labels) v = rng.uniform_int(0, classes - 1);
    return mask;
}

}  // namespace

TEST_CASE("softmax basics") {
    SUBCASE("uniform logits give uniform probabilities") {
        const ProbMap probs = softmax(logit_pixel({0.0, 0.0, 0.0}));
        for (int n = 0; n < 3; ++n) CHECK(probs.values.data()[n] == doctest::Approx(1.0 / 3));
    }
    SUBCASE("analytic exponentials") {
        const ProbMap probs = softmax(logit_pixel({std::log(2.0), 0.0, 0.0}));
        CHECK(probs.values.data()[0] == doctest::Approx(0.5));
        CHECK(probs.values.data()[1] == doctest::Approx(0.25));
        CHECK(probs.values.data()[2] == doctest::Approx(0.25));
    }
    SUBCASE("shift invariance") {
        Rng rng(11);
        for (int trial = 0; trial < 20; ++trial) {
            const double shift = rng.uniform(-50.0, 50.0);
            const LogitMap base = random_logits(2, 3, 4, rng);
            LogitMap shifted = base;
            for (std::size_t i = 0; i < shifted.size(); ++i) shifted.data()[i] += shift;
            const ProbMap a = softmax(base);
            const ProbMap b = softmax(shifted);
            for (std::size_t i = 0; i < a.values.size(); ++i)
                CHECK(a.values.data()[i] == doctest::Approx(b.values.data()[i]).epsilon(1e-12));
        }
    }
    SUBCASE("probabilities normalize even for extreme logits") {
        const ProbMap probs = softmax(logit_pixel({1000.0, -1000.0, 0.0}));
        CHECK(probs.values.data()[0] == doctest::Approx(1.0));
        double sum = 0.0;
        for (int n = 0; n < 3; ++n) sum += probs.values.data()[n];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("non-finite input") {
        CHECK_THROWS_AS(softmax(logit_pixel({std::nan(""), 0.0})), NonFiniteInput);
    }
}

TEST_CASE("marginal_prob sums member probabilities") {
    const LabelSpace space = make_space(3);
    const MergePartition partition(space, {{0, 1}, {2}});

    const ProbMap probs = prob_pixel({0.2, 0.3, 0.5});
    const ProbMap merged = marginal_prob(probs, partition);
    CHECK(merged.values.data()[0] == doctest::Approx(0.5));
    CHECK(merged.values.data()[1] == doctest::Approx(0.5));
    CHECK(merged.space == partition.id());

    SUBCASE("identity partition is a no-op") {
        const MergePartition identity = identity_partition(space);
        const ProbMap same = marginal_prob(probs, identity);
        for (int n = 0; n < 3; ++n)
            CHECK(same.values.data()[n] == probs.values.data()[n]);
    }
    SUBCASE("single group absorbs all mass") {
        const MergePartition all(space, {{0, 1, 2}});
        CHECK(marginal_prob(probs, all).values.data()[0] == doctest::Approx(1.0));
    }
    SUBCASE("normalization is preserved on random softmax outputs") {
        Rng rng(5);
        for (int trial = 0; trial < 50; ++trial) {
            const ProbMap random = softmax(random_logits(3, 3, 3, rng));
            const ProbMap q = marginal_prob(random, partition);
            for (int p = 0; p < q.values.num_pixels(); ++p) {
                double sum = 0.0;
                for (int m = 0; m < q.num_classes(); ++m) sum += q.values.pixel(p)[m];
                CHECK(std::fabs(sum - 1.0) < 1e-9);
            }
        }
    }
    SUBCASE("merged input rejected") {
        const ProbMap merged_in = marginal_prob(probs, partition);
        CHECK_THROWS_AS(marginal_prob(merged_in, partition), SpaceMismatch);
    }
}

TEST_CASE("regular cross-entropy value and gradient") {
    SUBCASE("perfect prediction scores zero") {
        const ProbMap probs = softmax(logit_pixel({100.0, 0.0, 0.0}));
        CHECK(regular_ce(probs, mask_pixel(0, 3)).value == doctest::Approx(0.0).epsilon(1e-9));
    }
    SUBCASE("uniform prediction scores ln 3") {
        const ProbMap probs = prob_pixel({1.0 / 3, 1.0 / 3, 1.0 / 3});
        CHECK(regular_ce(probs, mask_pixel(1, 3)).value == doctest::Approx(std::log(3.0)));
    }
    SUBCASE("gradient is p minus one-hot") {
        const ProbMap probs = prob_pixel({0.2, 0.3, 0.5});
        const LossReport report = regular_ce(probs, mask_pixel(0, 3));
        CHECK(report.gradient.data()[0] == doctest::Approx(-0.8));
        CHECK(report.gradient.data()[1] == doctest::Approx(0.3));
        CHECK(report.gradient.data()[2] == doctest::Approx(0.5));
    }
    SUBCASE("value matches the oracle on random inputs") {
        Rng rng(17);
        for (int trial = 0; trial < 30; ++trial) {
            const ProbMap probs = softmax(random_logits(4, 5, 4, rng));
            const LabelMask target = random_mask(4, 5, 4, rng);
            CHECK(regular_ce(probs, target).value ==
                  doctest::Approx(oracle::regular_ce_value(probs, target)).epsilon(1e-12));
        }
    }
    SUBCASE("merged target rejected") {
        const ProbMap probs = prob_pixel({0.5, 0.5});
        CHECK_THROWS_AS(regular_ce(probs, mask_pixel(0, 2, "2:0|1")), SpaceMismatch);
    }
}

TEST_CASE("regular dice value and gradient") {
    SUBCASE("perfect overlap scores ~0 per class") {
        ProbMap probs{PixelField(2, 2, 2), {}};
        LabelMask target(2, 2, 2);
        target.labels = {0, 1, 1, 0};
        for (int p = 0; p < 4; ++p) {
            probs.values.pixel(p)[target.labels[p]] = 1.0;
        }
        CHECK(regular_dice(probs, target).value < 2 * 2e-5);
    }
    SUBCASE("disjoint masks score ~1 per class") {
        ProbMap probs{PixelField(1, 4, 2), {}};
        LabelMask target(1, 4, 2);  // all background
        for (int p = 0; p < 4; ++p) probs.values.pixel(p)[1] = 1.0;
        CHECK(regular_dice(probs, target).value == doctest::Approx(2.0).epsilon(1e-4));
    }
    SUBCASE("four true positives plus four false positives give fg loss 1/3") {
        // 12 pixels: GT foreground on the first 4, prediction on the first 8.
        ProbMap probs{PixelField(1, 12, 2), {}};
        LabelMask target(1, 12, 2);
        for (int p = 0; p < 12; ++p) {
            target.labels[p] = p < 4 ? 1 : 0;
            probs.values.pixel(p)[p < 8 ? 1 : 0] = 1.0;
        }
        // oracle-computed golden: fg DSC = 8/12, per-class loss 1/3 (both classes here)
        const double expected = oracle::regular_dice_value(probs, target);
        const LossReport report = regular_dice(probs, target);
        CHECK(report.value == doctest::Approx(expected).epsilon(1e-12));
        CHECK(report.value == doctest::Approx(2.0 / 3.0).epsilon(1e-4));
    }
    SUBCASE("value matches the oracle on random inputs") {
        Rng rng(23);
        for (int trial = 0; trial < 30; ++trial) {
            const ProbMap probs = softmax(random_logits(5, 4, 5, rng));
            const LabelMask target = random_mask(5, 4, 5, rng);
            CHECK(regular_dice(probs, target).value ==
                  doctest::Approx(oracle::regular_dice_value(probs, target)).epsilon(1e-12));
        }
    }
}

TEST_CASE("marginal cross-entropy") {
    const LabelSpace space = make_space(3);
    const MergePartition partition(space, {{0, 1}, {2}});

    SUBCASE("merged probability feeds the log") {
        const ProbMap probs = prob_pixel({0.2, 0.3, 0.5});
        const LossReport report =
            marginal_ce(probs, mask_pixel(0, 2, partition.id()), partition);
        CHECK(report.value == doctest::Approx(-std::log(0.5)));
    }
    SUBCASE("closed-form gradient matches the worked example and sums to zero") {
        const ProbMap probs = prob_pixel({0.2, 0.3, 0.5});
        const LossReport report =
            marginal_ce(probs, mask_pixel(0, 2, partition.id()), partition);
        CHECK(report.gradient.data()[0] == doctest::Approx(-0.2));
        CHECK(report.gradient.data()[1] == doctest::Approx(-0.3));
        CHECK(report.gradient.data()[2] == doctest::Approx(0.5));
        CHECK(report.gradient.data()[0] + report.gradient.data()[1] + report.gradient.data()[2] ==
              doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("identity partition reproduces regular CE exactly") {
        Rng rng(31);
        const MergePartition identity = identity_partition(space);
        for (int trial = 0; trial < 100; ++trial) {
            const ProbMap probs = softmax(random_logits(3, 3, 3, rng));
            const LabelMask target = random_mask(3, 3, 3, rng);
            LabelMask merged = target;
            merged.space = identity.id();
            const LossReport regular = regular_ce(probs, target);
            const LossReport marginal = marginal_ce(probs, merged, identity);
            CHECK(std::fabs(regular.value - marginal.value) <= 1e-12);
            for (std::size_t i = 0; i < regular.gradient.size(); ++i)
                CHECK(std::fabs(regular.gradient.data()[i] - marginal.gradient.data()[i]) <=
                      1e-12);
        }
    }
    SUBCASE("closed form equals generic chain rule to 1e-12") {
        Rng rng(37);
        for (int trial = 0; trial < 50; ++trial) {
            LossTrial t = make_loss_trial("marginal_ce", rng);
            const ProbMap probs = softmax(t.fixture->logits);
            const LossReport report =
                marginal_ce(probs, t.fixture->target, t.fixture->partition);
            const PixelField generic = oracle::marginal_ce_generic_gradient(
                probs, t.fixture->target, t.fixture->partition);
            for (std::size_t i = 0; i < generic.size(); ++i)
                CHECK(std::fabs(report.gradient.data()[i] - generic.data()[i]) <= 1e-12);
        }
    }
    SUBCASE("wrong-space target rejected") {
        const ProbMap probs = prob_pixel({0.2, 0.3, 0.5});
        CHECK_THROWS_AS(marginal_ce(probs, mask_pixel(0, 3), partition), SpaceMismatch);
    }
}

TEST_CASE("marginal dice") {
    const LabelSpace space = make_space(3);
    const MergePartition partition(space, {{0, 1}, {2}});

    SUBCASE("identity partition reproduces regular dice exactly") {
        Rng rng(41);
        const MergePartition identity = identity_partition(space);
        for (int trial = 0; trial < 100; ++trial) {
            const ProbMap probs = softmax(random_logits(3, 4, 3, rng));
            const LabelMask target = random_mask(3, 4, 3, rng);
            LabelMask merged = target;
            merged.space = identity.id();
            const LossReport regular = regular_dice(probs, target);
            const LossReport marginal = marginal_dice(probs, merged, identity);
            CHECK(std::fabs(regular.value - marginal.value) <= 1e-12);
            for (std::size_t i = 0; i < regular.gradient.size(); ++i)
                CHECK(std::fabs(regular.gradient.data()[i] - marginal.gradient.data()[i]) <=
                      1e-12);
        }
    }
    SUBCASE("exact merged one-hot prediction scores ~0") {
        ProbMap probs{PixelField(2, 2, 3), {}};
        LabelMask target(2, 2, 2, partition.id());
        target.labels = {0, 1, 1, 0};
        for (int p = 0; p < 4; ++p) {
            // put the mass on some member of the target group
            probs.values.pixel(p)[target.labels[p] == 0 ? 1 : 2] = 1.0;
        }
        CHECK(marginal_dice(probs, target, partition).value < 2 * 2e-5);
    }
    SUBCASE("empty group convention: absent group contributes no loss") {
        // p = [0.5, 0.5, 0] everywhere, all pixels labeled group 0:
        // q = [1, 0]; both groups reach DSC 1 under the smoothing convention.
        ProbMap probs{PixelField(2, 2, 3), {}};
        for (int p = 0; p < 4; ++p) {
            probs.values.pixel(p)[0] = 0.5;
            probs.values.pixel(p)[1] = 0.5;
        }
        LabelMask target(2, 2, 2, partition.id());
        const double expected = oracle::marginal_dice_value(probs, target, partition);
        const double value = marginal_dice(probs, target, partition).value;
        CHECK(value == doctest::Approx(expected).epsilon(1e-12));
        CHECK(value == doctest::Approx(0.0).epsilon(2e-5));
    }
    SUBCASE("value matches the oracle on random configurations") {
        Rng rng(43);
        for (int trial = 0; trial < 30; ++trial) {
            LossTrial t = make_loss_trial("marginal_dice", rng);
            const ProbMap probs = softmax(t.fixture->logits);
            CHECK(marginal_dice(probs, t.fixture->target, t.fixture->partition).value ==
                  doctest::Approx(oracle::marginal_dice_value(probs, t.fixture->target,
                                                              t.fixture->partition))
                      .epsilon(1e-12));
        }
    }
}

TEST_CASE("exclusion dice") {
    const LabelSpace space = make_space(3);
    const ExclusionMap full = ExclusionMap::full_mutual(space);

    SUBCASE("no excluded mass means zero loss") {
        // every pixel predicts its own class fully
        ProbMap probs{PixelField(1, 3, 3), {}};
        LabelMask target(1, 3, 3);
        for (int p = 0; p < 3; ++p) {
            target.labels[p] = p;
            probs.values.pixel(p)[p] = 1.0;
        }
        CHECK(exclusion_dice(probs, target, full).value <= 2e-5);
    }
    SUBCASE("total violation on one pixel") {
        const ProbMap probs = prob_pixel({0.0, 1.0, 0.0});
        // target class 0 excludes class 1: e = [0,1,0] under E_0 = {1}
        const ExclusionMap map(space, {{1}, {}, {}});
        const LossReport report = exclusion_dice(probs, mask_pixel(0, 3), map);
        CHECK(report.value == doctest::Approx(1.0).epsilon(1e-4));
    }
    SUBCASE("partial violation, frozen oracle value") {
        // e = [0,1,1], p = [0.5, 0.25, 0.25]
        const ExclusionMap map(space, {{1, 2}, {}, {}});
        const ProbMap probs = prob_pixel({0.5, 0.25, 0.25});
        const LabelMask target = mask_pixel(0, 3);
        const double expected = oracle::exclusion_dice_value(probs, target, map, nullptr);
        const LossReport report = exclusion_dice(probs, target, map);
        CHECK(report.value == doctest::Approx(expected).epsilon(1e-12));
        // per class: 2*0.25 / (1 + 0.25 + s) = 0.4, two violated classes
        CHECK(report.value == doctest::Approx(0.8).epsilon(1e-4));
    }
    SUBCASE("merged targets use the kept singleton's exclusion vector") {
        const MergePartition partition = single_organ_partition(space, {2});
        ProbMap probs{PixelField(1, 2, 3), {}};
        probs.values.pixel(0)[0] = 0.6;  // merged-background pixel: unconstrained
        probs.values.pixel(0)[1] = 0.4;
        probs.values.pixel(1)[2] = 0.5;  // kept-class pixel: classes 0,1 excluded
        probs.values.pixel(1)[0] = 0.5;
        LabelMask target(1, 2, 2, partition.id());
        target.labels = {0, 1};
        const double expected = oracle::exclusion_dice_value(probs, target, full, &partition);
        const LossReport report = exclusion_dice(probs, target, full, &partition);
        CHECK(report.value == doctest::Approx(expected).epsilon(1e-12));
        CHECK(report.value > 0.0);

        // merged target without the partition is unresolvable
        CHECK_THROWS_AS(exclusion_dice(probs, target, full), SpaceMismatch);
    }
}

TEST_CASE("exclusion cross-entropy") {
    const LabelSpace space = make_space(3);

    SUBCASE("no excluded mass means exactly zero") {
        const ExclusionMap map(space, {{1, 2}, {}, {}});
        const ProbMap probs = prob_pixel({1.0, 0.0, 0.0});
        CHECK(exclusion_ce(probs, mask_pixel(0, 3), map).value == 0.0);
    }
    SUBCASE("total violation gives ln 2") {
        const ExclusionMap map(space, {{1}, {}, {}});
        const ProbMap probs = prob_pixel({0.0, 1.0, 0.0});
        CHECK(exclusion_ce(probs, mask_pixel(0, 3), map).value ==
              doctest::Approx(std::log(2.0)));
    }
    SUBCASE("hand-computed partial violation") {
        const ExclusionMap map(space, {{1, 2}, {}, {}});
        const ProbMap probs = prob_pixel({0.5, 0.25, 0.25});
        CHECK(exclusion_ce(probs, mask_pixel(0, 3), map).value ==
              doctest::Approx(2.0 * std::log(1.25)).epsilon(1e-9));
        CHECK(exclusion_ce(probs, mask_pixel(0, 3), map).value ==
              doctest::Approx(0.4463).epsilon(1e-3));
    }
    SUBCASE("value is non-negative and zero iff excluded mass is zero") {
        Rng rng(47);
        const ExclusionMap full = ExclusionMap::full_mutual(space);
        for (int trial = 0; trial < 100; ++trial) {
            const ProbMap probs = softmax(random_logits(3, 3, 3, rng));
            const LabelMask target = random_mask(3, 3, 3, rng);
            const double value = exclusion_ce(probs, target, full).value;
            CHECK(value >= 0.0);

            double excluded_mass = 0.0;
            for (int p = 0; p < 9; ++p)
                for (int n = 0; n < 3; ++n)
                    if (n != target.labels[p]) excluded_mass += probs.values.pixel(p)[n];
            if (excluded_mass > 1e-3) CHECK(value > 0.0);
        }
    }
    SUBCASE("monotone in the excluded probability") {
        const ExclusionMap map(space, {{1, 2}, {}, {}});
        double previous = -1.0;
        for (double p1 : {0.0, 0.1, 0.2, 0.4, 0.6}) {
            // p2 held fixed, remaining mass on the allowed class
            const ProbMap probs = prob_pixel({1.0 - p1 - 0.2, p1, 0.2});
            const double value = exclusion_ce(probs, mask_pixel(0, 3), map).value;
            CHECK(value > previous);
            previous = value;
        }
    }
    SUBCASE("oracle agreement on random merged configurations") {
        Rng rng(53);
        for (int trial = 0; trial < 30; ++trial) {
            LossTrial t = make_loss_trial("exclusion_ce", rng);
            const ProbMap probs = softmax(t.fixture->logits);
            CHECK(exclusion_ce(probs, t.fixture->target, t.fixture->exclusion,
                               &t.fixture->partition)
                      .value ==
                  doctest::Approx(oracle::exclusion_ce_value(probs, t.fixture->target,
                                                             t.fixture->exclusion,
                                                             &t.fixture->partition))
                      .epsilon(1e-12));
        }
    }
}

TEST_CASE("per-pixel CE-family gradients sum to zero over classes") {
    Rng rng(59);
    for (const char* name : {"regular_ce", "marginal_ce", "exclusion_ce"}) {
        for (int trial = 0; trial < 20; ++trial) {
            LossTrial t = make_loss_trial(name, rng);
            const LossReport report = t.loss(t.fixture->logits);
            for (int p = 0; p < report.gradient.num_pixels(); ++p) {
                double sum = 0.0;
                for (int c = 0; c < report.gradient.channels(); ++c)
                    sum += report.gradient.pixel(p)[c];
                CHECK(std::fabs(sum) < 1e-9);
            }
        }
    }
}

TEST_CASE("combined loss dispatch and linearity") {
    const LabelSpace space = make_space(3);
    const ExclusionMap exclusion = ExclusionMap::full_mutual(space);

    DatasetDescriptor full_desc("F", DatasetRole::Full, {1, 2}, identity_partition(space));
    DatasetDescriptor partial_desc("P", DatasetRole::Partial, {1},
                                   single_organ_partition(space, {1}));

    Rng rng(61);
    const LogitMap logits = random_logits(3, 3, 3, rng);
    const ProbMap probs = softmax(logits);
    const LabelMask global_target = random_mask(3, 3, 3, rng);
    const LabelMask merged_target =
        project_labels(global_target, partial_desc.partition);

    SUBCASE("fully labeled samples use regular CE + Dice only") {
        LossWeights weights;  // defaults: regular 1, marginal 1, exclusion 2, mix (1,1)
        LossTerms terms;
        const LossReport combined =
            combined_loss(logits, global_target, full_desc, exclusion, weights, &terms);
        const double expected =
            regular_ce(probs, global_target).value + regular_dice(probs, global_target).value;
        CHECK(combined.value == doctest::Approx(expected).epsilon(1e-12));
        CHECK(terms.marginal_ce == 0.0);
        CHECK(terms.exclusion_dice == 0.0);
        CHECK(terms.regular_ce > 0.0);
    }

    SUBCASE("marginal weight zero leaves pure exclusion loss") {
        LossWeights weights;
        weights.marginal_weight = 0.0;
        weights.exclusion_weight = 1.0;
        const LossReport combined =
            combined_loss(logits, merged_target, partial_desc, exclusion, weights);
        const double expected =
            exclusion_ce(probs, merged_target, exclusion, &partial_desc.partition).value +
            exclusion_dice(probs, merged_target, exclusion, &partial_desc.partition).value;
        CHECK(combined.value == doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("exclusion weight zero leaves pure marginal loss") {
        LossWeights weights;
        weights.marginal_weight = 1.0;
        weights.exclusion_weight = 0.0;
        const LossReport combined =
            combined_loss(logits, merged_target, partial_desc, exclusion, weights);
        const double expected =
            marginal_ce(probs, merged_target, partial_desc.partition).value +
            marginal_dice(probs, merged_target, partial_desc.partition).value;
        CHECK(combined.value == doctest::Approx(expected).epsilon(1e-12));
    }

    SUBCASE("value and gradient are linear in the weights") {
        LossWeights w1;
        w1.marginal_weight = 0.7;
        w1.exclusion_weight = 0.0;
        LossWeights w2;
        w2.marginal_weight = 0.0;
        w2.exclusion_weight = 1.3;
        LossWeights w12;
        w12.marginal_weight = 0.7;
        w12.exclusion_weight = 1.3;

        const LossReport a = combined_loss(logits, merged_target, partial_desc, exclusion, w1);
        const LossReport b = combined_loss(logits, merged_target, partial_desc, exclusion, w2);
        const LossReport ab = combined_loss(logits, merged_target, partial_desc, exclusion, w12);
        CHECK(ab.value == doctest::Approx(a.value + b.value).epsilon(1e-12));
        for (std::size_t i = 0; i < ab.gradient.size(); ++i)
            CHECK(ab.gradient.data()[i] ==
                  doctest::Approx(a.gradient.data()[i] + b.gradient.data()[i]).epsilon(1e-12));
    }

    SUBCASE("all-zero weights rejected") {
        LossWeights weights;
        weights.regular_weight = weights.marginal_weight = weights.exclusion_weight = 0.0;
        weights.ce_weight = weights.dice_weight = 0.0;
        CHECK_THROWS_AS(
            combined_loss(logits, global_target, full_desc, exclusion, weights),
            ConfigError);
    }
}
