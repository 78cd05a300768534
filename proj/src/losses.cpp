#include "partialseg/losses.hpp"

#include <algorithm>
#include <cmath>

namespace partialseg {

namespace {

void require_global_probs(const ProbMap& probs, const char* op) {
    if (!probs.global())
        throw SpaceMismatch(std::string(op) + " expects probabilities in the global space");
}

void require_shape(const ProbMap& probs, const LabelMask& target, const char* op) {
    if (probs.height() != target.height || probs.width() != target.width)
        throw ShapeMismatch(std::string(op) + ": probability map and target shapes differ");
}

void require_space(const LabelMask& target, const std::string& space, int classes,
                   const char* op) {
    if (target.space != space || target.num_classes != classes)
        throw SpaceMismatch(std::string(op) + ": target is tagged with a different label space");
}

// Chain a gradient wrt probabilities through the softmax:
//   dL/da_j = p_j (g_j - sum_n g_n p_n)  per pixel.
// Per-pixel entries of the result always sum to zero.
void chain_through_softmax(const ProbMap& probs, PixelField& grad) {
    const int channels = probs.num_classes();
    for (int p = 0; p < grad.num_pixels(); ++p) {
        auto prob = probs.values.pixel(p);
        auto g = grad.pixel(p);
        double dot = 0.0;
        for (int n = 0; n < channels; ++n) dot += g[n] * prob[n];
        for (int n = 0; n < channels; ++n) g[n] = prob[n] * (g[n] - dot);
    }
}

// Per-pixel exclusion vectors resolved from the target's label space: a table
// indexed by target label holding the excluded class indices.
std::vector<std::vector<int>> exclusion_table(const LabelMask& target, const ExclusionMap& exmap,
                                              const MergePartition* partition, const char* op) {
    std::vector<std::vector<int>> table;
    if (target.global()) {
        if (target.num_classes != exmap.num_classes())
            throw SpaceMismatch(std::string(op) + ": target and exclusion map class counts differ");
        table.resize(exmap.num_classes());
        for (int n = 0; n < exmap.num_classes(); ++n) table[n] = exmap.excluded(n);
    } else {
        if (partition == nullptr || partition->id() != target.space)
            throw SpaceMismatch(std::string(op) +
                                ": merged target needs the partition that produced it");
        if (partition->parent_classes() != exmap.num_classes())
            throw SpaceMismatch(std::string(op) + ": partition and exclusion map disagree on N");
        table.resize(partition->num_groups());
        for (int m = 0; m < partition->num_groups(); ++m) {
            const int member = partition->singleton_member(m);
            if (member >= 0) table[m] = exmap.excluded(member);
            // non-singleton (merged background) groups keep an empty set
        }
    }
    return table;
}

int checked_label(int value, int bound, const char* op) {
    if (value < 0 || value >= bound)
        throw UnlabeledIndex(std::string(op) + ": target label " + std::to_string(value) +
                             " out of range");
    return value;
}

}  // namespace

void LossWeights::validate() const {
    const double all[] = {regular_weight, marginal_weight, exclusion_weight, ce_weight, dice_weight};
    double total = 0.0;
    for (double w : all) {
        if (w < 0.0 || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
        total += w;
    }
    if (total == 0.0) throw ConfigError("loss weights must not all be zero");
}

LossTerms& LossTerms::operator+=(const LossTerms& o) {
    regular_ce += o.regular_ce;
    regular_dice += o.regular_dice;
    marginal_ce += o.marginal_ce;
    marginal_dice += o.marginal_dice;
    exclusion_ce += o.exclusion_ce;
    exclusion_dice += o.exclusion_dice;
    return *this;
}

LossTerms& LossTerms::operator*=(double s) {
    regular_ce *= s;
    regular_dice *= s;
    marginal_ce *= s;
    marginal_dice *= s;
    exclusion_ce *= s;
    exclusion_dice *= s;
    return *this;
}

ProbMap softmax(const LogitMap& logits) {
    ProbMap out{PixelField(logits.height(), logits.width(), logits.channels()), {}};
    const int channels = logits.channels();
    for (int p = 0; p < logits.num_pixels(); ++p) {
        auto a = logits.pixel(p);
        auto prob = out.values.pixel(p);
        double peak = a[0];
        for (int n = 0; n < channels; ++n) {
            if (!std::isfinite(a[n])) throw NonFiniteInput("softmax: non-finite logit");
            peak = std::max(peak, a[n]);
        }
        double norm = 0.0;
        for (int n = 0; n < channels; ++n) {
            prob[n] = std::exp(a[n] - peak);
            norm += prob[n];
        }
        for (int n = 0; n < channels; ++n) prob[n] /= norm;
    }
    return out;
}

ProbMap marginal_prob(const ProbMap& probs, const MergePartition& partition) {
    require_global_probs(probs, "marginal_prob");
    if (probs.num_classes() != partition.parent_classes())
        throw SpaceMismatch("marginal_prob: partition parent space does not match probabilities");

    ProbMap out{PixelField(probs.height(), probs.width(), partition.num_groups()),
                partition.id()};
    for (int p = 0; p < probs.values.num_pixels(); ++p) {
        auto src = probs.values.pixel(p);
        auto dst = out.values.pixel(p);
        for (int m = 0; m < partition.num_groups(); ++m) {
            double sum = 0.0;
            for (int n : partition.group(m)) sum += src[n];
            dst[m] = sum;
        }
    }
    return out;
}

LossReport regular_ce(const ProbMap& probs, const LabelMask& target) {
    require_global_probs(probs, "regular_ce");
    require_shape(probs, target, "regular_ce");
    require_space(target, {}, probs.num_classes(), "regular_ce");

    const int channels = probs.num_classes();
    const int pixels = probs.values.num_pixels();
    const double inv_pixels = 1.0 / pixels;

    LossReport report;
    report.gradient = PixelField(probs.height(), probs.width(), channels);
    double total = 0.0;
    for (int p = 0; p < pixels; ++p) {
        const int y = checked_label(target.labels[p], channels, "regular_ce");
        auto prob = probs.values.pixel(p);
        total -= std::log(std::max(prob[y], kProbFloor));
        auto g = report.gradient.pixel(p);
        for (int n = 0; n < channels; ++n) g[n] = prob[n] * inv_pixels;
        g[y] -= inv_pixels;
    }
    report.value = total * inv_pixels;
    return report;
}

namespace {

// Shared soft-Dice core: target one-hot z lives in the same space as `probs`
// (global for the regular loss, merged for the marginal one). Returns the
// loss value and the gradient wrt the given probabilities.
double soft_dice_value_and_prob_grad(const PixelField& probs, const LabelMask& target,
                                     PixelField& prob_grad) {
    const int channels = probs.channels();
    const int pixels = probs.num_pixels();

    std::vector<double> intersection(channels, 0.0);
    std::vector<double> target_sum(channels, 0.0);
    std::vector<double> prob_sum(channels, 0.0);
    for (int p = 0; p < pixels; ++p) {
        auto prob = probs.pixel(p);
        const int z = target.labels[p];
        intersection[z] += prob[z];
        target_sum[z] += 1.0;
        for (int n = 0; n < channels; ++n) prob_sum[n] += prob[n];
    }

    double value = 0.0;
    std::vector<double> numer(channels), denom(channels);
    for (int n = 0; n < channels; ++n) {
        numer[n] = 2.0 * intersection[n] + kDiceSmooth;
        denom[n] = target_sum[n] + prob_sum[n] + kDiceSmooth;
        value += 1.0 - numer[n] / denom[n];
    }

    // d(1 - numer/denom)/dp_{i,n} = (numer - 2 z_{i,n} denom) / denom^2
    for (int p = 0; p < pixels; ++p) {
        auto g = prob_grad.pixel(p);
        const int z = target.labels[p];
        for (int n = 0; n < channels; ++n)
            g[n] = (numer[n] - (n == z ? 2.0 * denom[n] : 0.0)) / (denom[n] * denom[n]);
    }
    return value;
}

}  // namespace

LossReport regular_dice(const ProbMap& probs, const LabelMask& target) {
    require_global_probs(probs, "regular_dice");
    require_shape(probs, target, "regular_dice");
    require_space(target, {}, probs.num_classes(), "regular_dice");
    for (int v : target.labels) checked_label(v, probs.num_classes(), "regular_dice");

    LossReport report;
    report.gradient = PixelField(probs.height(), probs.width(), probs.num_classes());
    report.value = soft_dice_value_and_prob_grad(probs.values, target, report.gradient);
    chain_through_softmax(probs, report.gradient);
    return report;
}

LossReport marginal_ce(const ProbMap& probs, const LabelMask& target,
                       const MergePartition& partition) {
    require_global_probs(probs, "marginal_ce");
    require_shape(probs, target, "marginal_ce");
    if (probs.num_classes() != partition.parent_classes())
        throw SpaceMismatch("marginal_ce: partition parent space does not match probabilities");
    require_space(target, partition.id(), partition.num_groups(), "marginal_ce");

    const int channels = probs.num_classes();
    const int pixels = probs.values.num_pixels();
    const double inv_pixels = 1.0 / pixels;

    LossReport report;
    report.gradient = PixelField(probs.height(), probs.width(), channels);
    double total = 0.0;
    for (int p = 0; p < pixels; ++p) {
        const int m_star = checked_label(target.labels[p], partition.num_groups(), "marginal_ce");
        auto prob = probs.values.pixel(p);
        double q = 0.0;
        for (int n : partition.group(m_star)) q += prob[n];
        total -= std::log(std::max(q, kProbFloor));

        // Closed form of the marginal-CE derivative: the only group whose
        // indicator survives for logit j is the one containing j, so
        //   dL/da_j = p_j (1 - 1/q)  for j in the target group,
        //   dL/da_j = p_j           otherwise.
        auto g = report.gradient.pixel(p);
        const double q_safe = std::max(q, kProbFloor);
        for (int n = 0; n < channels; ++n) g[n] = prob[n] * inv_pixels;
        for (int n : partition.group(m_star)) g[n] -= prob[n] / q_safe * inv_pixels;
    }
    report.value = total * inv_pixels;
    return report;
}

LossReport marginal_dice(const ProbMap& probs, const LabelMask& target,
                         const MergePartition& partition) {
    require_global_probs(probs, "marginal_dice");
    require_shape(probs, target, "marginal_dice");
    if (probs.num_classes() != partition.parent_classes())
        throw SpaceMismatch("marginal_dice: partition parent space does not match probabilities");
    require_space(target, partition.id(), partition.num_groups(), "marginal_dice");
    for (int v : target.labels) checked_label(v, partition.num_groups(), "marginal_dice");

    const ProbMap merged = marginal_prob(probs, partition);

    PixelField merged_grad(probs.height(), probs.width(), partition.num_groups());
    LossReport report;
    report.value = soft_dice_value_and_prob_grad(merged.values, target, merged_grad);

    // dq_m/dp_n is the group indicator, so the gradient wrt p_n is the
    // merged-space gradient of n's group.
    report.gradient = PixelField(probs.height(), probs.width(), probs.num_classes());
    for (int p = 0; p < probs.values.num_pixels(); ++p) {
        auto gq = merged_grad.pixel(p);
        auto gp = report.gradient.pixel(p);
        for (int n = 0; n < probs.num_classes(); ++n) gp[n] = gq[partition.group_of(n)];
    }
    chain_through_softmax(probs, report.gradient);
    return report;
}

LossReport exclusion_dice(const ProbMap& probs, const LabelMask& target,
                          const ExclusionMap& exmap, const MergePartition* partition) {
    require_global_probs(probs, "exclusion_dice");
    require_shape(probs, target, "exclusion_dice");
    const auto table = exclusion_table(target, exmap, partition, "exclusion_dice");

    const int channels = probs.num_classes();
    const int pixels = probs.values.num_pixels();

    // Per class n: intersection of predicted mass with the pixels excluding n,
    // and the pooled denominator. The numerator is unsmoothed so the penalty
    // vanishes exactly when excluded mass is zero.
    std::vector<double> intersection(channels, 0.0);
    std::vector<double> excluded_count(channels, 0.0);
    std::vector<double> prob_sum(channels, 0.0);
    for (int p = 0; p < pixels; ++p) {
        auto prob = probs.values.pixel(p);
        const int label = checked_label(target.labels[p], static_cast<int>(table.size()),
                                        "exclusion_dice");
        for (int n : table[label]) {
            intersection[n] += prob[n];
            excluded_count[n] += 1.0;
        }
        for (int n = 0; n < channels; ++n) prob_sum[n] += prob[n];
    }

    LossReport report;
    report.gradient = PixelField(probs.height(), probs.width(), channels);
    double value = 0.0;
    std::vector<double> denom(channels);
    for (int n = 0; n < channels; ++n) {
        denom[n] = excluded_count[n] + prob_sum[n] + kDiceSmooth;
        value += 2.0 * intersection[n] / denom[n];
    }
    report.value = value;

    // d(2 I_n / D_n)/dp_{i,n} = 2 (e_{i,n} D_n - I_n) / D_n^2
    for (int p = 0; p < pixels; ++p) {
        auto g = report.gradient.pixel(p);
        const int label = target.labels[p];
        for (int n = 0; n < channels; ++n)
            g[n] = -2.0 * intersection[n] / (denom[n] * denom[n]);
        for (int n : table[label]) g[n] += 2.0 / denom[n];
    }
    chain_through_softmax(probs, report.gradient);
    return report;
}

LossReport exclusion_ce(const ProbMap& probs, const LabelMask& target, const ExclusionMap& exmap,
                        const MergePartition* partition) {
    require_global_probs(probs, "exclusion_ce");
    require_shape(probs, target, "exclusion_ce");
    const auto table = exclusion_table(target, exmap, partition, "exclusion_ce");

    const int pixels = probs.values.num_pixels();
    const double inv_pixels = 1.0 / pixels;

    LossReport report;
    report.gradient = PixelField(probs.height(), probs.width(), probs.num_classes());
    double total = 0.0;
    for (int p = 0; p < pixels; ++p) {
        auto prob = probs.values.pixel(p);
        const int label = checked_label(target.labels[p], static_cast<int>(table.size()),
                                        "exclusion_ce");
        auto g = report.gradient.pixel(p);
        for (int n : table[label]) {
            total += std::log(prob[n] + kExclusionEpsilon);
            g[n] = inv_pixels / (prob[n] + kExclusionEpsilon);
        }
    }
    report.value = total * inv_pixels;
    chain_through_softmax(probs, report.gradient);
    return report;
}

LossReport combined_loss(const LogitMap& logits, const LabelMask& target,
                         const DatasetDescriptor& descriptor, const ExclusionMap& exmap,
                         const LossWeights& weights, LossTerms* terms) {
    weights.validate();
    const ProbMap probs = softmax(logits);

    LossReport report;
    report.gradient = PixelField(logits.height(), logits.width(), logits.channels());
    LossTerms breakdown;

    auto accumulate = [&report](const LossReport& part, double weight) {
        report.value += weight * part.value;
        for (std::size_t i = 0; i < report.gradient.size(); ++i)
            report.gradient.data()[i] += weight * part.gradient.data()[i];
    };

    if (descriptor.fully_labeled()) {
        const LossReport ce = regular_ce(probs, target);
        const LossReport dice = regular_dice(probs, target);
        breakdown.regular_ce = ce.value;
        breakdown.regular_dice = dice.value;
        accumulate(ce, weights.regular_weight * weights.ce_weight);
        accumulate(dice, weights.regular_weight * weights.dice_weight);
    } else {
        const LossReport mce = marginal_ce(probs, target, descriptor.partition);
        const LossReport mdice = marginal_dice(probs, target, descriptor.partition);
        const LossReport ece = exclusion_ce(probs, target, exmap, &descriptor.partition);
        const LossReport edice = exclusion_dice(probs, target, exmap, &descriptor.partition);
        breakdown.marginal_ce = mce.value;
        breakdown.marginal_dice = mdice.value;
        breakdown.exclusion_ce = ece.value;
        breakdown.exclusion_dice = edice.value;
        accumulate(mce, weights.marginal_weight * weights.ce_weight);
        accumulate(mdice, weights.marginal_weight * weights.dice_weight);
        accumulate(ece, weights.exclusion_weight * weights.ce_weight);
        accumulate(edice, weights.exclusion_weight * weights.dice_weight);
    }

    if (terms != nullptr) *terms = breakdown;
    return report;
}

}  // namespace partialseg
