#pragma once

#include "partialseg/dataset.hpp"
#include "partialseg/grid.hpp"
#include "partialseg/label_space.hpp"

namespace partialseg {

// Smoothing added to soft-Dice numerators and denominators. A class absent
// from both prediction and target then scores DSC = 1 (loss 0).
inline constexpr double kDiceSmooth = 1e-5;

// Probabilities are clamped below by this before any log.
inline constexpr double kProbFloor = 1e-12;

// Additive constant inside the exclusion cross-entropy log.
inline constexpr double kExclusionEpsilon = 1.0;

// Loss value plus its gradient with respect to the logits that produced the
// probabilities (never with respect to the probabilities themselves).
struct LossReport {
    double value = 0.0;
    PixelField gradient;  // H x W x N
};

// Term weights for combined_loss. Defaults follow the best-performing
// marginal:exclusion ratio of 1:2.
struct LossWeights {
    double regular_weight = 1.0;
    double marginal_weight = 1.0;
    double exclusion_weight = 2.0;
    double ce_weight = 1.0;    // ce_dice_mix, cross-entropy side
    double dice_weight = 1.0;  // ce_dice_mix, Dice side

    void validate() const;
};

// Per-term breakdown of a combined loss evaluation; feeds the training log.
struct LossTerms {
    double regular_ce = 0.0;
    double regular_dice = 0.0;
    double marginal_ce = 0.0;
    double marginal_dice = 0.0;
    double exclusion_ce = 0.0;
    double exclusion_dice = 0.0;

    LossTerms& operator+=(const LossTerms& o);
    LossTerms& operator*=(double s);
};

// p_n = exp(a_n) / sum_k exp(a_k), max-subtracted per pixel.
ProbMap softmax(const LogitMap& logits);

// q_m = sum over group members of p_n; result tagged with the partition id.
ProbMap marginal_prob(const ProbMap& probs, const MergePartition& partition);

// Mean over pixels of -log p_y. Gradient per pixel is (p - onehot(y)) / P.
LossReport regular_ce(const ProbMap& probs, const LabelMask& target);

// Sum over classes of (1 - soft DSC), numerator/denominator pooled over all
// pixels before the ratio.
LossReport regular_dice(const ProbMap& probs, const LabelMask& target);

// Mean over pixels of -log q_z for merged targets.
LossReport marginal_ce(const ProbMap& probs, const LabelMask& target,
                       const MergePartition& partition);

// Soft Dice on merged probabilities against merged one-hot targets.
LossReport marginal_dice(const ProbMap& probs, const LabelMask& target,
                         const MergePartition& partition);

// Penalty on predicted mass assigned to classes excluded by each labeled
// pixel. Targets may be global or merged; merged targets need the partition
// that produced them so singleton groups resolve to their member class
// (merged-background pixels carry no exclusion constraint).
LossReport exclusion_dice(const ProbMap& probs, const LabelMask& target,
                          const ExclusionMap& exmap,
                          const MergePartition* partition = nullptr);

// Mean over pixels of sum_n e_n log(p_n + 1); zero exactly when no predicted
// mass sits on excluded classes.
LossReport exclusion_ce(const ProbMap& probs, const LabelMask& target,
                        const ExclusionMap& exmap,
                        const MergePartition* partition = nullptr);

// Provenance-dispatched loss: regular CE+Dice for fully labeled samples,
// weighted marginal + exclusion terms for partially labeled ones. Runs the
// softmax internally; gradients combine linearly.
LossReport combined_loss(const LogitMap& logits, const LabelMask& target,
                         const DatasetDescriptor& descriptor, const ExclusionMap& exmap,
                         const LossWeights& weights, LossTerms* terms = nullptr);

}  // namespace partialseg
