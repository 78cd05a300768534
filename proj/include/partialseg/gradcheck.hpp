#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "partialseg/grid.hpp"
#include "partialseg/losses.hpp"
#include "partialseg/rng.hpp"

namespace partialseg {

// Evaluates a loss value at given logits. The finite-difference oracle only
// ever calls this; it never touches the analytic gradient path.
using LossValueFn = std::function<double(const LogitMap&)>;

// Evaluates a loss together with its analytic gradient wrt the logits.
using LossReportFn = std::function<LossReport(const LogitMap&)>;

struct Coordinate {
    int y = 0, x = 0, c = 0;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    Coordinate worst;  // coordinate with the largest relative error
    bool passed = false;
};

inline constexpr double kGradCheckStep = 1e-5;
inline constexpr double kGradCheckRelTol = 1e-4;
inline constexpr double kGradCheckAbsTol = 1e-7;

// Central differences (L(a + h e_j) - L(a - h e_j)) / 2h per coordinate.
LogitMap finite_diff_gradient(const LossValueFn& loss, const LogitMap& logits,
                              double step = kGradCheckStep);

// Single-coordinate central difference; used by training-time spot checks.
double finite_diff_at(const LossValueFn& loss, const LogitMap& logits, const Coordinate& coord,
                      double step = kGradCheckStep);

// Compares the analytic gradient against central differences coordinatewise.
// A coordinate passes when its relative error (denominator
// max(|analytic|, |numeric|, 1e-3)) is within rel_tol or its absolute error
// is within abs_tol; the report passes when every coordinate does.
GradCheckReport check(const LossReportFn& loss, const LogitMap& logits,
                      double rel_tol = kGradCheckRelTol, double abs_tol = kGradCheckAbsTol,
                      double step = kGradCheckStep);

// Same comparison restricted to a coordinate subset.
GradCheckReport check_at(const LossReportFn& loss, const LogitMap& logits,
                         const std::vector<Coordinate>& coords,
                         double rel_tol = kGradCheckRelTol, double abs_tol = kGradCheckAbsTol,
                         double step = kGradCheckStep);

// ---- randomized trial suite (CLI `gradcheck` subcommand) ----

inline const std::vector<std::string> kAllLossNames = {
    "regular_ce", "regular_dice",   "marginal_ce",
    "marginal_dice", "exclusion_ce", "exclusion_dice"};

// One random configuration: logits up to 8x8 with 2..6 classes, a random
// valid partition, a random exclusion map, and a target in the space the
// named loss expects. The evaluator shares ownership of the fixture so the
// trial can be copied or moved freely.
struct LossTrialFixture {
    LogitMap logits;
    LabelMask target;
    MergePartition partition;
    ExclusionMap exclusion;
};

struct LossTrial {
    std::shared_ptr<const LossTrialFixture> fixture;
    LossReportFn loss;  // bound to the fixture

    const LogitMap& logits() const { return fixture->logits; }
};

LossTrial make_loss_trial(const std::string& loss_name, Rng& rng);

struct LossTrialSummary {
    std::string loss;
    int trials = 0;
    bool passed = false;
    double max_rel_error = 0.0;
    double max_abs_error = 0.0;
    Coordinate worst;
};

LossTrialSummary run_loss_trials(const std::string& loss_name, int trials, std::uint64_t seed);

}  // namespace partialseg
