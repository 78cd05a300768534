#include "partialseg/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "partialseg/hashing.hpp"

namespace partialseg {

namespace {

double central_difference(const LossValueFn& loss, LogitMap& work, int y, int x, int c,
                          double step) {
    const double original = work.at(y, x, c);
    work.at(y, x, c) = original + step;
    const double plus = loss(work);
    work.at(y, x, c) = original - step;
    const double minus = loss(work);
    work.at(y, x, c) = original;
    if (!std::isfinite(plus) || !std::isfinite(minus))
        throw NonFiniteLoss("finite_diff_gradient: loss evaluated to a non-finite value");
    return (plus - minus) / (2.0 * step);
}

// Relative error with a floored denominator so near-zero gradients do not
// blow the ratio up.
double relative_error(double analytic, double numeric) {
    const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
    return std::fabs(analytic - numeric) / denom;
}

}  // namespace

LogitMap finite_diff_gradient(const LossValueFn& loss, const LogitMap& logits, double step) {
    LogitMap work = logits;
    LogitMap grad(logits.height(), logits.width(), logits.channels());
    for (int y = 0; y < logits.height(); ++y)
        for (int x = 0; x < logits.width(); ++x)
            for (int c = 0; c < logits.channels(); ++c)
                grad.at(y, x, c) = central_difference(loss, work, y, x, c, step);
    return grad;
}

double finite_diff_at(const LossValueFn& loss, const LogitMap& logits, const Coordinate& coord,
                      double step) {
    LogitMap work = logits;
    return central_difference(loss, work, coord.y, coord.x, coord.c, step);
}

GradCheckReport check(const LossReportFn& loss, const LogitMap& logits, double rel_tol,
                      double abs_tol, double step) {
    std::vector<Coordinate> coords;
    coords.reserve(logits.size());
    for (int y = 0; y < logits.height(); ++y)
        for (int x = 0; x < logits.width(); ++x)
            for (int c = 0; c < logits.channels(); ++c) coords.push_back({y, x, c});
    return check_at(loss, logits, coords, rel_tol, abs_tol, step);
}

GradCheckReport check_at(const LossReportFn& loss, const LogitMap& logits,
                         const std::vector<Coordinate>& coords, double rel_tol, double abs_tol,
                         double step) {
    const LossReport analytic = loss(logits);
    LossValueFn value_only = [&loss](const LogitMap& a) { return loss(a).value; };
    LogitMap work = logits;

    GradCheckReport report;
    report.passed = true;
    for (const Coordinate& coord : coords) {
        const double numeric = central_difference(value_only, work, coord.y, coord.x, coord.c, step);
        const double a = analytic.gradient.at(coord.y, coord.x, coord.c);
        const double abs_err = std::fabs(a - numeric);
        const double rel_err = relative_error(a, numeric);
        if (rel_err > report.max_rel_error) {
            report.max_rel_error = rel_err;
            report.worst = coord;
        }
        report.max_abs_error = std::max(report.max_abs_error, abs_err);
        if (rel_err > rel_tol && abs_err > abs_tol) report.passed = false;
    }
    return report;
}

LossTrial make_loss_trial(const std::string& loss_name, Rng& rng) {
    const int classes = rng.uniform_int(2, 6);
    const int height = rng.uniform_int(1, 8);
    const int width = rng.uniform_int(1, 8);

    LabelSpace space([classes] {
        std::vector<std::string> names;
        for (int n = 0; n < classes; ++n) names.push_back("c" + std::to_string(n));
        return names;
    }());

    // random partition: seed M groups with a shuffled prefix, then spread the
    // remaining classes over them
    const int groups_count = rng.uniform_int(1, classes);
    std::vector<int> order(classes);
    for (int n = 0; n < classes; ++n) order[n] = n;
    for (int n = classes - 1; n > 0; --n)
        std::swap(order[n], order[rng.uniform_int(0, n)]);
    std::vector<std::vector<int>> groups(groups_count);
    for (int g = 0; g < groups_count; ++g) groups[g].push_back(order[g]);
    for (int n = groups_count; n < classes; ++n)
        groups[rng.uniform_int(0, groups_count - 1)].push_back(order[n]);
    MergePartition partition(space, std::move(groups));

    std::vector<std::vector<int>> excluded(classes);
    for (int n = 0; n < classes; ++n)
        for (int k = 0; k < classes; ++k)
            if (k != n && rng.bernoulli(0.5)) excluded[n].push_back(k);
    ExclusionMap exclusion(space, std::move(excluded));

    LogitMap logits(height, width, classes);
    for (std::size_t i = 0; i < logits.size(); ++i) logits.data()[i] = rng.uniform(-4.0, 4.0);

    const bool marginal = loss_name == "marginal_ce" || loss_name == "marginal_dice";
    const bool exclusionish = loss_name == "exclusion_ce" || loss_name == "exclusion_dice";
    const bool merged_target = marginal || (exclusionish && rng.bernoulli(0.5));

    LabelMask target = merged_target
                           ? LabelMask(height, width, partition.num_groups(), partition.id())
                           : LabelMask(height, width, classes);
    const int label_bound = merged_target ? partition.num_groups() : classes;
    for (int& v : target.labels) v = rng.uniform_int(0, label_bound - 1);

    LossTrial trial;
    trial.fixture = std::make_shared<const LossTrialFixture>(LossTrialFixture{
        std::move(logits), std::move(target), std::move(partition), std::move(exclusion)});
    auto fixture = trial.fixture;
    trial.loss = [loss_name, fixture](const LogitMap& a) -> LossReport {
        const ProbMap probs = softmax(a);
        if (loss_name == "regular_ce") return regular_ce(probs, fixture->target);
        if (loss_name == "regular_dice") return regular_dice(probs, fixture->target);
        if (loss_name == "marginal_ce")
            return marginal_ce(probs, fixture->target, fixture->partition);
        if (loss_name == "marginal_dice")
            return marginal_dice(probs, fixture->target, fixture->partition);
        if (loss_name == "exclusion_ce")
            return exclusion_ce(probs, fixture->target, fixture->exclusion, &fixture->partition);
        if (loss_name == "exclusion_dice")
            return exclusion_dice(probs, fixture->target, fixture->exclusion,
                                  &fixture->partition);
        throw ConfigError("unknown loss '" + loss_name + "'");
    };
    return trial;
}

LossTrialSummary run_loss_trials(const std::string& loss_name, int trials, std::uint64_t seed) {
    LossTrialSummary summary;
    summary.loss = loss_name;
    summary.trials = trials;
    summary.passed = true;

    Rng rng = Rng(seed).split(fnv1a(loss_name));
    for (int t = 0; t < trials; ++t) {
        const LossTrial trial = make_loss_trial(loss_name, rng);
        const GradCheckReport report = check(trial.loss, trial.logits());
        if (report.max_rel_error > summary.max_rel_error) {
            summary.max_rel_error = report.max_rel_error;
            summary.worst = report.worst;
        }
        summary.max_abs_error = std::max(summary.max_abs_error, report.max_abs_error);
        if (!report.passed) summary.passed = false;
    }
    return summary;
}

}  // namespace partialseg
