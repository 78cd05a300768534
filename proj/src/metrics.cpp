#include "partialseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace partialseg {

namespace {

struct Point {
    int y, x;
};

std::vector<Point> class_points(const LabelMask& mask, int cls) {
    std::vector<Point> points;
    for (int y = 0; y < mask.height; ++y)
        for (int x = 0; x < mask.width; ++x)
            if (mask.at(y, x) == cls) points.push_back({y, x});
    return points;
}

// Largest squared distance from any point of `from` to its nearest point of
// `to`. Early exit on exact hits keeps the common identical-mask case fast.
double directed_sq(const std::vector<Point>& from, const std::vector<Point>& to) {
    double worst = 0.0;
    for (const Point& a : from) {
        double best = std::numeric_limits<double>::max();
        for (const Point& b : to) {
            const double dy = a.y - b.y;
            const double dx = a.x - b.x;
            const double d = dy * dy + dx * dx;
            if (d < best) {
                best = d;
                if (best == 0.0) break;
            }
        }
        worst = std::max(worst, best);
    }
    return worst;
}

void require_same_shape(const LabelMask& a, const LabelMask& b, const char* op) {
    if (a.height != b.height || a.width != b.width)
        throw ShapeMismatch(std::string(op) + ": mask shapes differ");
}

}  // namespace

LabelMask argmax_predict(const ProbMap& probs) {
    LabelMask out(probs.height(), probs.width(), probs.num_classes(), probs.space);
    for (int p = 0; p < probs.values.num_pixels(); ++p) {
        auto prob = probs.values.pixel(p);
        int best = 0;
        for (int n = 1; n < probs.num_classes(); ++n)
            if (prob[n] > prob[best]) best = n;
        out.labels[p] = best;
    }
    return out;
}

double dice_coefficient(const LabelMask& pred, const LabelMask& gt, int cls) {
    require_same_shape(pred, gt, "dice_coefficient");
    if (pred.space != gt.space)
        throw SpaceMismatch("dice_coefficient: masks tagged with different spaces");

    long long pred_count = 0, gt_count = 0, overlap = 0;
    for (std::size_t i = 0; i < pred.labels.size(); ++i) {
        const bool in_pred = pred.labels[i] == cls;
        const bool in_gt = gt.labels[i] == cls;
        pred_count += in_pred;
        gt_count += in_gt;
        overlap += in_pred && in_gt;
    }
    if (pred_count + gt_count == 0) return 1.0;
    return 2.0 * static_cast<double>(overlap) / static_cast<double>(pred_count + gt_count);
}

HausdorffResult hausdorff_distance_checked(const LabelMask& pred, const LabelMask& gt, int cls) {
    require_same_shape(pred, gt, "hausdorff_distance");

    const auto a = class_points(pred, cls);
    const auto b = class_points(gt, cls);
    if (a.empty() || b.empty()) {
        const double diagonal = std::hypot(static_cast<double>(pred.height),
                                           static_cast<double>(pred.width));
        return {diagonal, true};
    }
    const double worst_sq = std::max(directed_sq(a, b), directed_sq(b, a));
    return {std::sqrt(worst_sq), false};
}

double hausdorff_distance(const LabelMask& pred, const LabelMask& gt, int cls) {
    return hausdorff_distance_checked(pred, gt, cls).distance;
}

MetricsReport evaluate_dataset(const std::vector<LabelMask>& predictions,
                               const std::vector<const Sample*>& samples,
                               const DatasetDescriptor& descriptor) {
    if (predictions.size() != samples.size())
        throw ShapeMismatch("evaluate_dataset: prediction and sample counts differ");

    MetricsReport report;
    std::map<int, std::vector<double>> dice_by_class;
    std::map<int, std::vector<double>> hd_by_class;

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const Sample& sample = *samples[i];
        if (!predictions[i].global())
            throw SpaceMismatch("evaluate_dataset: predictions must be in the global space");

        // Score in the dataset's annotated space: each kept class is a
        // singleton group there, so projecting the prediction lines it up
        // with the visible ground truth.
        const LabelMask projected = project_labels(predictions[i], descriptor.partition);
        for (int cls : descriptor.kept) {
            const int group = descriptor.partition.group_of(cls);
            const double dice = dice_coefficient(projected, sample.gt_visible, group);
            const HausdorffResult hd =
                hausdorff_distance_checked(projected, sample.gt_visible, group);
            report.rows.push_back({descriptor.id, sample.id, cls, dice, hd.distance, hd.sentinel});
            dice_by_class[cls].push_back(dice);
            if (!hd.sentinel) hd_by_class[cls].push_back(hd.distance);
        }
    }

    double dice_total = 0.0;
    for (const auto& [cls, values] : dice_by_class) {
        double sum = 0.0;
        for (double v : values) sum += v;
        report.per_class_dice[cls] = sum / static_cast<double>(values.size());
        dice_total += report.per_class_dice[cls];
    }
    if (!dice_by_class.empty())
        report.mean_dice = dice_total / static_cast<double>(dice_by_class.size());

    double hd_total = 0.0;
    int hd_classes = 0;
    for (const auto& [cls, values] : hd_by_class) {
        if (values.empty()) continue;
        double sum = 0.0;
        for (double v : values) sum += v;
        report.per_class_hausdorff[cls] = sum / static_cast<double>(values.size());
        hd_total += report.per_class_hausdorff[cls];
        ++hd_classes;
    }
    if (hd_classes > 0) report.mean_hd = hd_total / hd_classes;

    return report;
}

}  // namespace partialseg
