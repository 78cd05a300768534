#pragma once

#include <map>
#include <string>
#include <vector>

#include "partialseg/dataset.hpp"
#include "partialseg/grid.hpp"

namespace partialseg {

// One evaluated (sample, class) pair; these become the metric CSV rows.
struct SampleClassMetric {
    std::string dataset_id;
    std::string sample_id;
    int cls = 0;  // global class index
    double dice = 0.0;
    double hausdorff = 0.0;
    bool hd_sentinel = false;  // either mask empty; HD holds the image diagonal
};

struct MetricsReport {
    std::map<int, double> per_class_dice;       // mean over samples
    std::map<int, double> per_class_hausdorff;  // mean over non-sentinel samples
    double mean_dice = 0.0;                     // mean of per-class means
    double mean_hd = 0.0;
    std::vector<SampleClassMetric> rows;
};

struct HausdorffResult {
    double distance = 0.0;
    bool sentinel = false;
};

// Per-pixel argmax; ties break toward the lowest class index.
LabelMask argmax_predict(const ProbMap& probs);

// 2|A n B| / (|A| + |B|) on the binary masks of `cls`; 1 when both empty.
double dice_coefficient(const LabelMask& pred, const LabelMask& gt, int cls);

// Exact symmetric Hausdorff distance in pixel units between the foreground
// point sets of `cls`. An empty side yields the image-diagonal sentinel.
HausdorffResult hausdorff_distance_checked(const LabelMask& pred, const LabelMask& gt, int cls);
double hausdorff_distance(const LabelMask& pred, const LabelMask& gt, int cls);

// Scores the dataset's test samples on the classes it annotates: every
// foreground class for fully labeled data, only the kept classes for partial
// data (prediction projected into the dataset's merged space first).
MetricsReport evaluate_dataset(const std::vector<LabelMask>& predictions,
                               const std::vector<const Sample*>& samples,
                               const DatasetDescriptor& descriptor);

}  // namespace partialseg
