#pragma once

#include <string>
#include <vector>

#include "partialseg/grid.hpp"
#include "partialseg/label_space.hpp"

namespace partialseg {

enum class DatasetRole { Full, Partial };

// Identity and labeling contract of one dataset. All samples of a dataset
// share one merge partition; loss dispatch during joint training keys off
// `role`.
struct DatasetDescriptor {
    std::string id;
    DatasetRole role = DatasetRole::Partial;
    std::vector<int> kept;  // annotated foreground classes, ascending
    MergePartition partition;
    std::vector<std::string> train_samples;
    std::vector<std::string> test_samples;

    DatasetDescriptor(std::string id_, DatasetRole role_, std::vector<int> kept_,
                      MergePartition partition_)
        : id(std::move(id_)), role(role_), kept(std::move(kept_)),
          partition(std::move(partition_)) {}

    bool fully_labeled() const { return role == DatasetRole::Full; }
};

// One phantom image with its generator-private full ground truth and the
// merged-space mask a model is allowed to see during training.
struct Sample {
    std::string id;
    PixelField image;      // H x W x 1, intensities in [0, 1]
    LabelMask gt_full;     // global space; held back from training on partial data
    LabelMask gt_visible;  // project_labels(gt_full, dataset partition)

    bool visible_has_foreground(int background_group) const {
        for (int v : gt_visible.labels)
            if (v != background_group) return true;
        return false;
    }
};

}  // namespace partialseg
