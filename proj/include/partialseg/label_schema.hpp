#pragma once

#include <string>
#include <utility>
#include <vector>

#include "partialseg/label_space.hpp"

namespace partialseg {

// Serializable bundle of the global label space, per-dataset kept-class sets
// and the exclusion subsets. JSON shape:
//   {"classes": [...], "datasets": [{"id": ..., "kept": [...]}], "exclusion": {"n": [...]}}
struct LabelSchema {
    LabelSpace space;
    std::vector<std::pair<std::string, std::vector<int>>> dataset_kept;
    ExclusionMap exclusion;

    MergePartition partition_for(const std::string& dataset_id) const;
};

std::string label_schema_to_json(const LabelSchema& schema);
LabelSchema label_schema_from_json(const std::string& text);

}  // namespace partialseg
