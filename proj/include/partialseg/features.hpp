#pragma once

#include <vector>

#include "partialseg/grid.hpp"

namespace partialseg {

// Fixed (non-learned) per-pixel features: raw intensity, normalized x/y
// coordinates, and local mean/stddev at several window sizes. Stands in for
// a learned backbone while keeping every gradient analytic.
struct FeatureConfig {
    std::vector<int> windows{3, 7, 15};

    int dim() const { return 3 + 2 * static_cast<int>(windows.size()); }
};

class FeatureExtractor {
public:
    explicit FeatureExtractor(FeatureConfig config = {});

    int dim() const { return config_.dim(); }
    const FeatureConfig& config() const { return config_; }

    // image: H x W x 1 -> features: H x W x dim()
    PixelField extract(const PixelField& image) const;

private:
    FeatureConfig config_;
};

}  // namespace partialseg
