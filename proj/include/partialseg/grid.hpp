#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "partialseg/errors.hpp"

namespace partialseg {

// Dense H x W field of per-pixel channel vectors, pixel-major layout.
// Used for images (1 channel), logits and probabilities (N channels) and
// loss gradients with respect to logits.
class PixelField {
public:
    PixelField() = default;

    PixelField(int height, int width, int channels, double fill = 0.0)
        : height_(height), width_(width), channels_(channels),
          values_(static_cast<std::size_t>(height) * width * channels, fill) {
        if (height <= 0 || width <= 0 || channels <= 0)
            throw ShapeMismatch("PixelField dimensions must be positive");
    }

    int height() const { return height_; }
    int width() const { return width_; }
    int channels() const { return channels_; }
    int num_pixels() const { return height_ * width_; }
    std::size_t size() const { return values_.size(); }

    double& at(int y, int x, int c) { return values_[offset(y, x) + c]; }
    double at(int y, int x, int c) const { return values_[offset(y, x) + c]; }

    std::span<double> pixel(int y, int x) { return {values_.data() + offset(y, x), static_cast<std::size_t>(channels_)}; }
    std::span<const double> pixel(int y, int x) const { return {values_.data() + offset(y, x), static_cast<std::size_t>(channels_)}; }

    std::span<double> pixel(int p) { return {values_.data() + static_cast<std::size_t>(p) * channels_, static_cast<std::size_t>(channels_)}; }
    std::span<const double> pixel(int p) const { return {values_.data() + static_cast<std::size_t>(p) * channels_, static_cast<std::size_t>(channels_)}; }

    double* data() { return values_.data(); }
    const double* data() const { return values_.data(); }

    bool same_shape(const PixelField& other) const {
        return height_ == other.height_ && width_ == other.width_ && channels_ == other.channels_;
    }

private:
    std::size_t offset(int y, int x) const {
        return (static_cast<std::size_t>(y) * width_ + x) * channels_;
    }

    int height_ = 0, width_ = 0, channels_ = 0;
    std::vector<double> values_;
};

// Pre-softmax responses, always in the global label space.
using LogitMap = PixelField;

// Posterior probabilities. `space` is empty for the global label space or a
// MergePartition id for merged-space probabilities (see marginal_prob).
struct ProbMap {
    PixelField values;
    std::string space;

    int height() const { return values.height(); }
    int width() const { return values.width(); }
    int num_classes() const { return values.channels(); }
    bool global() const { return space.empty(); }
};

// Per-pixel class indices. `space` follows the same tagging convention as
// ProbMap; `num_classes` is the size of the tagged space.
struct LabelMask {
    int height = 0, width = 0;
    int num_classes = 0;
    std::string space;
    std::vector<int> labels;

    LabelMask() = default;
    LabelMask(int h, int w, int classes, std::string space_tag = {})
        : height(h), width(w), num_classes(classes), space(std::move(space_tag)),
          labels(static_cast<std::size_t>(h) * w, 0) {}

    int& at(int y, int x) { return labels[static_cast<std::size_t>(y) * width + x]; }
    int at(int y, int x) const { return labels[static_cast<std::size_t>(y) * width + x]; }
    int num_pixels() const { return height * width; }
    bool global() const { return space.empty(); }

    bool operator==(const LabelMask& other) const = default;
};

}  // namespace partialseg
