#include "partialseg/features.hpp"

#include <algorithm>
#include <cmath>

namespace partialseg {

FeatureExtractor::FeatureExtractor(FeatureConfig config) : config_(std::move(config)) {
    for (int w : config_.windows)
        if (w < 1 || w % 2 == 0) throw ShapeMismatch("feature windows must be odd and positive");
}

namespace {

// Summed-area tables over the intensity and its square; window stats in O(1)
// per pixel with clamping at the borders.
struct IntegralImage {
    int height, width;
    std::vector<double> sum, sum_sq;

    explicit IntegralImage(const PixelField& image)
        : height(image.height()), width(image.width()),
          sum((height + 1) * static_cast<std::size_t>(width + 1), 0.0),
          sum_sq((height + 1) * static_cast<std::size_t>(width + 1), 0.0) {
        for (int y = 0; y < height; ++y) {
            for (int x = 0; x < width; ++x) {
                const double v = image.at(y, x, 0);
                const std::size_t i = static_cast<std::size_t>(y + 1) * (width + 1) + (x + 1);
                const std::size_t up = i - (width + 1);
                sum[i] = v + sum[i - 1] + sum[up] - sum[up - 1];
                sum_sq[i] = v * v + sum_sq[i - 1] + sum_sq[up] - sum_sq[up - 1];
            }
        }
    }

    // mean/std over the window [y0,y1] x [x0,x1], inclusive and pre-clamped.
    void window_stats(int y0, int y1, int x0, int x1, double& mean, double& stddev) const {
        const auto rect = [&](const std::vector<double>& t) {
            const std::size_t stride = width + 1;
            return t[(y1 + 1) * stride + (x1 + 1)] - t[(y1 + 1) * stride + x0] -
                   t[y0 * stride + (x1 + 1)] + t[y0 * stride + x0];
        };
        const double count = static_cast<double>(y1 - y0 + 1) * (x1 - x0 + 1);
        mean = rect(sum) / count;
        const double var = std::max(0.0, rect(sum_sq) / count - mean * mean);
        stddev = std::sqrt(var);
    }
};

}  // namespace

PixelField FeatureExtractor::extract(const PixelField& image) const {
    if (image.channels() != 1) throw ShapeMismatch("feature extraction expects a 1-channel image");
    const int height = image.height();
    const int width = image.width();

    PixelField features(height, width, dim());
    const IntegralImage integral(image);
    const double inv_h = height > 1 ? 1.0 / (height - 1) : 0.0;
    const double inv_w = width > 1 ? 1.0 / (width - 1) : 0.0;

    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            auto f = features.pixel(y, x);
            f[0] = image.at(y, x, 0);
            f[1] = x * inv_w;
            f[2] = y * inv_h;
            int slot = 3;
            for (int w : config_.windows) {
                const int r = w / 2;
                double mean, stddev;
                integral.window_stats(std::max(0, y - r), std::min(height - 1, y + r),
                                      std::max(0, x - r), std::min(width - 1, x + r), mean,
                                      stddev);
                f[slot++] = mean;
                f[slot++] = stddev;
            }
        }
    }
    return features;
}

}  // namespace partialseg
