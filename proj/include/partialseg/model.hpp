#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "partialseg/grid.hpp"
#include "partialseg/rng.hpp"

namespace partialseg {

// Per-pixel classifier producing logits from fixed features: either a plain
// linear map W f + b, or one tanh hidden layer when hidden_width > 0.
struct ModelConfig {
    int feature_dim = 0;
    int hidden_width = 16;  // 0 = linear model
    int num_classes = 0;

    std::size_t num_params() const {
        if (hidden_width <= 0)
            return static_cast<std::size_t>(feature_dim) * num_classes + num_classes;
        return static_cast<std::size_t>(feature_dim) * hidden_width + hidden_width +
               static_cast<std::size_t>(hidden_width) * num_classes + num_classes;
    }
};

class PixelModel {
public:
    PixelModel(ModelConfig config, Rng& init_rng);
    PixelModel(ModelConfig config, std::vector<double> params);

    const ModelConfig& config() const { return config_; }
    const std::vector<double>& params() const { return params_; }
    std::vector<double>& params() { return params_; }

    LogitMap forward(const PixelField& features) const;

    // Accumulates d(loss)/d(params) into `grad` given d(loss)/d(logits).
    // Recomputes the hidden activations; callers keep `grad` across a batch.
    void backward(const PixelField& features, const PixelField& logit_grad,
                  std::vector<double>& grad) const;

private:
    ModelConfig config_;
    std::vector<double> params_;

    // layout offsets into params_
    std::size_t w1_ = 0, b1_ = 0, w2_ = 0, b2_ = 0;
    void compute_offsets();
};

enum class OptimizerKind { Sgd, Adam };

OptimizerKind optimizer_from_string(const std::string& name);
std::string to_string(OptimizerKind kind);

// First-order update rule over a flat parameter vector.
class Optimizer {
public:
    Optimizer(OptimizerKind kind, std::size_t size);

    void step(std::vector<double>& params, const std::vector<double>& grad, double lr);

    OptimizerKind kind() const { return kind_; }
    std::int64_t steps() const { return t_; }

    // flat state for checkpoints: [t, m..., v...] for adam, [t] for sgd
    std::vector<double> serialize() const;
    void restore(const std::vector<double>& state);

    static constexpr double kBeta1 = 0.9;
    static constexpr double kBeta2 = 0.999;
    static constexpr double kEpsilon = 1e-8;

private:
    OptimizerKind kind_;
    std::int64_t t_ = 0;
    std::vector<double> m_, v_;
};

}  // namespace partialseg
