#include "partialseg/model.hpp"

#include <cmath>

#include "partialseg/errors.hpp"

namespace partialseg {

void PixelModel::compute_offsets() {
    const int d = config_.feature_dim;
    const int h = config_.hidden_width;
    const int n = config_.num_classes;
    if (h > 0) {
        w1_ = 0;
        b1_ = static_cast<std::size_t>(d) * h;
        w2_ = b1_ + h;
        b2_ = w2_ + static_cast<std::size_t>(h) * n;
    } else {
        w2_ = 0;
        b2_ = static_cast<std::size_t>(d) * n;
    }
}

PixelModel::PixelModel(ModelConfig config, Rng& init_rng) : config_(config) {
    if (config_.feature_dim <= 0 || config_.num_classes < 2)
        throw ConfigError("PixelModel needs a positive feature dim and at least two classes");
    params_.assign(config_.num_params(), 0.0);
    compute_offsets();

    // Scaled Gaussian init for weights, zero biases.
    const int d = config_.feature_dim;
    const int h = config_.hidden_width;
    const int n = config_.num_classes;
    if (h > 0) {
        const double s1 = 1.0 / std::sqrt(static_cast<double>(d));
        for (std::size_t i = 0; i < static_cast<std::size_t>(d) * h; ++i)
            params_[w1_ + i] = init_rng.normal(0.0, s1);
        const double s2 = 1.0 / std::sqrt(static_cast<double>(h));
        for (std::size_t i = 0; i < static_cast<std::size_t>(h) * n; ++i)
            params_[w2_ + i] = init_rng.normal(0.0, s2);
    } else {
        const double s = 1.0 / std::sqrt(static_cast<double>(d));
        for (std::size_t i = 0; i < static_cast<std::size_t>(d) * n; ++i)
            params_[w2_ + i] = init_rng.normal(0.0, s);
    }
}

PixelModel::PixelModel(ModelConfig config, std::vector<double> params)
    : config_(config), params_(std::move(params)) {
    if (params_.size() != config_.num_params())
        throw VersionMismatch("parameter vector does not match model configuration");
    compute_offsets();
}

LogitMap PixelModel::forward(const PixelField& features) const {
    if (features.channels() != config_.feature_dim)
        throw ShapeMismatch("feature dimension does not match the model");
    const int d = config_.feature_dim;
    const int h = config_.hidden_width;
    const int n = config_.num_classes;

    LogitMap logits(features.height(), features.width(), n);
    std::vector<double> hidden(std::max(h, 1));
    for (int p = 0; p < features.num_pixels(); ++p) {
        auto f = features.pixel(p);
        auto a = logits.pixel(p);
        if (h > 0) {
            for (int j = 0; j < h; ++j) {
                double z = params_[b1_ + j];
                const double* w = &params_[w1_ + static_cast<std::size_t>(j) * d];
                for (int i = 0; i < d; ++i) z += w[i] * f[i];
                hidden[j] = std::tanh(z);
            }
            for (int c = 0; c < n; ++c) {
                double z = params_[b2_ + c];
                const double* w = &params_[w2_ + static_cast<std::size_t>(c) * h];
                for (int j = 0; j < h; ++j) z += w[j] * hidden[j];
                a[c] = z;
            }
        } else {
            for (int c = 0; c < n; ++c) {
                double z = params_[b2_ + c];
                const double* w = &params_[w2_ + static_cast<std::size_t>(c) * d];
                for (int i = 0; i < d; ++i) z += w[i] * f[i];
                a[c] = z;
            }
        }
    }
    return logits;
}

void PixelModel::backward(const PixelField& features, const PixelField& logit_grad,
                          std::vector<double>& grad) const {
    if (grad.size() != params_.size())
        throw ShapeMismatch("gradient accumulator size does not match the model");
    const int d = config_.feature_dim;
    const int h = config_.hidden_width;
    const int n = config_.num_classes;

    std::vector<double> hidden(std::max(h, 1));
    std::vector<double> hidden_grad(std::max(h, 1));
    for (int p = 0; p < features.num_pixels(); ++p) {
        auto f = features.pixel(p);
        auto g = logit_grad.pixel(p);
        if (h > 0) {
            for (int j = 0; j < h; ++j) {
                double z = params_[b1_ + j];
                const double* w = &params_[w1_ + static_cast<std::size_t>(j) * d];
                for (int i = 0; i < d; ++i) z += w[i] * f[i];
                hidden[j] = std::tanh(z);
            }
            for (int j = 0; j < h; ++j) hidden_grad[j] = 0.0;
            for (int c = 0; c < n; ++c) {
                grad[b2_ + c] += g[c];
                const double* w = &params_[w2_ + static_cast<std::size_t>(c) * h];
                double* gw = &grad[w2_ + static_cast<std::size_t>(c) * h];
                for (int j = 0; j < h; ++j) {
                    gw[j] += g[c] * hidden[j];
                    hidden_grad[j] += g[c] * w[j];
                }
            }
            for (int j = 0; j < h; ++j) {
                const double dz = hidden_grad[j] * (1.0 - hidden[j] * hidden[j]);
                grad[b1_ + j] += dz;
                double* gw = &grad[w1_ + static_cast<std::size_t>(j) * d];
                for (int i = 0; i < d; ++i) gw[i] += dz * f[i];
            }
        } else {
            for (int c = 0; c < n; ++c) {
                grad[b2_ + c] += g[c];
                double* gw = &grad[w2_ + static_cast<std::size_t>(c) * d];
                for (int i = 0; i < d; ++i) gw[i] += g[c] * f[i];
            }
        }
    }
}

OptimizerKind optimizer_from_string(const std::string& name) {
    if (name == "sgd") return OptimizerKind::Sgd;
    if (name == "adam") return OptimizerKind::Adam;
    throw ConfigError("unknown optimizer '" + name + "'");
}

std::string to_string(OptimizerKind kind) {
    return kind == OptimizerKind::Sgd ? "sgd" : "adam";
}

Optimizer::Optimizer(OptimizerKind kind, std::size_t size) : kind_(kind) {
    if (kind_ == OptimizerKind::Adam) {
        m_.assign(size, 0.0);
        v_.assign(size, 0.0);
    }
}

void Optimizer::step(std::vector<double>& params, const std::vector<double>& grad, double lr) {
    ++t_;
    if (kind_ == OptimizerKind::Sgd) {
        for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grad[i];
        return;
    }
    const double corr1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
    const double corr2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * grad[i];
        v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * grad[i] * grad[i];
        params[i] -= lr * (m_[i] / corr1) / (std::sqrt(v_[i] / corr2) + kEpsilon);
    }
}

std::vector<double> Optimizer::serialize() const {
    std::vector<double> state{static_cast<double>(t_)};
    state.insert(state.end(), m_.begin(), m_.end());
    state.insert(state.end(), v_.begin(), v_.end());
    return state;
}

void Optimizer::restore(const std::vector<double>& state) {
    if (state.empty() || state.size() != 1 + m_.size() + v_.size())
        throw VersionMismatch("optimizer state size mismatch");
    t_ = static_cast<std::int64_t>(state[0]);
    std::copy(state.begin() + 1, state.begin() + 1 + static_cast<std::ptrdiff_t>(m_.size()),
              m_.begin());
    std::copy(state.begin() + 1 + static_cast<std::ptrdiff_t>(m_.size()), state.end(), v_.begin());
}

}  // namespace partialseg
