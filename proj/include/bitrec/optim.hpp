#pragma once

// Adam with sparse (touched-row) embedding updates. A single global step
// counter drives the bias correction; rows are updated in ascending index
// order so accumulation is deterministic.

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "bitrec/common.hpp"

namespace bitrec {

struct AdamConfig {
    double learning_rate = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

class Adam {
public:
    Adam() = default;
    Adam(std::size_t parameter_count, AdamConfig config = {})
        : cfg_(config), m_(parameter_count, 0.0), v_(parameter_count, 0.0) {}

    void begin_step() {
        ++t_;
        bias1_ = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
        bias2_ = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    }

    // Update `width` consecutive parameters starting at `offset`.
    void update_range(std::span<double> params, std::span<const double> grads, std::size_t offset,
                      std::size_t width) {
        for (std::size_t j = offset; j < offset + width; ++j) {
            const double g = grads[j];
            m_[j] = cfg_.beta1 * m_[j] + (1.0 - cfg_.beta1) * g;
            v_[j] = cfg_.beta2 * v_[j] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = m_[j] / bias1_;
            const double vhat = v_[j] / bias2_;
            params[j] -= cfg_.learning_rate * mhat / (std::sqrt(vhat) + cfg_.epsilon);
        }
    }

    uint64_t step_count() const { return t_; }

private:
    AdamConfig cfg_;
    std::vector<double> m_, v_;
    uint64_t t_ = 0;
    double bias1_ = 1.0, bias2_ = 1.0;
};

}  // namespace bitrec
