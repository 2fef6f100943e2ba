#pragma once

#include <cmath>
#include <vector>

#include "citygan/layers.hpp"

namespace citygan {

/// Mean binary cross-entropy of sigmoid(logits) against a constant target,
/// computed on logits: max(z,0) - z*t + log(1 + exp(-|z|)).
template <typename Scalar>
Scalar bce_with_logits(const Matrix<Scalar>& logits, Scalar target)
{
    Scalar total = 0;
    for (Index i = 0; i < logits.size(); ++i) {
        const Scalar z = logits.data()[i];
        total += std::max(z, Scalar(0)) - z * target + std::log1p(std::exp(-std::abs(z)));
    }
    return total / Scalar(logits.size());
}

/// Gradient of bce_with_logits with respect to the logits.
template <typename Scalar>
Matrix<Scalar> bce_with_logits_grad(const Matrix<Scalar>& logits, Scalar target)
{
    const Scalar inv_n = Scalar(1) / Scalar(logits.size());
    return logits.unaryExpr([&](Scalar z) { return (sigmoid(z) - target) * inv_n; });
}

struct AdamSettings {
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Adam with bias correction. Moment buffers are aligned with the parameter
/// list given at construction.
template <typename Scalar>
class Adam {
public:
    Adam() = default;
    Adam(const std::vector<Parameter<Scalar>*>& params, AdamSettings settings) : settings_(settings)
    {
        for (const auto* p : params) {
            first_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
            second_.push_back(Matrix<Scalar>::Zero(p->value.rows(), p->value.cols()));
        }
    }

    void step(const std::vector<Parameter<Scalar>*>& params)
    {
        ++steps_;
        const Scalar b1 = Scalar(settings_.beta1);
        const Scalar b2 = Scalar(settings_.beta2);
        const Scalar correction1 = Scalar(1) - std::pow(b1, Scalar(steps_));
        const Scalar correction2 = Scalar(1) - std::pow(b2, Scalar(steps_));
        const Scalar step_size = Scalar(settings_.learning_rate) / correction1;
        const Scalar eps = Scalar(settings_.epsilon);
        for (std::size_t i = 0; i < params.size(); ++i) {
            Parameter<Scalar>& p = *params[i];
            const Matrix<Scalar>& g = p.ensure_grad();
            first_[i] = b1 * first_[i] + (Scalar(1) - b1) * g;
            second_[i] = b2 * second_[i] + (Scalar(1) - b2) * g.cwiseProduct(g);
            p.value.array() -=
                step_size * first_[i].array() / ((second_[i].array() / correction2).sqrt() + eps);
        }
    }

    const AdamSettings& settings() const { return settings_; }
    std::int64_t steps() const { return steps_; }
    void set_steps(std::int64_t steps) { steps_ = steps; }
    std::vector<Matrix<Scalar>>& first_moments() { return first_; }
    std::vector<Matrix<Scalar>>& second_moments() { return second_; }
    const std::vector<Matrix<Scalar>>& first_moments() const { return first_; }
    const std::vector<Matrix<Scalar>>& second_moments() const { return second_; }

private:
    AdamSettings settings_;
    std::int64_t steps_ = 0;
    std::vector<Matrix<Scalar>> first_;
    std::vector<Matrix<Scalar>> second_;
};

} // namespace citygan
