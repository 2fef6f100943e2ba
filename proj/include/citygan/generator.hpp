#pragma once

#include <cstdint>
#include <vector>

#include "citygan/layers.hpp"
#include "citygan/network_config.hpp"

namespace citygan {

/// Transposed-convolution generator. The input vector (noise, then label
/// weights for conditional variants) is read as a 1x1 image, grown to 4x4 by
/// a stride-1 stage, then doubled by stride-2 stages up to image_size.
/// Hidden stages: batch norm + rectifier. Output: 3 channels through tanh.
template <typename Scalar>
class Generator {
public:
    Generator(const NetworkConfig& config, std::uint64_t seed) : config_(config)
    {
        config_.validate();
        Rng rng(seed);
        const int stages = config_.stride2_stages();
        Index in = config_.generator_input_size();
        for (int j = 0; j < stages; ++j) {
            const Index width = Index(config_.base_feature_maps) << (stages - 1 - j);
            const ConvGeometry geom = j == 0 ? ConvGeometry{4, 1, 0} : ConvGeometry{4, 2, 1};
            const std::string name = "g.stage" + std::to_string(j);
            convs_.emplace_back(name, in, width, geom, rng);
            norms_.emplace_back(name + ".bn", width);
            in = width;
        }
        convs_.emplace_back("g.out", in, 3, ConvGeometry{4, 2, 1}, rng);
    }

    const NetworkConfig& config() const { return config_; }
    Index input_size() const { return config_.generator_input_size(); }

    Index stride2_stage_count() const
    {
        Index count = 0;
        for (const auto& c : convs_) count += c.geometry().stride == 2 ? 1 : 0;
        return count;
    }

    const std::vector<ConvTranspose2d<Scalar>>& stages() const { return convs_; }

    /// Inference pass using running normalization statistics; safe to call concurrently.
    Tensor4<Scalar> forward(const NoiseBatch<Scalar>& noise, const LabelBatch<Scalar>& labels) const
    {
        Tensor4<Scalar> h = assemble_input(noise, labels);
        for (std::size_t j = 0; j < norms_.size(); ++j) {
            h = norms_[j].forward(convs_[j].forward(h));
            relu_inplace(h.data());
        }
        h = convs_.back().forward(h);
        h.data() = h.data().array().tanh();
        return h;
    }

    /// Training pass: batch statistics, running estimates updated, activations cached for backward().
    Tensor4<Scalar> forward_train(const NoiseBatch<Scalar>& noise, const LabelBatch<Scalar>& labels)
    {
        Tensor4<Scalar> h = assemble_input(noise, labels);
        hidden_.resize(norms_.size());
        for (std::size_t j = 0; j < norms_.size(); ++j) {
            h = norms_[j].forward_train(convs_[j].forward_train(h));
            relu_inplace(h.data());
            hidden_[j] = h.data();
        }
        h = convs_.back().forward_train(h);
        h.data() = h.data().array().tanh();
        output_ = h.data();
        return h;
    }

    /// Accumulates parameter gradients and returns d(loss)/d(input vector), N x input_size.
    Matrix<Scalar> backward(const Tensor4<Scalar>& d_images)
    {
        Tensor4<Scalar> d = d_images;
        d.data() = d.data().array() * (Scalar(1) - output_.array().square());
        d = convs_.back().backward(d);
        for (std::size_t j = norms_.size(); j-- > 0;) {
            d.data() = rectifier_backward<Scalar>(hidden_[j], d.data(), Scalar(0));
            d = convs_[j].backward(norms_[j].backward(d));
        }
        return d.as_rows();
    }

    /// On/off state of every rectifier in the last training pass.
    std::vector<bool> rectifier_pattern() const
    {
        std::vector<bool> out;
        for (const auto& h : hidden_) {
            for (Index i = 0; i < h.size(); ++i) out.push_back(h[i] > Scalar(0));
        }
        return out;
    }

    std::vector<Parameter<Scalar>*> parameters()
    {
        std::vector<Parameter<Scalar>*> out;
        for (std::size_t j = 0; j < convs_.size(); ++j) {
            out.push_back(&convs_[j].weight());
            if (j < norms_.size()) {
                out.push_back(&norms_[j].gamma());
                out.push_back(&norms_[j].beta());
            }
        }
        return out;
    }

    std::vector<const Parameter<Scalar>*> parameters() const
    {
        auto params = const_cast<Generator*>(this)->parameters();
        return {params.begin(), params.end()};
    }

    /// Running normalization statistics, in checkpoint order.
    std::vector<Vector<Scalar>*> buffers()
    {
        std::vector<Vector<Scalar>*> out;
        for (auto& n : norms_) {
            out.push_back(&n.running_mean());
            out.push_back(&n.running_var());
        }
        return out;
    }

    Index parameter_count() const
    {
        Index total = 0;
        for (const auto* p : parameters()) total += p->size();
        return total;
    }

    void zero_grad()
    {
        for (auto* p : parameters()) p->zero_grad();
    }

private:
    Tensor4<Scalar> assemble_input(const NoiseBatch<Scalar>& noise, const LabelBatch<Scalar>& labels) const
    {
        if (noise.cols() != config_.noise_dim) {
            throw ShapeError("noise batch has " + std::to_string(noise.cols()) + " columns, model expects " +
                             std::to_string(config_.noise_dim));
        }
        const int labels_used = config_.effective_labels();
        Matrix<Scalar> input(noise.rows(), config_.generator_input_size());
        input.leftCols(config_.noise_dim) = noise;
        if (labels_used > 0) {
            if (labels.rows() != noise.rows() || labels.cols() != labels_used) {
                throw ShapeError("label batch shape (" + std::to_string(labels.rows()) + ", " +
                                 std::to_string(labels.cols()) + ") does not match (" +
                                 std::to_string(noise.rows()) + ", " + std::to_string(labels_used) + ")");
            }
            input.rightCols(labels_used) = labels;
        }
        return Tensor4<Scalar>::from_rows(input);
    }

    NetworkConfig config_;
    std::vector<ConvTranspose2d<Scalar>> convs_;
    std::vector<BatchNorm2d<Scalar>> norms_;
    std::vector<Vector<Scalar>> hidden_;
    Vector<Scalar> output_;
};

/// Network factory.
template <typename Scalar = float>
Generator<Scalar> build_generator(const NetworkConfig& config, std::uint64_t seed)
{
    return Generator<Scalar>(config, seed);
}

} // namespace citygan
