#pragma once

#include <cstdint>
#include <vector>

#include "citygan/broadcast.hpp"
#include "citygan/layers.hpp"
#include "citygan/network_config.hpp"

namespace citygan {

/// Convolutional discriminator. Stride-2 stages halve the image down to 4x4
/// (batch norm on all but the first), a kernel-4 valid convolution reduces
/// to 1x1, then a linear head produces one logit per sample.
///
///  - Plain:      features -> linear -> sigmoid
///  - Broadcast:  label planes appended to the image first, same head as Plain
///  - LateFusion: [features, label] -> linear -> rectifier -> linear -> sigmoid
template <typename Scalar>
class Discriminator {
public:
    static constexpr Scalar kLeakySlope = Scalar(0.2);

    Discriminator(const NetworkConfig& config, std::uint64_t seed) : config_(config)
    {
        config_.validate();
        Rng rng(seed);
        const int stages = config_.stride2_stages();
        Index in = config_.discriminator_input_channels();
        for (int j = 0; j < stages; ++j) {
            const Index width = Index(config_.base_feature_maps) << j;
            const std::string name = "d.stage" + std::to_string(j);
            convs_.emplace_back(name, in, width, ConvGeometry{4, 2, 1}, rng);
            if (j > 0) norms_.emplace_back(name + ".bn", width);
            in = width;
        }
        const Index final_width = config_.discriminator_final_width();
        final_ = Conv2d<Scalar>("d.final", in, final_width, ConvGeometry{4, 1, 0}, rng);
        if (config_.variant == Variant::LateFusion) {
            fusion_ = Linear<Scalar>("d.fusion", final_width + config_.label_count, final_width, rng);
        }
        head_ = Linear<Scalar>("d.head", final_width, 1, rng);
    }

    const NetworkConfig& config() const { return config_; }
    Index input_channels() const { return config_.discriminator_input_channels(); }
    const std::vector<Conv2d<Scalar>>& stages() const { return convs_; }
    const Conv2d<Scalar>& final_stage() const { return final_; }
    const Linear<Scalar>& head() const { return head_; }
    const Linear<Scalar>& fusion() const { return fusion_; }

    /// Per-sample logits, N x 1, inference mode.
    Matrix<Scalar> logits(const Tensor4<Scalar>& images, const LabelBatch<Scalar>& labels) const
    {
        Tensor4<Scalar> h = assemble_input(images, labels);
        for (std::size_t j = 0; j < convs_.size(); ++j) {
            h = convs_[j].forward(h);
            if (j > 0) h = norms_[j - 1].forward(h);
            leaky_relu_inplace(h.data(), kLeakySlope);
        }
        h = final_.forward(h);
        leaky_relu_inplace(h.data(), kLeakySlope);
        Matrix<Scalar> features = h.as_rows();
        if (config_.variant == Variant::LateFusion) {
            Matrix<Scalar> hidden = fusion_.forward(fuse(features, labels));
            relu_inplace(hidden);
            return head_.forward(hidden);
        }
        return head_.forward(features);
    }

    /// Probabilities in (0, 1), N x 1.
    Matrix<Scalar> forward(const Tensor4<Scalar>& images, const LabelBatch<Scalar>& labels) const
    {
        return sigmoid(logits(images, labels));
    }

    /// Training pass returning logits; caches activations for backward().
    Matrix<Scalar> forward_train(const Tensor4<Scalar>& images, const LabelBatch<Scalar>& labels)
    {
        Tensor4<Scalar> h = assemble_input(images, labels);
        stage_out_.resize(convs_.size());
        for (std::size_t j = 0; j < convs_.size(); ++j) {
            h = convs_[j].forward_train(h);
            if (j > 0) h = norms_[j - 1].forward_train(h);
            leaky_relu_inplace(h.data(), kLeakySlope);
            stage_out_[j] = h.data();
        }
        h = final_.forward_train(h);
        leaky_relu_inplace(h.data(), kLeakySlope);
        final_out_ = h.as_rows();
        if (config_.variant == Variant::LateFusion) {
            fusion_out_ = fusion_.forward_train(fuse(final_out_, labels));
            relu_inplace(fusion_out_);
            return head_.forward_train(fusion_out_);
        }
        return head_.forward_train(final_out_);
    }

    /// Accumulates parameter gradients from d(loss)/d(logits) and returns
    /// d(loss)/d(images) for the 3 colour channels.
    Tensor4<Scalar> backward(const Matrix<Scalar>& d_logits)
    {
        Matrix<Scalar> d_features;
        if (config_.variant == Variant::LateFusion) {
            Matrix<Scalar> d_hidden = rectifier_backward<Scalar>(fusion_out_, head_.backward(d_logits), Scalar(0));
            d_features = fusion_.backward(d_hidden).leftCols(final_out_.cols());
        } else {
            d_features = head_.backward(d_logits);
        }
        d_features = rectifier_backward<Scalar>(final_out_, d_features, kLeakySlope);
        Tensor4<Scalar> d = final_.backward(Tensor4<Scalar>::from_rows(d_features));
        for (std::size_t j = convs_.size(); j-- > 0;) {
            d.data() = rectifier_backward<Scalar>(stage_out_[j], d.data(), kLeakySlope);
            if (j > 0) d = norms_[j - 1].backward(d);
            d = convs_[j].backward(d);
        }
        if (config_.variant == Variant::Broadcast) return leading_channels(d, 3);
        return d;
    }

    /// On/off state of every (leaky) rectifier in the last training pass.
    std::vector<bool> rectifier_pattern() const
    {
        std::vector<bool> out;
        const auto append = [&out](const auto& values) {
            for (Index i = 0; i < values.size(); ++i) out.push_back(values.data()[i] > Scalar(0));
        };
        for (const auto& s : stage_out_) append(s);
        append(final_out_);
        append(fusion_out_);
        return out;
    }

    std::vector<Parameter<Scalar>*> parameters()
    {
        std::vector<Parameter<Scalar>*> out;
        for (std::size_t j = 0; j < convs_.size(); ++j) {
            out.push_back(&convs_[j].weight());
            if (j > 0) {
                out.push_back(&norms_[j - 1].gamma());
                out.push_back(&norms_[j - 1].beta());
            }
        }
        out.push_back(&final_.weight());
        if (config_.variant == Variant::LateFusion) {
            out.push_back(&fusion_.weight());
            out.push_back(&fusion_.bias());
        }
        out.push_back(&head_.weight());
        out.push_back(&head_.bias());
        return out;
    }

    std::vector<const Parameter<Scalar>*> parameters() const
    {
        auto params = const_cast<Discriminator*>(this)->parameters();
        return {params.begin(), params.end()};
    }

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
    Tensor4<Scalar> assemble_input(const Tensor4<Scalar>& images, const LabelBatch<Scalar>& labels) const
    {
        const Index s = config_.image_size;
        require_shape(images, Shape4{images.batch(), 3, s, s}, "discriminator input");
        if (config_.effective_labels() > 0) {
            if (labels.rows() != images.batch() || labels.cols() != config_.label_count) {
                throw ShapeError("discriminator requires a label batch of shape (" +
                                 std::to_string(images.batch()) + ", " + std::to_string(config_.label_count) +
                                 "), got (" + std::to_string(labels.rows()) + ", " + std::to_string(labels.cols()) +
                                 ")");
            }
        }
        if (config_.variant == Variant::Broadcast && config_.label_count > 0) {
            return broadcast_label_plane(images, labels);
        }
        return images;
    }

    Matrix<Scalar> fuse(const Matrix<Scalar>& features, const LabelBatch<Scalar>& labels) const
    {
        Matrix<Scalar> joined(features.rows(), features.cols() + config_.label_count);
        joined.leftCols(features.cols()) = features;
        if (config_.label_count > 0) joined.rightCols(config_.label_count) = labels;
        return joined;
    }

    NetworkConfig config_;
    std::vector<Conv2d<Scalar>> convs_;
    std::vector<BatchNorm2d<Scalar>> norms_;
    Conv2d<Scalar> final_;
    Linear<Scalar> fusion_;
    Linear<Scalar> head_;

    std::vector<Vector<Scalar>> stage_out_;
    Matrix<Scalar> final_out_;
    Matrix<Scalar> fusion_out_;
};

template <typename Scalar = float>
Discriminator<Scalar> build_discriminator(const NetworkConfig& config, std::uint64_t seed)
{
    return Discriminator<Scalar>(config, seed);
}

} // namespace citygan
