#pragma once

#include "citygan/tensor.hpp"

namespace citygan {

/// Appends one constant plane per label coordinate to each image:
/// channel 3+c of sample n is filled with labels(n, c). Labels are used raw.
template <typename Scalar>
Tensor4<Scalar> broadcast_label_plane(const Tensor4<Scalar>& images, const LabelBatch<Scalar>& labels)
{
    if (labels.rows() != images.batch()) {
        throw ShapeError("label batch has " + std::to_string(labels.rows()) + " rows for " +
                         std::to_string(images.batch()) + " images");
    }
    const Index extra = labels.cols();
    Tensor4<Scalar> out(images.batch(), images.channels() + extra, images.height(), images.width());
    for (Index n = 0; n < images.batch(); ++n) {
        auto dst = out.sample(n);
        dst.leftCols(images.channels()) = images.sample(n);
        for (Index c = 0; c < extra; ++c) dst.col(images.channels() + c).setConstant(labels(n, c));
    }
    return out;
}

/// Single-label overload: the same label for every sample.
template <typename Scalar>
Tensor4<Scalar> broadcast_label_plane(const Tensor4<Scalar>& images, const Vector<Scalar>& label)
{
    LabelBatch<Scalar> rows = label.transpose().replicate(images.batch(), 1);
    return broadcast_label_plane(images, rows);
}

/// Drops the trailing label planes, keeping the first `channels` channels.
template <typename Scalar>
Tensor4<Scalar> leading_channels(const Tensor4<Scalar>& t, Index channels)
{
    Tensor4<Scalar> out(t.batch(), channels, t.height(), t.width());
    for (Index n = 0; n < t.batch(); ++n) out.sample(n) = t.sample(n).leftCols(channels);
    return out;
}

} // namespace citygan
