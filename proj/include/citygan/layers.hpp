#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "citygan/rng.hpp"
#include "citygan/tensor.hpp"

namespace citygan {

/// Trainable tensor with its accumulated gradient. The gradient is
/// allocated lazily so inference-only networks carry no gradient memory.
template <typename Scalar>
struct Parameter {
    std::string name;
    Matrix<Scalar> value;
    Matrix<Scalar> grad;

    Index size() const { return value.size(); }

    Matrix<Scalar>& ensure_grad()
    {
        if (grad.rows() != value.rows() || grad.cols() != value.cols()) {
            grad = Matrix<Scalar>::Zero(value.rows(), value.cols());
        }
        return grad;
    }

    void zero_grad()
    {
        if (grad.size() != 0) grad.setZero();
    }
};

struct ConvGeometry {
    Index kernel = 4;
    Index stride = 2;
    Index padding = 1;

    /// Spatial extent after a forward convolution over `in`.
    Index conv_out(Index in) const { return (in + 2 * padding - kernel) / stride + 1; }
    /// Spatial extent after a transposed convolution over `in`.
    Index transposed_out(Index in) const { return (in - 1) * stride - 2 * padding + kernel; }
};

namespace detail {

/// Unfolds one sample, (in_h*in_w) x channels, into a
/// (out_h*out_w) x (channels*K*K) patch matrix. Out-of-range taps are zero.
template <typename Scalar, typename Src>
Matrix<Scalar> im2col(const Src& src, Index channels, Index in_h, Index in_w, const ConvGeometry& g,
                      Index out_h, Index out_w)
{
    const Index k = g.kernel;
    Matrix<Scalar> cols(out_h * out_w, channels * k * k);
    for (Index c = 0; c < channels; ++c) {
        const Scalar* plane = src.data() + c * in_h * in_w;
        for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx) {
                Scalar* dst = cols.data() + ((c * k + ky) * k + kx) * out_h * out_w;
                for (Index oy = 0; oy < out_h; ++oy) {
                    const Index iy = oy * g.stride - g.padding + ky;
                    Scalar* row = dst + oy * out_w;
                    if (iy < 0 || iy >= in_h) {
                        std::fill(row, row + out_w, Scalar(0));
                        continue;
                    }
                    for (Index ox = 0; ox < out_w; ++ox) {
                        const Index ix = ox * g.stride - g.padding + kx;
                        row[ox] = (ix < 0 || ix >= in_w) ? Scalar(0) : plane[iy * in_w + ix];
                    }
                }
            }
        }
    }
    return cols;
}

/// Adjoint of im2col: scatter-adds patch columns back into a sample.
template <typename Scalar, typename Dst>
void col2im_add(const Matrix<Scalar>& cols, Index channels, Index in_h, Index in_w, const ConvGeometry& g,
                Index out_h, Index out_w, Dst&& dst)
{
    const Index k = g.kernel;
    for (Index c = 0; c < channels; ++c) {
        Scalar* plane = dst.data() + c * in_h * in_w;
        for (Index ky = 0; ky < k; ++ky) {
            for (Index kx = 0; kx < k; ++kx) {
                const Scalar* src = cols.data() + ((c * k + ky) * k + kx) * out_h * out_w;
                for (Index oy = 0; oy < out_h; ++oy) {
                    const Index iy = oy * g.stride - g.padding + ky;
                    if (iy < 0 || iy >= in_h) continue;
                    const Scalar* row = src + oy * out_w;
                    for (Index ox = 0; ox < out_w; ++ox) {
                        const Index ix = ox * g.stride - g.padding + kx;
                        if (ix >= 0 && ix < in_w) plane[iy * in_w + ix] += row[ox];
                    }
                }
            }
        }
    }
}

} // namespace detail

/// Bias-free 2-D convolution. Weight is (in*K*K) x out, matching the
/// flattened (out, in, K, K) kernel layout.
template <typename Scalar>
class Conv2d {
public:
    Conv2d() = default;
    Conv2d(std::string name, Index in_channels, Index out_channels, ConvGeometry geometry, Rng& rng)
        : in_(in_channels), out_(out_channels), geom_(geometry)
    {
        weight_.name = std::move(name) + ".weight";
        weight_.value = rng.normal_matrix<Scalar>(in_ * geom_.kernel * geom_.kernel, out_, 0.02);
    }

    Index in_channels() const { return in_; }
    Index out_channels() const { return out_; }
    const ConvGeometry& geometry() const { return geom_; }
    Parameter<Scalar>& weight() { return weight_; }
    const Parameter<Scalar>& weight() const { return weight_; }

    Tensor4<Scalar> forward(const Tensor4<Scalar>& x) const
    {
        check_input(x);
        const Index oh = geom_.conv_out(x.height());
        const Index ow = geom_.conv_out(x.width());
        Tensor4<Scalar> y(x.batch(), out_, oh, ow);
        for (Index n = 0; n < x.batch(); ++n) {
            const Matrix<Scalar> cols =
                detail::im2col<Scalar>(x.sample(n), in_, x.height(), x.width(), geom_, oh, ow);
            y.sample(n).noalias() = cols * weight_.value;
        }
        return y;
    }

    Tensor4<Scalar> forward_train(const Tensor4<Scalar>& x)
    {
        input_ = x;
        return forward(x);
    }

    Tensor4<Scalar> backward(const Tensor4<Scalar>& dy)
    {
        const Tensor4<Scalar>& x = input_;
        Tensor4<Scalar> dx(x.batch(), in_, x.height(), x.width());
        Matrix<Scalar>& dw = weight_.ensure_grad();
        for (Index n = 0; n < x.batch(); ++n) {
            const Matrix<Scalar> cols =
                detail::im2col<Scalar>(x.sample(n), in_, x.height(), x.width(), geom_, dy.height(), dy.width());
            dw.noalias() += cols.transpose() * dy.sample(n);
            const Matrix<Scalar> dcols = dy.sample(n) * weight_.value.transpose();
            detail::col2im_add(dcols, in_, x.height(), x.width(), geom_, dy.height(), dy.width(), dx.sample(n));
        }
        return dx;
    }

private:
    void check_input(const Tensor4<Scalar>& x) const
    {
        if (x.channels() != in_) {
            throw ShapeError("conv expects " + std::to_string(in_) + " input channels, got " +
                             std::to_string(x.channels()));
        }
    }

    Index in_ = 0;
    Index out_ = 0;
    ConvGeometry geom_;
    Parameter<Scalar> weight_;
    Tensor4<Scalar> input_;
};

/// Bias-free transposed convolution. Weight is in x (out*K*K), matching
/// the flattened (in, out, K, K) kernel layout.
template <typename Scalar>
class ConvTranspose2d {
public:
    ConvTranspose2d() = default;
    ConvTranspose2d(std::string name, Index in_channels, Index out_channels, ConvGeometry geometry, Rng& rng)
        : in_(in_channels), out_(out_channels), geom_(geometry)
    {
        weight_.name = std::move(name) + ".weight";
        // drawn as (out*K*K) x in so the fill order follows the (in, out, K, K) layout
        weight_.value = rng.normal_matrix<Scalar>(out_ * geom_.kernel * geom_.kernel, in_, 0.02).transpose();
    }

    Index in_channels() const { return in_; }
    Index out_channels() const { return out_; }
    const ConvGeometry& geometry() const { return geom_; }
    Parameter<Scalar>& weight() { return weight_; }
    const Parameter<Scalar>& weight() const { return weight_; }

    Tensor4<Scalar> forward(const Tensor4<Scalar>& x) const
    {
        if (x.channels() != in_) {
            throw ShapeError("transposed conv expects " + std::to_string(in_) + " input channels, got " +
                             std::to_string(x.channels()));
        }
        const Index oh = geom_.transposed_out(x.height());
        const Index ow = geom_.transposed_out(x.width());
        Tensor4<Scalar> y(x.batch(), out_, oh, ow);
        for (Index n = 0; n < x.batch(); ++n) {
            const Matrix<Scalar> cols = x.sample(n) * weight_.value;
            detail::col2im_add(cols, out_, oh, ow, geom_, x.height(), x.width(), y.sample(n));
        }
        return y;
    }

    Tensor4<Scalar> forward_train(const Tensor4<Scalar>& x)
    {
        input_ = x;
        return forward(x);
    }

    Tensor4<Scalar> backward(const Tensor4<Scalar>& dy)
    {
        const Tensor4<Scalar>& x = input_;
        Tensor4<Scalar> dx(x.batch(), in_, x.height(), x.width());
        Matrix<Scalar>& dw = weight_.ensure_grad();
        for (Index n = 0; n < x.batch(); ++n) {
            const Matrix<Scalar> dcols = detail::im2col<Scalar>(dy.sample(n), out_, dy.height(), dy.width(), geom_,
                                                                x.height(), x.width());
            dx.sample(n).noalias() = dcols * weight_.value.transpose();
            dw.noalias() += x.sample(n).transpose() * dcols;
        }
        return dx;
    }

private:
    Index in_ = 0;
    Index out_ = 0;
    ConvGeometry geom_;
    Parameter<Scalar> weight_;
    Tensor4<Scalar> input_;
};

/// Per-channel batch normalization. Training mode normalizes with batch
/// statistics and folds them into running estimates (momentum 0.1, unbiased
/// variance); inference mode uses the running estimates only.
template <typename Scalar>
class BatchNorm2d {
public:
    static constexpr Scalar kEps = Scalar(1e-5);
    static constexpr Scalar kMomentum = Scalar(0.1);

    BatchNorm2d() = default;
    BatchNorm2d(std::string name, Index channels) : channels_(channels)
    {
        gamma_.name = name + ".gamma";
        gamma_.value = Matrix<Scalar>::Ones(channels, 1);
        beta_.name = name + ".beta";
        beta_.value = Matrix<Scalar>::Zero(channels, 1);
        running_mean_ = Vector<Scalar>::Zero(channels);
        running_var_ = Vector<Scalar>::Ones(channels);
    }

    Index channels() const { return channels_; }
    Parameter<Scalar>& gamma() { return gamma_; }
    Parameter<Scalar>& beta() { return beta_; }
    const Parameter<Scalar>& gamma() const { return gamma_; }
    const Parameter<Scalar>& beta() const { return beta_; }
    Vector<Scalar>& running_mean() { return running_mean_; }
    Vector<Scalar>& running_var() { return running_var_; }
    const Vector<Scalar>& running_mean() const { return running_mean_; }
    const Vector<Scalar>& running_var() const { return running_var_; }

    Tensor4<Scalar> forward(const Tensor4<Scalar>& x) const
    {
        check_input(x);
        Tensor4<Scalar> y(x.batch(), x.channels(), x.height(), x.width());
        for (Index c = 0; c < channels_; ++c) {
            const Scalar scale = gamma_.value(c, 0) / std::sqrt(running_var_[c] + kEps);
            const Scalar shift = beta_.value(c, 0) - running_mean_[c] * scale;
            for (Index n = 0; n < x.batch(); ++n) {
                y.sample(n).col(c).array() = x.sample(n).col(c).array() * scale + shift;
            }
        }
        return y;
    }

    Tensor4<Scalar> forward_train(const Tensor4<Scalar>& x)
    {
        check_input(x);
        const Index count = x.batch() * x.plane();
        xhat_ = Tensor4<Scalar>(x.batch(), x.channels(), x.height(), x.width());
        inv_std_.resize(channels_);
        Tensor4<Scalar> y(x.batch(), x.channels(), x.height(), x.width());
        for (Index c = 0; c < channels_; ++c) {
            Scalar sum = 0;
            for (Index n = 0; n < x.batch(); ++n) sum += x.sample(n).col(c).sum();
            const Scalar mean = sum / Scalar(count);
            Scalar sq = 0;
            for (Index n = 0; n < x.batch(); ++n) sq += (x.sample(n).col(c).array() - mean).square().sum();
            const Scalar var = sq / Scalar(count);
            const Scalar inv_std = Scalar(1) / std::sqrt(var + kEps);
            inv_std_[c] = inv_std;
            for (Index n = 0; n < x.batch(); ++n) {
                xhat_.sample(n).col(c).array() = (x.sample(n).col(c).array() - mean) * inv_std;
                y.sample(n).col(c).array() = xhat_.sample(n).col(c).array() * gamma_.value(c, 0) + beta_.value(c, 0);
            }
            const Scalar unbiased = count > 1 ? sq / Scalar(count - 1) : var;
            running_mean_[c] = (Scalar(1) - kMomentum) * running_mean_[c] + kMomentum * mean;
            running_var_[c] = (Scalar(1) - kMomentum) * running_var_[c] + kMomentum * unbiased;
        }
        return y;
    }

    Tensor4<Scalar> backward(const Tensor4<Scalar>& dy)
    {
        const Index count = dy.batch() * dy.plane();
        Tensor4<Scalar> dx(dy.batch(), dy.channels(), dy.height(), dy.width());
        Matrix<Scalar>& dgamma = gamma_.ensure_grad();
        Matrix<Scalar>& dbeta = beta_.ensure_grad();
        for (Index c = 0; c < channels_; ++c) {
            Scalar sum_dy = 0;
            Scalar sum_dy_xhat = 0;
            for (Index n = 0; n < dy.batch(); ++n) {
                sum_dy += dy.sample(n).col(c).sum();
                sum_dy_xhat += (dy.sample(n).col(c).array() * xhat_.sample(n).col(c).array()).sum();
            }
            dgamma(c, 0) += sum_dy_xhat;
            dbeta(c, 0) += sum_dy;
            const Scalar k = gamma_.value(c, 0) * inv_std_[c] / Scalar(count);
            for (Index n = 0; n < dy.batch(); ++n) {
                dx.sample(n).col(c).array() =
                    k * (Scalar(count) * dy.sample(n).col(c).array() - sum_dy -
                         xhat_.sample(n).col(c).array() * sum_dy_xhat);
            }
        }
        return dx;
    }

private:
    void check_input(const Tensor4<Scalar>& x) const
    {
        if (x.channels() != channels_) {
            throw ShapeError("batch norm expects " + std::to_string(channels_) + " channels, got " +
                             std::to_string(x.channels()));
        }
    }

    Index channels_ = 0;
    Parameter<Scalar> gamma_;
    Parameter<Scalar> beta_;
    Vector<Scalar> running_mean_;
    Vector<Scalar> running_var_;
    Tensor4<Scalar> xhat_;
    Vector<Scalar> inv_std_;
};

/// Fully connected layer on row batches: y = x W^T + b.
template <typename Scalar>
class Linear {
public:
    Linear() = default;
    Linear(std::string name, Index in_features, Index out_features, Rng& rng) : in_(in_features), out_(out_features)
    {
        weight_.name = name + ".weight";
        weight_.value = rng.normal_matrix<Scalar>(out_, in_, 0.02);
        bias_.name = name + ".bias";
        bias_.value = Matrix<Scalar>::Zero(out_, 1);
    }

    Index in_features() const { return in_; }
    Index out_features() const { return out_; }
    Parameter<Scalar>& weight() { return weight_; }
    Parameter<Scalar>& bias() { return bias_; }
    const Parameter<Scalar>& weight() const { return weight_; }
    const Parameter<Scalar>& bias() const { return bias_; }

    Matrix<Scalar> forward(const Matrix<Scalar>& x) const
    {
        if (x.cols() != in_) {
            throw ShapeError("linear layer expects " + std::to_string(in_) + " features, got " +
                             std::to_string(x.cols()));
        }
        Matrix<Scalar> y = x * weight_.value.transpose();
        y.rowwise() += bias_.value.col(0).transpose();
        return y;
    }

    Matrix<Scalar> forward_train(const Matrix<Scalar>& x)
    {
        input_ = x;
        return forward(x);
    }

    Matrix<Scalar> backward(const Matrix<Scalar>& dy)
    {
        weight_.ensure_grad().noalias() += dy.transpose() * input_;
        bias_.ensure_grad().col(0) += dy.colwise().sum().transpose();
        return dy * weight_.value;
    }

private:
    Index in_ = 0;
    Index out_ = 0;
    Parameter<Scalar> weight_;
    Parameter<Scalar> bias_;
    Matrix<Scalar> input_;
};

// Elementwise activations. Backward helpers take the cached forward output.

template <typename Derived>
void relu_inplace(Eigen::DenseBase<Derived>& x)
{
    x.derived() = x.derived().cwiseMax(typename Derived::Scalar(0));
}

template <typename Derived>
void leaky_relu_inplace(Eigen::DenseBase<Derived>& x, typename Derived::Scalar slope)
{
    using S = typename Derived::Scalar;
    x.derived() = x.derived().unaryExpr([slope](S v) { return v > S(0) ? v : v * slope; });
}

/// Gradient through a rectifier (slope 0) or leaky rectifier, given its output.
template <typename Scalar>
Vector<Scalar> rectifier_backward(const Vector<Scalar>& out, const Vector<Scalar>& dy, Scalar slope)
{
    return dy.binaryExpr(out, [slope](Scalar g, Scalar o) { return o > Scalar(0) ? g : g * slope; });
}

template <typename Scalar>
Matrix<Scalar> rectifier_backward(const Matrix<Scalar>& out, const Matrix<Scalar>& dy, Scalar slope)
{
    return dy.binaryExpr(out, [slope](Scalar g, Scalar o) { return o > Scalar(0) ? g : g * slope; });
}

template <typename Scalar>
Scalar sigmoid(Scalar z)
{
    if (z >= Scalar(0)) return Scalar(1) / (Scalar(1) + std::exp(-z));
    const Scalar e = std::exp(z);
    return e / (Scalar(1) + e);
}

template <typename Scalar>
Matrix<Scalar> sigmoid(const Matrix<Scalar>& z)
{
    return z.unaryExpr([](Scalar v) { return sigmoid(v); });
}

} // namespace citygan
