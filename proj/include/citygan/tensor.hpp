#pragma once

#include <array>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace citygan {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Rows are samples, columns are label coordinates.
template <typename Scalar>
using LabelBatch = Matrix<Scalar>;

/// Rows are samples, columns are noise coordinates.
template <typename Scalar>
using NoiseBatch = Matrix<Scalar>;

/// Label weights in double precision; converted to the model scalar at the call site.
using LabelVector = Eigen::VectorXd;

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Shape4 = std::array<Index, 4>;

inline std::string to_string(const Shape4& s)
{
    std::ostringstream os;
    os << '(' << s[0] << ", " << s[1] << ", " << s[2] << ", " << s[3] << ')';
    return os.str();
}

/// Dense NCHW tensor. Each sample is stored as a column-major (H*W) x C matrix,
/// so a sample slice maps directly onto an Eigen matrix without copying.
template <typename Scalar>
class Tensor4 {
public:
    using SampleMap = Eigen::Map<Matrix<Scalar>>;
    using ConstSampleMap = Eigen::Map<const Matrix<Scalar>>;

    Tensor4() = default;

    Tensor4(Index n, Index c, Index h, Index w)
        : shape_{n, c, h, w}, data_(Vector<Scalar>::Zero(n * c * h * w))
    {
    }

    static Tensor4 constant(Index n, Index c, Index h, Index w, Scalar v)
    {
        Tensor4 t(n, c, h, w);
        t.data_.setConstant(v);
        return t;
    }

    Index batch() const { return shape_[0]; }
    Index channels() const { return shape_[1]; }
    Index height() const { return shape_[2]; }
    Index width() const { return shape_[3]; }
    Index plane() const { return shape_[2] * shape_[3]; }
    Index sample_size() const { return shape_[1] * plane(); }
    Index size() const { return data_.size(); }
    const Shape4& shape() const { return shape_; }

    Vector<Scalar>& data() { return data_; }
    const Vector<Scalar>& data() const { return data_; }

    Scalar& operator()(Index n, Index c, Index y, Index x)
    {
        return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }
    Scalar operator()(Index n, Index c, Index y, Index x) const
    {
        return data_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
    }

    SampleMap sample(Index n) { return SampleMap(data_.data() + n * sample_size(), plane(), shape_[1]); }
    ConstSampleMap sample(Index n) const
    {
        return ConstSampleMap(data_.data() + n * sample_size(), plane(), shape_[1]);
    }

    template <typename Other>
    Tensor4<Other> cast() const
    {
        Tensor4<Other> out(shape_[0], shape_[1], shape_[2], shape_[3]);
        out.data() = data_.template cast<Other>();
        return out;
    }

    /// View of a (N, C) tensor with 1x1 spatial extent as an N x C matrix.
    Matrix<Scalar> as_rows() const
    {
        if (plane() != 1) {
            throw ShapeError("as_rows requires 1x1 spatial extent, got " + to_string(shape_));
        }
        return Eigen::Map<const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            data_.data(), shape_[0], shape_[1]);
    }

    static Tensor4 from_rows(const Matrix<Scalar>& rows)
    {
        Tensor4 t(rows.rows(), rows.cols(), 1, 1);
        Eigen::Map<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            t.data_.data(), rows.rows(), rows.cols()) = rows;
        return t;
    }

private:
    Shape4 shape_{0, 0, 0, 0};
    Vector<Scalar> data_;
};

template <typename Scalar>
void require_shape(const Tensor4<Scalar>& t, const Shape4& expected, const char* what)
{
    if (t.shape() != expected) {
        throw ShapeError(std::string(what) + ": expected shape " + to_string(expected) + ", got " +
                         to_string(t.shape()));
    }
}

} // namespace citygan
