#pragma once

#include <cstdint>
#include <random>
#include <sstream>
#include <string>

#include "citygan/tensor.hpp"

namespace citygan {

/// splitmix64 finalizer over a combination of two values; used to derive
/// independent stream seeds (per network, per epoch, per sample).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b)
{
    std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// Seeded engine whose full state is the underlying Mersenne twister.
/// Distributions are constructed per draw so nothing is cached between
/// calls and a serialized engine resumes the exact same sequence.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

    double normal()
    {
        std::normal_distribution<double> dist(0.0, 1.0);
        return dist(engine_);
    }

    double uniform()
    {
        std::uniform_real_distribution<double> dist(0.0, 1.0);
        return dist(engine_);
    }

    /// Uniform integer in [lo, hi].
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi)
    {
        std::uniform_int_distribution<std::int64_t> dist(lo, hi);
        return dist(engine_);
    }

    bool bernoulli(double p)
    {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return uniform() < p;
    }

    std::uint64_t next_u64() { return engine_(); }

    template <typename Scalar>
    Matrix<Scalar> normal_matrix(Index rows, Index cols, double stddev = 1.0)
    {
        Matrix<Scalar> m(rows, cols);
        // column-major fill; callers rely on this order for reproducibility
        for (Index j = 0; j < cols; ++j) {
            for (Index i = 0; i < rows; ++i) m(i, j) = static_cast<Scalar>(stddev * normal());
        }
        return m;
    }

    std::mt19937_64& engine() { return engine_; }

    std::string serialize() const
    {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& state)
    {
        std::istringstream is(state);
        is >> engine_;
        if (!is) throw std::runtime_error("invalid RNG state");
    }

    bool operator==(const Rng& other) const { return engine_ == other.engine_; }

private:
    std::mt19937_64 engine_;
};

/// Noise vector for a given seed: noise_dim standard normals from a fresh engine.
template <typename Scalar>
Vector<Scalar> seeded_noise(std::uint64_t seed, Index noise_dim)
{
    Rng rng(seed);
    Vector<Scalar> z(noise_dim);
    for (Index i = 0; i < noise_dim; ++i) z[i] = static_cast<Scalar>(rng.normal());
    return z;
}

} // namespace citygan
