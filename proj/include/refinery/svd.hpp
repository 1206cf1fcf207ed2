#pragma once

#include "refinery/embedding.hpp"
#include "refinery/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

namespace refinery {

namespace detail {

// Box-Muller over mt19937_64. std::normal_distribution's output sequence is
// implementation-defined; this sampler is bit-stable across standard
// libraries, which the byte-identical-run contract relies on.
template <typename Scalar>
class GaussianSampler {
public:
    explicit GaussianSampler(std::uint64_t seed) : rng_(seed) {}

    Scalar operator()() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        // u1 in (0,1], u2 in [0,1)
        const Scalar u1 = Scalar(1) - Scalar(rng_() >> 11) * Scalar(0x1.0p-53);
        const Scalar u2 = Scalar(rng_() >> 11) * Scalar(0x1.0p-53);
        const Scalar r = std::sqrt(Scalar(-2) * std::log(u1));
        const Scalar theta = Scalar(2) * Scalar(3.14159265358979323846) * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 rng_;
    bool have_spare_ = false;
    Scalar spare_{};
};

} // namespace detail

template <typename Scalar>
struct SvdResult {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> u;   // N x rank
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> singular_values;  // rank, descending
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> v;   // cols x rank
};

// Randomized truncated SVD (Halko-Martinsson-Tropp range finder): Gaussian
// test matrix, `power_iterations` subspace iterations with QR
// re-orthonormalization, then an exact SVD of the projected panel.
// Deterministic for a fixed seed. Accepts any Eigen matrix type (dense or
// sparse) that supports products with dense matrices.
template <typename MatrixType>
SvdResult<typename MatrixType::Scalar> randomized_svd(const MatrixType& a, Eigen::Index rank,
                                                      std::uint64_t seed,
                                                      Eigen::Index oversample = 10,
                                                      int power_iterations = 2) {
    using Scalar = typename MatrixType::Scalar;
    using Dense = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    const Eigen::Index n = a.rows();
    const Eigen::Index m = a.cols();
    if (rank < 1 || rank > std::min(n, m)) {
        throw ArgumentError("randomized_svd: rank out of range");
    }
    const Eigen::Index p = std::min(rank + oversample, std::min(n, m));

    detail::GaussianSampler<Scalar> gauss(seed);
    Dense omega(m, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        for (Eigen::Index i = 0; i < m; ++i) {
            omega(i, j) = gauss();
        }
    }

    Dense y = a * omega;
    auto orthonormalize = [](Dense& x) {
        Eigen::HouseholderQR<Dense> qr(x);
        Dense q = qr.householderQ() * Dense::Identity(x.rows(), x.cols());
        x = std::move(q);
    };
    orthonormalize(y);
    for (int it = 0; it < power_iterations; ++it) {
        Dense z = a.transpose() * y;
        orthonormalize(z);
        y = a * z;
        orthonormalize(y);
    }

    // b = y^T a is p x m: small enough for an exact SVD.
    Dense b = (a.transpose() * y).transpose();
    Eigen::JacobiSVD<Dense> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);

    SvdResult<Scalar> out;
    out.u = y * svd.matrixU().leftCols(rank);
    out.singular_values = svd.singularValues().head(rank);
    out.v = svd.matrixV().leftCols(rank);
    return out;
}

// Pipeline entry point: reduced coordinates = U * diag(S). The rank window
// matches the ReducedEmbedding invariant (dim >= 2) and keeps at least one
// discarded direction so truncation is meaningful.
template <typename MatrixType>
ReducedEmbeddingT<typename MatrixType::Scalar> truncated_svd(const MatrixType& a,
                                                             Eigen::Index rank,
                                                             std::uint64_t seed) {
    if (rank < 2 || rank > std::min(a.rows(), a.cols()) - 1) {
        throw ArgumentError("truncated_svd: rank must be in [2, min(rows, cols) - 1]");
    }
    auto svd = randomized_svd(a, rank, seed);
    ReducedEmbeddingT<typename MatrixType::Scalar> e;
    e.matrix = svd.u * svd.singular_values.asDiagonal();
    e.reducer_tag = "svd";
    validate_embedding(e);
    return e;
}

} // namespace refinery
