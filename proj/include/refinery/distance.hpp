#pragma once

#include <Eigen/Dense>

#include <cmath>

namespace refinery::detail {

// Full Euclidean distance matrix over rows. O(N^2 d) by direct evaluation;
// the Gram-matrix shortcut is avoided because it loses precision on tight
// clusters, which the metric oracles (1e-9) would expose.
template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>
pairwise_distances(const Eigen::MatrixBase<Derived>& points) {
    using Scalar = typename Derived::Scalar;
    const Eigen::Index n = points.rows();
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> d(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        d(i, i) = 0;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const Scalar dist = (points.row(i) - points.row(j)).norm();
            d(i, j) = dist;
            d(j, i) = dist;
        }
    }
    return d;
}

template <typename DerivedA, typename DerivedB>
typename DerivedA::Scalar cosine_similarity(const Eigen::MatrixBase<DerivedA>& a,
                                            const Eigen::MatrixBase<DerivedB>& b) {
    using Scalar = typename DerivedA::Scalar;
    const Scalar na = a.norm();
    const Scalar nb = b.norm();
    if (na == Scalar(0) || nb == Scalar(0)) return Scalar(0);
    return a.dot(b) / (na * nb);
}

} // namespace refinery::detail
