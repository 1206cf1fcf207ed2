#pragma once

#include "refinery/corpus.hpp"
#include "refinery/errors.hpp"

#include <Eigen/Dense>

#include <filesystem>
#include <string>

namespace refinery {

// Dense reduced document coordinates, one row per document in corpus order.
// reducer_tag records how the rows were produced ("svd" or "external").
template <typename Scalar = double>
struct ReducedEmbeddingT {
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> matrix;
    std::string reducer_tag;

    Eigen::Index rows() const { return matrix.rows(); }
    Eigen::Index dim() const { return matrix.cols(); }
};

using ReducedEmbedding = ReducedEmbeddingT<double>;

// Throws ValidationError on non-finite entries or dim < 2.
template <typename Scalar>
void validate_embedding(const ReducedEmbeddingT<Scalar>& e) {
    if (e.matrix.cols() < 2) {
        throw ValidationError("reduced embedding must have at least 2 dimensions");
    }
    if (!e.matrix.allFinite()) {
        throw ValidationError("reduced embedding contains non-finite entries");
    }
}

// Reads an externally produced reduction (newline-delimited {id, vector}
// records), realigns rows to corpus order, and tags the result "external".
// Throws ValidationError when ids and corpus do not match 1:1 or vector
// widths disagree.
ReducedEmbedding load_external_reduction(const std::filesystem::path& path, const Corpus& corpus);

} // namespace refinery
