#pragma once

#include "refinery/corpus.hpp"
#include "refinery/errors.hpp"
#include "refinery/text.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace refinery {

struct Vocabulary {
    std::vector<std::string> terms;                  // sorted, unique
    std::vector<std::size_t> document_frequency;     // aligned with terms

    std::size_t size() const { return terms.size(); }

    std::optional<std::size_t> index_of(const std::string& term) const {
        auto it = std::lower_bound(terms.begin(), terms.end(), term);
        if (it == terms.end() || *it != term) return std::nullopt;
        return static_cast<std::size_t>(it - terms.begin());
    }
};

// Row-major so per-document iteration is contiguous; one row per document.
template <typename Scalar = double>
using DocTermMatrix = Eigen::SparseMatrix<Scalar, Eigen::RowMajor>;

struct TfidfOptions {
    std::size_t min_df = 2;
    std::set<std::string> stopwords = text::default_stopwords();
    text::TokenizeOptions tokenize = {};
};

template <typename Scalar = double>
struct TfidfModel {
    Vocabulary vocabulary;
    DocTermMatrix<Scalar> matrix;
};

// tf = raw in-document count, idf = ln((1+N)/(1+df)) + 1, rows L2-normalized.
// Terms with df < min_df are dropped before weighting.
template <typename Scalar = double>
TfidfModel<Scalar> fit_tfidf(const Corpus& corpus, const TfidfOptions& opts = {}) {
    if (corpus.empty()) {
        throw ArgumentError("fit_tfidf: corpus is empty");
    }
    const std::size_t n = corpus.size();

    std::vector<std::map<std::string, std::size_t>> counts(n);
    std::map<std::string, std::size_t> df;
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& tok : text::tokenize(corpus.documents[i].text, opts.tokenize)) {
            if (opts.stopwords.count(tok)) continue;
            if (counts[i][tok]++ == 0) ++df[tok];
        }
    }

    TfidfModel<Scalar> model;
    for (auto& [term, freq] : df) {
        if (freq >= opts.min_df) {
            model.vocabulary.terms.push_back(term);
            model.vocabulary.document_frequency.push_back(freq);
        }
    }
    if (model.vocabulary.terms.empty()) {
        throw ValidationError("fit_tfidf: empty vocabulary after filtering");
    }

    std::vector<Scalar> idf(model.vocabulary.size());
    for (std::size_t t = 0; t < model.vocabulary.size(); ++t) {
        idf[t] = static_cast<Scalar>(
            std::log((Scalar(1) + Scalar(n)) /
                     (Scalar(1) + Scalar(model.vocabulary.document_frequency[t]))) + Scalar(1));
    }

    std::vector<Eigen::Triplet<Scalar>> triplets;
    for (std::size_t i = 0; i < n; ++i) {
        Scalar norm_sq = 0;
        std::vector<std::pair<std::size_t, Scalar>> row;
        for (const auto& [term, cnt] : counts[i]) {
            auto col = model.vocabulary.index_of(term);
            if (!col) continue;
            const Scalar w = static_cast<Scalar>(cnt) * idf[*col];
            row.emplace_back(*col, w);
            norm_sq += w * w;
        }
        const Scalar norm = std::sqrt(norm_sq);
        for (auto& [col, w] : row) {
            triplets.emplace_back(static_cast<int>(i), static_cast<int>(col),
                                  norm > 0 ? w / norm : w);
        }
    }

    model.matrix.resize(static_cast<Eigen::Index>(n),
                        static_cast<Eigen::Index>(model.vocabulary.size()));
    model.matrix.setFromTriplets(triplets.begin(), triplets.end());
    model.matrix.makeCompressed();
    return model;
}

// Divides each column by its maximum absolute value; all-zero columns are
// left alone. Sparsity pattern is preserved.
template <typename Scalar>
DocTermMatrix<Scalar> maxabs_scale(const DocTermMatrix<Scalar>& m) {
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> max_abs =
        Eigen::Matrix<Scalar, Eigen::Dynamic, 1>::Zero(m.cols());
    for (int k = 0; k < m.outerSize(); ++k) {
        for (typename DocTermMatrix<Scalar>::InnerIterator it(m, k); it; ++it) {
            max_abs[it.col()] = std::max(max_abs[it.col()], std::abs(it.value()));
        }
    }
    DocTermMatrix<Scalar> out = m;
    for (int k = 0; k < out.outerSize(); ++k) {
        for (typename DocTermMatrix<Scalar>::InnerIterator it(out, k); it; ++it) {
            if (max_abs[it.col()] > 0) it.valueRef() /= max_abs[it.col()];
        }
    }
    return out;
}

} // namespace refinery
