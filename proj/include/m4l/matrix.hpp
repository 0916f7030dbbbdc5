#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <memory>
#include <utility>
#include <vector>

#include "m4l/errors.hpp"

namespace m4l {

using Dense = Eigen::MatrixXd;
using SparseStore = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Real matrix with dense storage by default and an optional coordinate-sparse
// backing store. A sparse matrix densifies lazily the first time a kernel
// needs the dense view; the two stores hold identical values by construction.
class Matrix {
public:
    Matrix() : rows_(0), cols_(0), dense_(std::make_shared<Dense>()) {}

    Matrix(Eigen::Index rows, Eigen::Index cols)
        : rows_(rows), cols_(cols), dense_(std::make_shared<Dense>(Dense::Zero(rows, cols))) {}

    explicit Matrix(Dense values)
        : rows_(values.rows()), cols_(values.cols()), dense_(std::make_shared<Dense>(std::move(values))) {}

    // keepSparse retains the triplet store (used for low-density relations).
    static Matrix fromTriplets(Eigen::Index rows, Eigen::Index cols,
                               const std::vector<Triplet>& entries, bool keepSparse);

    Eigen::Index rows() const { return rows_; }
    Eigen::Index cols() const { return cols_; }
    Eigen::Index size() const { return rows_ * cols_; }
    bool isSparse() const { return sparse_ != nullptr; }

    double operator()(Eigen::Index r, Eigen::Index c) const {
        if (sparse_ && !dense_) return sparse_->coeff(r, c);
        return (*dense_)(r, c);
    }

    // Lazily built for sparse-backed matrices, then cached.
    const Dense& dense() const;

    const SparseStore& sparse() const {
        if (!sparse_) throw NumericError("matrix has no sparse store");
        return *sparse_;
    }

    double minCoeff() const { return dense().size() == 0 ? 0.0 : dense().minCoeff(); }
    double maxCoeff() const { return dense().size() == 0 ? 0.0 : dense().maxCoeff(); }

private:
    Eigen::Index rows_, cols_;
    mutable std::shared_ptr<Dense> dense_;   // cache when sparse-backed
    std::shared_ptr<SparseStore> sparse_;
};

// --- kernels -------------------------------------------------------------

// Standard product; sparse left operands multiply without densifying.
Matrix matmul(const Matrix& a, const Matrix& b);
Dense matmul(const Dense& a, const Dense& b);

// Sum of squared entries, optionally restricted to mask-true entries.
// The mask is a 0/1 matrix of the same shape.
double frobeniusSq(const Dense& a);
double frobeniusSq(const Dense& a, const Dense& mask);
double frobeniusSq(const Matrix& a);

// tr(G^T T G); T square with T.rows == G.rows. May be negative.
double traceForm(const Dense& g, const Dense& t);
double traceForm(const Dense& g, const Matrix& t);

// T = Tplus - Tminus with Tplus = max(T,0), Tminus = max(-T,0).
std::pair<Dense, Dense> splitSigned(const Dense& t);

// argmin_S ||R - Gi S Gj^T||_F^2 = (Gi^T Gi)^-1 Gi^T R Gj (Gj^T Gj)^-1.
// Rank-deficient Gram matrices get a small ridge (lambda = 1e-8 tr(G^T G)/k)
// before a retry; a non-finite result after damping is an error.
Dense solveSylvesterLeastSquares(const Dense& gi, const Dense& r, const Dense& gj);

// Shared Gram-side solve used by the stacked dispatch system: solves
// Gram * S * (Gj^T Gj) = Rhs for S, with the same damping fallback.
// Gram must be symmetric positive semi-definite of size k_i x k_i.
Dense solveGramSandwich(const Dense& gram, const Dense& rhs, const Dense& gj);

inline void requireFinite(const Dense& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite entries");
}

}  // namespace m4l
