#include "m4l/matrix.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <sstream>

namespace m4l {

Matrix Matrix::fromTriplets(Eigen::Index rows, Eigen::Index cols,
                            const std::vector<Triplet>& entries, bool keepSparse) {
    Matrix m;
    m.rows_ = rows;
    m.cols_ = cols;
    if (keepSparse) {
        auto sp = std::make_shared<SparseStore>(rows, cols);
        sp->setFromTriplets(entries.begin(), entries.end());
        m.sparse_ = std::move(sp);
        m.dense_ = nullptr;
    } else {
        auto d = std::make_shared<Dense>(Dense::Zero(rows, cols));
        for (const auto& t : entries) (*d)(t.row(), t.col()) = t.value();
        m.dense_ = std::move(d);
    }
    return m;
}

const Dense& Matrix::dense() const {
    if (!dense_) {
        auto d = std::make_shared<Dense>(Dense(*sparse_));
        dense_ = std::move(d);
    }
    return *dense_;
}

Dense matmul(const Dense& a, const Dense& b) {
    if (a.cols() != b.rows()) {
        std::ostringstream os;
        os << "matmul: dimension mismatch " << a.rows() << "x" << a.cols() << " * " << b.rows()
           << "x" << b.cols();
        throw DataError(os.str());
    }
    Dense c = a * b;
    requireFinite(c, "matmul");
    return c;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) {
        std::ostringstream os;
        os << "matmul: dimension mismatch " << a.rows() << "x" << a.cols() << " * " << b.rows()
           << "x" << b.cols();
        throw DataError(os.str());
    }
    if (a.isSparse()) {
        Dense c = a.sparse() * b.dense();
        requireFinite(c, "matmul");
        return Matrix(std::move(c));
    }
    return Matrix(matmul(a.dense(), b.dense()));
}

double frobeniusSq(const Dense& a) {
    double v = a.squaredNorm();
    if (!std::isfinite(v)) throw NumericError("frobeniusSq: overflow");
    return v;
}

double frobeniusSq(const Dense& a, const Dense& mask) {
    if (mask.rows() != a.rows() || mask.cols() != a.cols())
        throw DataError("frobeniusSq: mask shape mismatch");
    double v = (mask.array() * a.array().square()).sum();
    if (!std::isfinite(v)) throw NumericError("frobeniusSq: overflow");
    return v;
}

double frobeniusSq(const Matrix& a) {
    if (a.isSparse()) {
        double v = a.sparse().squaredNorm();
        if (!std::isfinite(v)) throw NumericError("frobeniusSq: overflow");
        return v;
    }
    return frobeniusSq(a.dense());
}

double traceForm(const Dense& g, const Dense& t) {
    if (t.rows() != t.cols() || t.rows() != g.rows())
        throw DataError("traceForm: T must be square with T.rows == G.rows");
    // tr(G^T T G) = sum((T G) .* G)
    double v = ((t * g).array() * g.array()).sum();
    if (!std::isfinite(v)) throw NumericError("traceForm: overflow");
    return v;
}

double traceForm(const Dense& g, const Matrix& t) {
    if (t.rows() != t.cols() || t.rows() != g.rows())
        throw DataError("traceForm: T must be square with T.rows == G.rows");
    if (t.isSparse()) {
        double v = ((t.sparse() * g).array() * g.array()).sum();
        if (!std::isfinite(v)) throw NumericError("traceForm: overflow");
        return v;
    }
    return traceForm(g, t.dense());
}

std::pair<Dense, Dense> splitSigned(const Dense& t) {
    Dense plus = t.cwiseMax(0.0);
    Dense minus = (-t).cwiseMax(0.0);
    return {std::move(plus), std::move(minus)};
}

namespace {

// Solve gram * X = rhs with a Cholesky first, ridge-damped retry second.
Dense solveSpd(const Dense& gram, const Dense& rhs, const char* what) {
    Eigen::LLT<Dense> llt(gram);
    if (llt.info() == Eigen::Success) {
        Dense x = llt.solve(rhs);
        if (x.allFinite()) return x;
    }
    const double k = static_cast<double>(gram.rows());
    double lambda = 1e-8 * gram.trace() / std::max(k, 1.0);
    if (!(lambda > 0.0)) lambda = 1e-12;
    Dense damped = gram;
    damped.diagonal().array() += lambda;
    Eigen::LLT<Dense> llt2(damped);
    Dense x = llt2.solve(rhs);
    if (!x.allFinite())
        throw NumericError(std::string(what) + ": non-finite solve result after damping");
    return x;
}

}  // namespace

Dense solveGramSandwich(const Dense& gram, const Dense& rhs, const Dense& gj) {
    Dense left = solveSpd(gram, rhs, "solveGramSandwich(left)");
    Dense gramJ = gj.transpose() * gj;
    // left * Gj * gramJ^-1, solved as gramJ^T X^T = (left Gj)^T
    Dense lg = left * gj;
    Dense st = solveSpd(gramJ, lg.transpose(), "solveGramSandwich(right)");
    return st.transpose();
}

Dense solveSylvesterLeastSquares(const Dense& gi, const Dense& r, const Dense& gj) {
    if (gi.rows() != r.rows() || gj.rows() != r.cols())
        throw DataError("solveSylvesterLeastSquares: dimension mismatch");
    Dense gramI = gi.transpose() * gi;
    Dense rhs = gi.transpose() * r;
    return solveGramSandwich(gramI, rhs, gj);
}

}  // namespace m4l
