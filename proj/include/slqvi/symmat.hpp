#pragma once

// Symmetric matrices and the vectorizations used by the data-driven solver.
//
//   vecs(P)        upper triangle, row-major: [p11, p12, ..., p1n, p22, ..., pnn]
//   quad_basis(x)  [x1^2, 2x1x2, ..., 2x1xn, x2^2, ..., xn^2]
//
// so that quad_basis(x) . vecs(P) == x^T P x. Off-diagonals carry no sqrt(2)
// scaling; the factor 2 lives in quad_basis.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>

#include "slqvi/errors.hpp"

namespace slqvi {

inline constexpr Eigen::Index sym_size(Eigen::Index n) { return n * (n + 1) / 2; }

// Inverse of sym_size; nullopt when len is not a triangular number.
inline std::optional<Eigen::Index> triangular_root(Eigen::Index len) {
    if (len < 1) return std::nullopt;
    const auto n = static_cast<Eigen::Index>(std::llround((std::sqrt(8.0 * static_cast<double>(len) + 1.0) - 1.0) / 2.0));
    if (sym_size(n) != len) return std::nullopt;
    return n;
}

class SymMatrix {
public:
    static constexpr double kDefaultAsymmetryTol = 1e-8;

    // Symmetrizes (X + X^T)/2. Rejects inputs whose asymmetry max|X - X^T|
    // exceeds tol * max(1, max|X|).
    explicit SymMatrix(const Eigen::MatrixXd& x, double asymmetry_tol = kDefaultAsymmetryTol) {
        if (x.rows() < 1 || x.rows() != x.cols()) {
            throw DimensionError("SymMatrix: expected a non-empty square matrix, got " +
                                 std::to_string(x.rows()) + "x" + std::to_string(x.cols()));
        }
        if (!x.allFinite()) throw Error("SymMatrix: non-finite entry");
        asymmetry_ = (x - x.transpose()).cwiseAbs().maxCoeff();
        const double scale = std::max(1.0, x.cwiseAbs().maxCoeff());
        if (asymmetry_ > asymmetry_tol * scale) {
            throw Error("SymMatrix: asymmetry " + std::to_string(asymmetry_) + " exceeds tolerance");
        }
        m_ = 0.5 * (x + x.transpose());
    }

    static SymMatrix zero(Eigen::Index n) { return SymMatrix(Eigen::MatrixXd::Zero(n, n)); }
    static SymMatrix identity(Eigen::Index n) { return SymMatrix(Eigen::MatrixXd::Identity(n, n)); }

    Eigen::Index dim() const noexcept { return m_.rows(); }
    const Eigen::MatrixXd& matrix() const noexcept { return m_; }
    double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }
    // Max |X - X^T| of the input this was built from.
    double asymmetry() const noexcept { return asymmetry_; }

    double frobenius_norm() const { return m_.norm(); }

    double min_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m_, Eigen::EigenvaluesOnly);
        return es.eigenvalues()(0);
    }
    double max_eigenvalue() const {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m_, Eigen::EigenvaluesOnly);
        return es.eigenvalues()(m_.rows() - 1);
    }
    bool is_psd(double tol = 1e-10) const { return min_eigenvalue() >= -tol; }
    bool is_pd(double floor = 0.0) const { return min_eigenvalue() > floor; }

    friend SymMatrix operator+(const SymMatrix& a, const SymMatrix& b) {
        check_same(a, b);
        return SymMatrix(a.m_ + b.m_);
    }
    friend SymMatrix operator-(const SymMatrix& a, const SymMatrix& b) {
        check_same(a, b);
        return SymMatrix(a.m_ - b.m_);
    }
    friend SymMatrix operator*(double s, const SymMatrix& a) { return SymMatrix(s * a.m_); }

private:
    static void check_same(const SymMatrix& a, const SymMatrix& b) {
        if (a.dim() != b.dim()) throw DimensionError("SymMatrix: dimension mismatch");
    }

    Eigen::MatrixXd m_;
    double asymmetry_ = 0.0;
};

class VecsVector {
public:
    VecsVector(Eigen::Index n, Eigen::VectorXd data) : n_(n), data_(std::move(data)) {
        if (n_ < 1 || data_.size() != sym_size(n_)) {
            throw DimensionError("VecsVector: length " + std::to_string(data_.size()) +
                                 " does not match n(n+1)/2 for n=" + std::to_string(n_));
        }
    }
    // Infers n from the length.
    explicit VecsVector(Eigen::VectorXd data) : data_(std::move(data)) {
        const auto n = triangular_root(data_.size());
        if (!n) {
            throw DimensionError("VecsVector: length " + std::to_string(data_.size()) +
                                 " is not a triangular number");
        }
        n_ = *n;
    }

    Eigen::Index dim() const noexcept { return n_; }
    const Eigen::VectorXd& data() const noexcept { return data_; }

private:
    Eigen::Index n_ = 0;
    Eigen::VectorXd data_;
};

inline VecsVector vecs(const SymMatrix& s) {
    const Eigen::Index n = s.dim();
    Eigen::VectorXd v(sym_size(n));
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) v(k++) = s(i, j);
    return VecsVector(n, std::move(v));
}

inline SymMatrix mat_from_vecs(const VecsVector& v) {
    const Eigen::Index n = v.dim();
    Eigen::MatrixXd m(n, n);
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) {
            m(i, j) = v.data()(k);
            m(j, i) = v.data()(k);
            ++k;
        }
    return SymMatrix(m);
}

inline SymMatrix mat_from_vecs(const Eigen::VectorXd& v) { return mat_from_vecs(VecsVector(v)); }

// Column stacking.
inline Eigen::VectorXd vec(const Eigen::MatrixXd& m) {
    return Eigen::Map<const Eigen::VectorXd>(m.data(), m.size());
}

// Inverse of vec for a rows x cols target.
inline Eigen::MatrixXd unvec(const Eigen::VectorXd& v, Eigen::Index rows, Eigen::Index cols) {
    if (v.size() != rows * cols) throw DimensionError("unvec: length does not match rows*cols");
    return Eigen::Map<const Eigen::MatrixXd>(v.data(), rows, cols);
}

inline Eigen::MatrixXd kron(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    Eigen::MatrixXd out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

// Writes quad_basis(xi) into out, which must already have length q(q+1)/2.
inline void quad_basis_into(const Eigen::VectorXd& xi, Eigen::VectorXd& out) {
    const Eigen::Index q = xi.size();
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < q; ++i) {
        out(k++) = xi(i) * xi(i);
        for (Eigen::Index j = i + 1; j < q; ++j) out(k++) = 2.0 * xi(i) * xi(j);
    }
}

inline Eigen::VectorXd quad_basis(const Eigen::VectorXd& xi) {
    if (xi.size() < 1) throw DimensionError("quad_basis: empty vector");
    Eigen::VectorXd out(sym_size(xi.size()));
    quad_basis_into(xi, out);
    return out;
}

}  // namespace slqvi
