#pragma once

// Problem data for  dx = (Ax + Bu) ds + (Cx + Du) dw,  J = E int (u'Ru + x'Qx) ds
// with a scalar Brownian motion w.

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <string>
#include <vector>

#include "slqvi/errors.hpp"
#include "slqvi/symmat.hpp"

namespace slqvi {

inline constexpr double kPsdTol = 1e-10;

class SlqModel {
public:
    SlqModel(Eigen::MatrixXd A, Eigen::MatrixXd B, Eigen::MatrixXd C, Eigen::MatrixXd D,
             SymMatrix Q, SymMatrix R, Eigen::VectorXd x0)
        : A_(std::move(A)), B_(std::move(B)), C_(std::move(C)), D_(std::move(D)),
          Q_(std::move(Q)), R_(std::move(R)), x0_(std::move(x0)) {
        const Eigen::Index n = A_.rows();
        const Eigen::Index m = B_.cols();
        auto require = [](bool ok, const std::string& msg) {
            if (!ok) throw DimensionError("SlqModel: " + msg);
        };
        require(n >= 1 && A_.cols() == n, "A must be square n x n");
        require(m >= 1 && B_.rows() == n, "B must be n x m");
        require(C_.rows() == n && C_.cols() == n, "C must be n x n");
        require(D_.rows() == n && D_.cols() == m, "D must be n x m");
        require(Q_.dim() == n, "Q must be n x n");
        require(R_.dim() == m, "R must be m x m");
        require(x0_.size() == n, "x0 must have length n");

        const double q_min = Q_.min_eigenvalue();
        if (q_min < -kPsdTol) throw ConfigError("SlqModel: Q is not positive semidefinite");
        if (!R_.is_pd()) throw ConfigError("SlqModel: R is not positive definite");
        if (q_min <= kPsdTol) {
            warnings_.push_back(
                "Q is singular; exact observability of [A, C | Q] is assumed, not verified");
        }
    }

    Eigen::Index n() const noexcept { return A_.rows(); }
    Eigen::Index m() const noexcept { return B_.cols(); }

    const Eigen::MatrixXd& A() const noexcept { return A_; }
    const Eigen::MatrixXd& B() const noexcept { return B_; }
    const Eigen::MatrixXd& C() const noexcept { return C_; }
    const Eigen::MatrixXd& D() const noexcept { return D_; }
    const SymMatrix& Q() const noexcept { return Q_; }
    const SymMatrix& R() const noexcept { return R_; }
    const Eigen::VectorXd& x0() const noexcept { return x0_; }

    const std::vector<std::string>& warnings() const noexcept { return warnings_; }

private:
    Eigen::MatrixXd A_, B_, C_, D_;
    SymMatrix Q_, R_;
    Eigen::VectorXd x0_;
    std::vector<std::string> warnings_;
};

// u = K x
struct FeedbackGain {
    Eigen::MatrixXd K;
};

inline void check_gain(const SlqModel& model, const FeedbackGain& gain) {
    if (gain.K.rows() != model.m() || gain.K.cols() != model.n()) {
        throw DimensionError("FeedbackGain: expected " + std::to_string(model.m()) + "x" +
                             std::to_string(model.n()) + ", got " + std::to_string(gain.K.rows()) +
                             "x" + std::to_string(gain.K.cols()));
    }
}

// Generator of vec(E[x x^T]) under u = Kx:
//   I (x) (A+BK) + (A+BK) (x) I + (C+DK) (x) (C+DK)
inline Eigen::MatrixXd second_moment_generator(const SlqModel& model, const FeedbackGain& gain) {
    check_gain(model, gain);
    const Eigen::MatrixXd ak = model.A() + model.B() * gain.K;
    const Eigen::MatrixXd ck = model.C() + model.D() * gain.K;
    const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(model.n(), model.n());
    return kron(eye, ak) + kron(ak, eye) + kron(ck, ck);
}

// Largest real part of the second-moment generator's spectrum.
inline double ms_spectral_abscissa(const SlqModel& model, const FeedbackGain& gain) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(second_moment_generator(model, gain), false);
    return es.eigenvalues().real().maxCoeff();
}

inline bool is_ms_stabilizing(const SlqModel& model, const FeedbackGain& gain, double tol_margin = 0.0) {
    return ms_spectral_abscissa(model, gain) < -tol_margin;
}

}  // namespace slqvi
