#pragma once

// Riccati map, optimal gain, closed-loop Lyapunov residual, and the forward
// Riccati flow used as the ground-truth solver for the maximal solution P*.
//
//   riccati_map(P)          = A'P + PA + Q + C'PC - (PB + C'PD)(R + D'PD)^{-1}(B'P + D'PC)
//   gain(P)                 = -(R + D'PD)^{-1}(B'P + D'PC)
//   lyapunov_residual(P, K) = (A+BK)'P + P(A+BK) + (C+DK)'P(C+DK) + K'RK + Q
//
// lyapunov_residual(P, gain(P)) == riccati_map(P) after completing the square.

#include <Eigen/Dense>
#include <boost/numeric/odeint.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "slqvi/defaults.hpp"
#include "slqvi/errors.hpp"
#include "slqvi/model.hpp"
#include "slqvi/symmat.hpp"

namespace slqvi {

inline constexpr double kDefaultPdFloor = defaults::pd_floor;

// R + D'PD together with its factorization; construction enforces the
// well-posedness constraint of the Riccati map.
class RiccatiOperands {
public:
    RiccatiOperands(const SlqModel& model, const SymMatrix& P, double pd_floor = kDefaultPdFloor) {
        if (P.dim() != model.n()) throw DimensionError("riccati: P dimension does not match model");
        weight_ = model.R().matrix() + model.D().transpose() * P.matrix() * model.D();
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(weight_, Eigen::EigenvaluesOnly);
        const double lam = es.eigenvalues()(0);
        if (!(lam > pd_floor)) {
            std::ostringstream os;
            os << "R + D'PD is not positive definite (min eigenvalue " << lam << " <= " << pd_floor << ")";
            throw SingularityError(os.str());
        }
        llt_.compute(weight_);
        // B'P + D'PC
        cross_ = model.B().transpose() * P.matrix() + model.D().transpose() * P.matrix() * model.C();
    }

    const Eigen::MatrixXd& weight() const noexcept { return weight_; }
    const Eigen::MatrixXd& cross() const noexcept { return cross_; }
    Eigen::MatrixXd solve(const Eigen::MatrixXd& rhs) const { return llt_.solve(rhs); }

private:
    Eigen::MatrixXd weight_;
    Eigen::MatrixXd cross_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

inline SymMatrix riccati_map(const SlqModel& model, const SymMatrix& P, double pd_floor = kDefaultPdFloor) {
    const RiccatiOperands ops(model, P, pd_floor);
    const Eigen::MatrixXd& p = P.matrix();
    const Eigen::MatrixXd& a = model.A();
    const Eigen::MatrixXd& c = model.C();
    Eigen::MatrixXd out = a.transpose() * p + p * a + model.Q().matrix() + c.transpose() * p * c -
                          ops.cross().transpose() * ops.solve(ops.cross());
    return SymMatrix(0.5 * (out + out.transpose()));
}

inline FeedbackGain gain(const SlqModel& model, const SymMatrix& P, double pd_floor = kDefaultPdFloor) {
    const RiccatiOperands ops(model, P, pd_floor);
    return FeedbackGain{-ops.solve(ops.cross())};
}

inline SymMatrix lyapunov_residual(const SlqModel& model, const SymMatrix& P, const FeedbackGain& K) {
    if (P.dim() != model.n()) throw DimensionError("lyapunov_residual: P dimension does not match model");
    check_gain(model, K);
    const Eigen::MatrixXd ak = model.A() + model.B() * K.K;
    const Eigen::MatrixXd ck = model.C() + model.D() * K.K;
    const Eigen::MatrixXd& p = P.matrix();
    Eigen::MatrixXd out = ak.transpose() * p + p * ak + ck.transpose() * p * ck +
                          K.K.transpose() * model.R().matrix() * K.K + model.Q().matrix();
    return SymMatrix(0.5 * (out + out.transpose()));
}

struct OracleOptions {
    double t_end = defaults::oracle_t_end;
    double rtol = defaults::oracle_rtol;         // stop once ||riccati_map(P)||_F < rtol
    double abs_err = 1e-13;       // integrator local error control
    double rel_err = 1e-12;
    double initial_step = 1e-3;
    double pd_floor = kDefaultPdFloor;
    double blowup_norm = 1e12;
    std::vector<double> sample_times;  // record P at these times (if reached)
};

struct OracleSample {
    double t;
    SymMatrix P;
};

struct OracleResult {
    SymMatrix P;
    double residual;  // ||riccati_map(P)||_F at return
    double t;         // flow time at return
    std::size_t steps;
    std::vector<OracleSample> samples;
};

// Integrates dP/dt = riccati_map(P) forward from P0 until the residual falls
// below opts.rtol. From any P0 >= 0 the flow tends to the maximal solution.
inline OracleResult solve_sare_oracle(const SlqModel& model, const SymMatrix& P0, const OracleOptions& opts = {}) {
    namespace odeint = boost::numeric::odeint;
    using State = std::vector<double>;

    const Eigen::Index n = model.n();
    if (P0.dim() != n) throw DimensionError("solve_sare_oracle: P0 dimension does not match model");
    if (!P0.is_psd(kPsdTol)) throw ConfigError("solve_sare_oracle: P0 must be positive semidefinite");
    if (!(opts.t_end > 0.0) || !(opts.rtol > 0.0)) throw ConfigError("solve_sare_oracle: t_end and rtol must be positive");

    auto to_sym = [n](const State& s) {
        return SymMatrix(Eigen::Map<const Eigen::MatrixXd>(s.data(), n, n), 1e-6);
    };
    double t = 0.0;
    auto rhs = [&](const State& s, State& ds, double tt) {
        SymMatrix f = SymMatrix::zero(n);
        try {
            f = riccati_map(model, to_sym(s), opts.pd_floor);
        } catch (const SingularityError& e) {
            std::ostringstream os;
            os << "Riccati flow left the admissible region at t=" << tt << ": " << e.what();
            throw SingularityError(os.str());
        }
        Eigen::Map<Eigen::MatrixXd>(ds.data(), n, n) = f.matrix();
    };

    State x(static_cast<std::size_t>(n * n));
    Eigen::Map<Eigen::MatrixXd>(x.data(), n, n) = P0.matrix();

    std::vector<double> samples = opts.sample_times;
    std::sort(samples.begin(), samples.end());
    std::size_t next_sample = 0;
    OracleResult result{P0, std::numeric_limits<double>::infinity(), 0.0, 0, {}};
    while (next_sample < samples.size() && samples[next_sample] <= 0.0) {
        result.samples.push_back({0.0, P0});
        ++next_sample;
    }

    auto stepper = odeint::make_controlled<odeint::runge_kutta_dopri5<State>>(opts.abs_err, opts.rel_err);
    double dt = opts.initial_step;
    double residual = riccati_map(model, P0, opts.pd_floor).frobenius_norm();

    while (residual >= opts.rtol && t < opts.t_end) {
        double limit = opts.t_end;
        if (next_sample < samples.size()) limit = std::min(limit, samples[next_sample]);
        const bool clipped = t + dt > limit;
        double step = clipped ? limit - t : dt;
        const double natural = dt;
        if (stepper.try_step(rhs, x, t, step) == odeint::fail) {
            dt = step;
            continue;
        }
        ++result.steps;
        dt = clipped ? std::max(natural, step) : step;
        if (clipped) t = limit;  // absorb round-off so samples land exactly

        const Eigen::Map<const Eigen::MatrixXd> raw(x.data(), n, n);
        if (!raw.allFinite() || raw.norm() > opts.blowup_norm) {
            throw ConvergenceError("Riccati flow diverged; the model may not be mean-square stabilizable",
                                   std::numeric_limits<double>::infinity());
        }
        SymMatrix P = to_sym(x);
        Eigen::Map<Eigen::MatrixXd>(x.data(), n, n) = P.matrix();
        while (next_sample < samples.size() && samples[next_sample] <= t) {
            result.samples.push_back({t, P});
            ++next_sample;
        }
        residual = riccati_map(model, P, opts.pd_floor).frobenius_norm();
    }

    result.P = to_sym(x);
    result.residual = residual;
    result.t = t;
    if (!(residual < opts.rtol)) {
        std::ostringstream os;
        os << "Riccati flow did not reach residual " << opts.rtol << " by t=" << opts.t_end
           << " (final residual " << residual << ")";
        throw ConvergenceError(os.str(), residual);
    }
    return result;
}

}  // namespace slqvi
