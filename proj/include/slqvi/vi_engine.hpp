#pragma once

// Stochastic-approximation value iteration
//
//   P~_{k+1} = P_k + eps_k F(P_k)
//   P_{k+1}  = P~_{k+1}            if P~_{k+1} in D_q
//            = P_0, q <- q + 1     otherwise
//   stop when |P~_{k+1} - P_k|_F / eps_k < stop_tol
//
// F is either the model-based Riccati map or its data-driven counterpart
// M_k + Q - N_k'(R + H_k)^{-1} N_k with (M_k, N_k, H_k) recovered from data.

#include <Eigen/Dense>

#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "slqvi/data_collect.hpp"
#include "slqvi/defaults.hpp"
#include "slqvi/errors.hpp"
#include "slqvi/model.hpp"
#include "slqvi/riccati.hpp"
#include "slqvi/symmat.hpp"

namespace slqvi {

// eps_k = a / (k + 1 + b)^gamma. gamma in (0.5, 1] gives sum eps_k = inf and eps_k -> 0.
struct StepSchedule {
    double a = defaults::step_a;
    double b = defaults::step_b;
    double gamma = defaults::step_gamma;

    double operator()(std::size_t k) const { return a / std::pow(static_cast<double>(k) + 1.0 + b, gamma); }

    void validate() const {
        if (!(a > 0.0)) throw ConfigError("StepSchedule: a must be positive");
        if (!(b >= 0.0)) throw ConfigError("StepSchedule: b must be nonnegative");
        if (!(gamma > 0.5 && gamma <= 1.0)) throw ConfigError("StepSchedule: gamma must lie in (0.5, 1]");
    }
};

// D_q = { P : P >= 0, |P|_F <= r0 growth^q }. Nested, bounded with nonempty
// interior, and exhausting the PSD cone as q grows.
struct TrustSetFamily {
    double r0 = defaults::trust_radius_factor;
    double growth = defaults::trust_growth;

    double radius(std::size_t q) const { return r0 * std::pow(growth, static_cast<double>(q)); }

    bool contains(const SymMatrix& P, std::size_t q) const {
        if (!P.matrix().allFinite()) return false;
        return P.frobenius_norm() <= radius(q) && P.min_eigenvalue() >= -kPsdTol;
    }

    void validate() const {
        if (!(r0 > 0.0)) throw ConfigError("TrustSetFamily: r0 must be positive");
        if (!(growth > 1.0)) throw ConfigError("TrustSetFamily: growth must exceed 1");
    }
};

inline bool trust_contains(const TrustSetFamily& family, const SymMatrix& P, std::size_t q) {
    return family.contains(P, q);
}

struct ViConfig {
    SymMatrix P0;
    StepSchedule schedule{};
    TrustSetFamily trust{};
    double stop_tol = defaults::stop_tol;
    std::size_t max_iter = defaults::max_iter;
    std::size_t snapshot_every = 0;  // 0 disables iterate snapshots

    void validate(Eigen::Index n) const {
        schedule.validate();
        trust.validate();
        if (P0.dim() != n) throw DimensionError("ViConfig: P0 dimension does not match the problem");
        if (!P0.is_pd()) throw ConfigError("ViConfig: P0 must be positive definite");
        if (!(stop_tol > 0.0)) throw ConfigError("ViConfig: stop_tol must be positive");
        if (max_iter < 1) throw ConfigError("ViConfig: max_iter must be >= 1");
        if (!trust.contains(P0, 0)) {
            throw ConfigError("ViConfig: P0 lies outside D_0; increase the initial trust radius");
        }
    }
};

struct StepRecord {
    std::size_t k;
    double eps;
    double residual;  // |P~_{k+1} - P_k|_F / eps_k, +inf when the map was undefined
    std::size_t q;    // trust index after the step
    bool reset;
};

struct ViState {
    SymMatrix P;
    std::size_t k = 0;
    std::size_t q = 0;
    std::size_t resets = 0;
    std::vector<StepRecord> history;

    static ViState initial(const ViConfig& cfg) { return ViState{cfg.P0}; }

    std::vector<double> residual_history() const {
        std::vector<double> r;
        r.reserve(history.size());
        for (const auto& h : history) r.push_back(h.residual);
        return r;
    }
};

// A fixed-point map for the iteration: F(P) and the gain it implies.
// Throws SingularityError when the map is undefined at P.
template <typename T>
concept ViMap = requires(const T& map, const SymMatrix& P) {
    { map(P) } -> std::convertible_to<SymMatrix>;
    { map.gain(P) } -> std::convertible_to<FeedbackGain>;
};

class ModelBasedMap {
public:
    explicit ModelBasedMap(const SlqModel& model, double pd_floor = kDefaultPdFloor)
        : model_(&model), pd_floor_(pd_floor) {}
    SymMatrix operator()(const SymMatrix& P) const { return riccati_map(*model_, P, pd_floor_); }
    FeedbackGain gain(const SymMatrix& P) const { return slqvi::gain(*model_, P, pd_floor_); }
    Eigen::Index dim() const { return model_->n(); }

private:
    const SlqModel* model_;
    double pd_floor_;
};

// Reads only the data matrices and the cost weights.
class ModelFreeMap {
public:
    ModelFreeMap(const DataMatrices& data, SymMatrix Q, SymMatrix R, double pd_floor = kDefaultPdFloor)
        : data_(&data), Q_(std::move(Q)), R_(std::move(R)), pd_floor_(pd_floor) {
        if (!data.rank_ok()) throw RankError(data.rank_message());
        if (Q_.dim() != data.n() || R_.dim() != data.m()) throw DimensionError("ModelFreeMap: Q/R dimensions do not match data");
    }

    SymMatrix operator()(const SymMatrix& P) const {
        const ItoTriple t = recover_triple(*data_, P);
        const Eigen::LLT<Eigen::MatrixXd> llt = factor(t);
        const Eigen::MatrixXd out = t.M.matrix() + Q_.matrix() - t.N.transpose() * llt.solve(t.N);
        return SymMatrix(0.5 * (out + out.transpose()));
    }

    FeedbackGain gain(const SymMatrix& P) const {
        const ItoTriple t = recover_triple(*data_, P);
        return FeedbackGain{-factor(t).solve(t.N)};
    }

    Eigen::Index dim() const { return data_->n(); }

private:
    Eigen::LLT<Eigen::MatrixXd> factor(const ItoTriple& t) const {
        const Eigen::MatrixXd w = R_.matrix() + t.H.matrix();
        const SymMatrix ws(w, 1e-6);
        if (!ws.is_pd(pd_floor_)) throw SingularityError("R + H_k is not positive definite");
        return Eigen::LLT<Eigen::MatrixXd>(ws.matrix());
    }

    const DataMatrices* data_;
    SymMatrix Q_, R_;
    double pd_floor_;
};

// One iteration. An undefined map (R + D'PD or R + H_k not PD) is treated
// like leaving the trust set.
template <ViMap Map>
ViState vi_step(const Map& map, ViState state, const ViConfig& cfg) {
    const double eps = cfg.schedule(state.k);
    std::optional<SymMatrix> candidate;
    double residual = std::numeric_limits<double>::infinity();
    try {
        const SymMatrix f = map(state.P);
        SymMatrix next(state.P.matrix() + eps * f.matrix());
        residual = (next.matrix() - state.P.matrix()).norm() / eps;
        candidate = std::move(next);
    } catch (const SingularityError&) {
    }

    bool reset = true;
    if (candidate && cfg.trust.contains(*candidate, state.q)) {
        state.P = std::move(*candidate);
        reset = false;
    } else {
        state.P = cfg.P0;
        ++state.q;
        ++state.resets;
    }
    state.history.push_back({state.k, eps, residual, state.q, reset});
    ++state.k;
    return state;
}

inline ViState vi_step_model_based(const SlqModel& model, ViState state, const ViConfig& cfg) {
    return vi_step(ModelBasedMap(model), std::move(state), cfg);
}

inline ViState vi_step_model_free(const DataMatrices& data, const SymMatrix& Q, const SymMatrix& R, ViState state,
                                  const ViConfig& cfg) {
    return vi_step(ModelFreeMap(data, Q, R), std::move(state), cfg);
}

struct IterateSnapshot {
    std::size_t k;
    SymMatrix P;
};

struct ViResult {
    SymMatrix P_final;
    std::optional<FeedbackGain> K_final;  // empty if the map is undefined at P_final
    std::size_t iterations = 0;
    std::size_t resets = 0;
    std::size_t q = 0;
    std::vector<StepRecord> history;
    std::vector<IterateSnapshot> snapshots;
    bool converged = false;

    std::vector<double> residual_history() const {
        std::vector<double> r;
        r.reserve(history.size());
        for (const auto& h : history) r.push_back(h.residual);
        return r;
    }
};

// Iterates until the stop rule fires or max_iter is exhausted. The stop rule
// is not evaluated on reset iterations.
template <ViMap Map>
ViResult run(const Map& map, const ViConfig& cfg) {
    cfg.validate(map.dim());
    ViState state = ViState::initial(cfg);
    std::vector<IterateSnapshot> snapshots;
    if (cfg.snapshot_every > 0) snapshots.push_back({0, state.P});
    bool converged = false;
    while (state.k < cfg.max_iter) {
        state = vi_step(map, std::move(state), cfg);
        if (!cfg.trust.contains(state.P, state.q)) {
            throw std::logic_error("value iteration: iterate escaped its trust set");
        }
        if (cfg.snapshot_every > 0 && state.k % cfg.snapshot_every == 0) snapshots.push_back({state.k, state.P});
        const StepRecord& last = state.history.back();
        if (!last.reset && last.residual < cfg.stop_tol) {
            converged = true;
            break;
        }
    }
    std::optional<FeedbackGain> K;
    try {
        K = map.gain(state.P);
    } catch (const SingularityError&) {
    }
    return ViResult{state.P, std::move(K), state.k, state.resets, state.q, std::move(state.history),
                    std::move(snapshots), converged};
}

// Columns: k, eps, residual, q, reset
inline void write_history_csv(std::ostream& os, const std::vector<StepRecord>& history) {
    os << "k,eps,residual,q,reset\n";
    os.precision(17);
    for (const auto& h : history) {
        os << h.k << ',' << h.eps << ',' << h.residual << ',' << h.q << ',' << (h.reset ? 1 : 0) << '\n';
    }
}

}  // namespace slqvi
