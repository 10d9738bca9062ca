#pragma once

// Euler–Maruyama simulation of  dx = (Ax + Bu) dt + (Cx + Du) dw.
//
// Randomness is counter-based: every normal is a pure function of
// (seed, path, step, stream), so ensembles are bit-identical regardless of
// how paths are distributed over workers.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "slqvi/defaults.hpp"
#include "slqvi/errors.hpp"
#include "slqvi/model.hpp"
#include "slqvi/symmat.hpp"

namespace slqvi {

enum class Scheme { euler_maruyama };

struct SimConfig {
    double dt = defaults::dt;
    std::size_t paths = defaults::paths;
    std::uint64_t seed = defaults::seed;
    Scheme scheme = Scheme::euler_maruyama;
    unsigned workers = 1;  // 0 = hardware concurrency

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("SimConfig: dt must be positive");
        if (paths < 1) throw ConfigError("SimConfig: paths must be >= 1");
    }
};

namespace rng {

inline constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30u)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27u)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31u);
}

enum class Stream : std::uint64_t { diffusion = 1, exploration = 2 };

inline std::uint64_t key(std::uint64_t seed, std::uint64_t path, std::uint64_t step, Stream stream,
                         std::uint64_t lane) {
    std::uint64_t h = mix(seed);
    h = mix(h ^ path);
    h = mix(h ^ step);
    h = mix(h ^ static_cast<std::uint64_t>(stream));
    return mix(h ^ lane);
}

// Uniform in (0, 1).
inline double to_unit(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

inline double normal(std::uint64_t seed, std::uint64_t path, std::uint64_t step, Stream stream,
                     std::uint64_t lane = 0) {
    const double u1 = to_unit(key(seed, path, step, stream, 2 * lane));
    const double u2 = to_unit(key(seed, path, step, stream, 2 * lane + 1));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace rng

// Collection instants t_0 = 0 < t_1 < ... < t_l; each interval is an integer
// number of simulation steps of length dt.
class TimeGrid {
public:
    TimeGrid(std::vector<double> instants, double dt) : instants_(std::move(instants)), dt_(dt) {
        if (instants_.size() < 2) throw ConfigError("TimeGrid: need at least two instants");
        if (instants_.front() != 0.0) throw ConfigError("TimeGrid: first instant must be 0");
        if (!(dt_ > 0.0)) throw ConfigError("TimeGrid: dt must be positive");
        step_index_.push_back(0);
        for (std::size_t i = 1; i < instants_.size(); ++i) {
            if (!(instants_[i] > instants_[i - 1])) throw ConfigError("TimeGrid: instants must be strictly increasing");
            const double ratio = instants_[i] / dt_;
            const auto steps = static_cast<std::size_t>(std::llround(ratio));
            if (std::abs(ratio - static_cast<double>(steps)) > 1e-6) {
                throw ConfigError("TimeGrid: collection instants must be integer multiples of dt");
            }
            step_index_.push_back(steps);
        }
    }

    static TimeGrid uniform(std::size_t intervals, double interval_length, double dt) {
        if (intervals < 1) throw ConfigError("TimeGrid: intervals must be >= 1");
        std::vector<double> t(intervals + 1);
        for (std::size_t i = 0; i <= intervals; ++i) t[i] = static_cast<double>(i) * interval_length;
        return TimeGrid(std::move(t), dt);
    }

    std::size_t intervals() const noexcept { return instants_.size() - 1; }
    std::size_t total_steps() const noexcept { return step_index_.back(); }
    double dt() const noexcept { return dt_; }
    const std::vector<double>& instants() const noexcept { return instants_; }
    // Simulation step index of collection instant i.
    std::size_t step_of(std::size_t i) const { return step_index_.at(i); }
    double time_of_step(std::size_t k) const { return static_cast<double>(k) * dt_; }

private:
    std::vector<double> instants_;
    double dt_;
    std::vector<std::size_t> step_index_;
};

struct SineComponent {
    Eigen::Index channel = 0;
    double amplitude = 0.0;
    double frequency = 0.0;  // rad / time
    double phase = 0.0;
};

// u_c(t) = sum over components on channel c of amp sin(freq t + phase),
// plus noise_std times an independent standard normal per step and channel.
struct ExplorationInput {
    std::vector<SineComponent> components;
    double noise_std = 0.0;

    void validate(Eigen::Index m) const {
        if (components.empty()) throw ConfigError("ExplorationInput: needs at least one component");
        if (!(noise_std >= 0.0)) throw ConfigError("ExplorationInput: noise_std must be >= 0");
        for (const auto& c : components) {
            if (c.channel < 0 || c.channel >= m) throw DimensionError("ExplorationInput: channel out of range");
        }
    }

    Eigen::VectorXd deterministic(double t, Eigen::Index m) const {
        Eigen::VectorXd u = Eigen::VectorXd::Zero(m);
        for (const auto& c : components) u(c.channel) += c.amplitude * std::sin(c.frequency * t + c.phase);
        return u;
    }

    double max_amplitude() const {
        double a = 0.0;
        for (const auto& c : components) a = std::max(a, std::abs(c.amplitude));
        return a;
    }
};

// Number of unknowns in (vecs M, vec N, vecs H); also the minimum number of
// collection intervals.
inline Eigen::Index unknown_count(Eigen::Index n, Eigen::Index m) { return m * n + sym_size(n) + sym_size(m); }

// Multi-sine exploration with per-channel disjoint frequencies 2*sqrt(p) for
// distinct primes p (pairwise irrational ratios) and Schroeder phases.
inline ExplorationInput default_exploration(const SlqModel& model, std::size_t intervals,
                                            double amplitude = defaults::exploration_amplitude) {
    const Eigen::Index n = model.n();
    const Eigen::Index m = model.m();
    const Eigen::Index target = unknown_count(n, m);
    if (static_cast<Eigen::Index>(intervals) < target) {
        throw ConfigError("default_exploration: " + std::to_string(intervals) +
                          " intervals cannot give full column rank; need at least mn + n(n+1)/2 + m(m+1)/2 = " +
                          std::to_string(target));
    }
    std::vector<int> primes;
    for (int c = 2; static_cast<Eigen::Index>(primes.size()) < target * m; ++c) {
        bool prime = true;
        for (int p : primes) {
            if (p * p > c) break;
            if (c % p == 0) {
                prime = false;
                break;
            }
        }
        if (prime) primes.push_back(c);
    }
    ExplorationInput in;
    const double per = static_cast<double>(target);
    for (Eigen::Index ch = 0; ch < m; ++ch) {
        for (Eigen::Index j = 0; j < target; ++j) {
            const auto idx = static_cast<std::size_t>(ch + j * m);
            const double jj = static_cast<double>(j + 1);
            in.components.push_back({ch, amplitude, 2.0 * std::sqrt(static_cast<double>(primes[idx])),
                                     std::numbers::pi * jj * jj / per});
        }
    }
    in.noise_std = defaults::exploration_noise_ratio * amplitude;
    return in;
}

// Per-path trajectories on the simulation grid. states[p] is (steps+1) x n,
// inputs[p] is (steps+1) x m (u at every node, including the terminal one).
struct TrajectoryEnsemble {
    TimeGrid grid;
    std::uint64_t seed = 0;
    std::vector<Eigen::MatrixXd> states;
    std::vector<Eigen::MatrixXd> inputs;

    std::size_t paths() const noexcept { return states.size(); }
    Eigen::Index n() const { return states.empty() ? 0 : states.front().cols(); }
    Eigen::Index m() const { return inputs.empty() ? 0 : inputs.front().cols(); }

    void validate() const {
        if (states.size() != inputs.size() || states.empty()) throw DimensionError("TrajectoryEnsemble: path count mismatch");
        const auto rows = static_cast<Eigen::Index>(grid.total_steps() + 1);
        for (std::size_t p = 0; p < states.size(); ++p) {
            if (states[p].rows() != rows || inputs[p].rows() != rows || states[p].cols() != n() ||
                inputs[p].cols() != m()) {
                throw DimensionError("TrajectoryEnsemble: path " + std::to_string(p) + " inconsistent with grid");
            }
        }
    }
};

// Open-loop control: exploration signal evaluated at step k of path p.
class ExplorationLaw {
public:
    ExplorationLaw(const ExplorationInput& input, Eigen::Index m, std::uint64_t seed)
        : input_(&input), m_(m), seed_(seed) {}

    void operator()(std::size_t path, std::size_t step, double t, const Eigen::VectorXd&, Eigen::VectorXd& u) const {
        u = input_->deterministic(t, m_);
        if (input_->noise_std > 0.0) {
            for (Eigen::Index c = 0; c < m_; ++c) {
                u(c) += input_->noise_std * rng::normal(seed_, path, step, rng::Stream::exploration,
                                                        static_cast<std::uint64_t>(c));
            }
        }
    }

private:
    const ExplorationInput* input_;
    Eigen::Index m_;
    std::uint64_t seed_;
};

class LinearFeedbackLaw {
public:
    explicit LinearFeedbackLaw(const FeedbackGain& gain) : K_(&gain.K) {}
    void operator()(std::size_t, std::size_t, double, const Eigen::VectorXd& x, Eigen::VectorXd& u) const {
        u.noalias() = (*K_) * x;
    }

private:
    const Eigen::MatrixXd* K_;
};

// Simulates one path and calls visitor(step, t, x, u) at every node
// k = 0..total_steps. Law signature: law(path, step, t, x, u&).
template <typename Law, typename Visitor>
void simulate_path(const SlqModel& model, const Law& law, const TimeGrid& grid, std::uint64_t seed,
                   std::size_t path, Visitor&& visitor) {
    const double dt = grid.dt();
    const double sqdt = std::sqrt(dt);
    Eigen::VectorXd x = model.x0();
    Eigen::VectorXd u(model.m());
    Eigen::VectorXd drift(model.n());
    Eigen::VectorXd diffusion(model.n());
    const std::size_t steps = grid.total_steps();
    for (std::size_t k = 0;; ++k) {
        const double t = grid.time_of_step(k);
        law(path, k, t, x, u);
        visitor(k, t, x, u);
        if (k == steps) break;
        drift.noalias() = model.A() * x;
        drift.noalias() += model.B() * u;
        diffusion.noalias() = model.C() * x;
        diffusion.noalias() += model.D() * u;
        const double z = rng::normal(seed, path, k, rng::Stream::diffusion);
        x += drift * dt + diffusion * (sqdt * z);
    }
}

// Runs body(path) for every path, splitting contiguous path ranges over
// workers. Callers write results into per-path slots and reduce in index
// order afterwards.
template <typename Body>
void for_each_path(std::size_t paths, unsigned workers, Body&& body) {
    unsigned w = workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : workers;
    w = static_cast<unsigned>(std::min<std::size_t>(w, paths));
    if (w <= 1) {
        for (std::size_t p = 0; p < paths; ++p) body(p);
        return;
    }
    std::vector<std::jthread> pool;
    pool.reserve(w);
    const std::size_t chunk = (paths + w - 1) / w;
    for (unsigned i = 0; i < w; ++i) {
        const std::size_t lo = i * chunk;
        const std::size_t hi = std::min(paths, lo + chunk);
        if (lo >= hi) break;
        pool.emplace_back([lo, hi, &body] {
            for (std::size_t p = lo; p < hi; ++p) body(p);
        });
    }
}

namespace detail {

template <typename Law>
TrajectoryEnsemble record(const SlqModel& model, const Law& law, const TimeGrid& grid, const SimConfig& cfg) {
    cfg.validate();
    if (std::abs(grid.dt() - cfg.dt) > 1e-15 * std::max(1.0, cfg.dt)) throw ConfigError("simulate: grid dt differs from SimConfig dt");
    TrajectoryEnsemble ens{grid, cfg.seed, {}, {}};
    const auto rows = static_cast<Eigen::Index>(grid.total_steps() + 1);
    ens.states.assign(cfg.paths, Eigen::MatrixXd(rows, model.n()));
    ens.inputs.assign(cfg.paths, Eigen::MatrixXd(rows, model.m()));
    for_each_path(cfg.paths, cfg.workers, [&](std::size_t p) {
        auto& xs = ens.states[p];
        auto& us = ens.inputs[p];
        simulate_path(model, law, grid, cfg.seed, p,
                      [&](std::size_t k, double, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
                          xs.row(static_cast<Eigen::Index>(k)) = x.transpose();
                          us.row(static_cast<Eigen::Index>(k)) = u.transpose();
                      });
    });
    return ens;
}

}  // namespace detail

inline TrajectoryEnsemble simulate_open_loop(const SlqModel& model, const ExplorationInput& input, const TimeGrid& grid,
                                             const SimConfig& cfg) {
    input.validate(model.m());
    return detail::record(model, ExplorationLaw(input, model.m(), cfg.seed), grid, cfg);
}

inline TrajectoryEnsemble simulate_closed_loop(const SlqModel& model, const FeedbackGain& K, const TimeGrid& grid,
                                               const SimConfig& cfg) {
    check_gain(model, K);
    return detail::record(model, LinearFeedbackLaw(K), grid, cfg);
}

// Columns: path, step, t, x0..x{n-1}, u0..u{m-1}
inline void write_ensemble_csv(std::ostream& os, const TrajectoryEnsemble& ens) {
    os << "path,step,t";
    for (Eigen::Index i = 0; i < ens.n(); ++i) os << ",x" << i;
    for (Eigen::Index j = 0; j < ens.m(); ++j) os << ",u" << j;
    os << '\n';
    os.precision(17);
    for (std::size_t p = 0; p < ens.paths(); ++p) {
        for (Eigen::Index k = 0; k < ens.states[p].rows(); ++k) {
            os << p << ',' << k << ',' << ens.grid.time_of_step(static_cast<std::size_t>(k));
            for (Eigen::Index i = 0; i < ens.n(); ++i) os << ',' << ens.states[p](k, i);
            for (Eigen::Index j = 0; j < ens.m(); ++j) os << ',' << ens.inputs[p](k, j);
            os << '\n';
        }
    }
}

}  // namespace slqvi
