#pragma once

#include <cmath>
#include <vector>

#include "slqvi/errors.hpp"
#include "slqvi/model.hpp"
#include "slqvi/simulator.hpp"

namespace slqvi {

struct CostEstimate {
    double mean = 0.0;
    double std_error = 0.0;
};

// Monte-Carlo estimate of E int_0^T (u'Ru + x'Qx) ds under u = Kx, with the
// time integral taken by the trapezoidal rule on the simulation grid.
inline CostEstimate evaluate_cost_mc(const SlqModel& model, const FeedbackGain& K, const SimConfig& sim, double horizon) {
    check_gain(model, K);
    sim.validate();
    if (!(horizon > 0.0)) throw ConfigError("evaluate_cost_mc: horizon must be positive");
    if (!is_ms_stabilizing(model, K)) {
        throw UnstableGainError("evaluate_cost_mc: gain is not mean-square stabilizing; the cost integral diverges");
    }
    const TimeGrid grid({0.0, horizon}, sim.dt);
    const std::size_t last = grid.total_steps();
    const LinearFeedbackLaw law(K);

    std::vector<double> per_path(sim.paths, 0.0);
    for_each_path(sim.paths, sim.workers, [&](std::size_t p) {
        double acc = 0.0;
        simulate_path(model, law, grid, sim.seed, p,
                      [&](std::size_t k, double, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
                          const double w = (k == 0 || k == last) ? 0.5 : 1.0;
                          acc += w * (x.dot(model.Q().matrix() * x) + u.dot(model.R().matrix() * u));
                      });
        per_path[p] = acc * sim.dt;
    });

    double mean = 0.0;
    for (double v : per_path) mean += v;
    mean /= static_cast<double>(sim.paths);
    double var = 0.0;
    for (double v : per_path) var += (v - mean) * (v - mean);
    const double n = static_cast<double>(sim.paths);
    const double se = sim.paths > 1 ? std::sqrt(var / (n - 1.0) / n) : 0.0;
    return {mean, se};
}

}  // namespace slqvi
