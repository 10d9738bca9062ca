#pragma once

#include <Eigen/Dense>

#include <optional>
#include <random>
#include <vector>

#include "slqvi/model.hpp"
#include "slqvi/riccati.hpp"

namespace slqvi::testing {

inline Eigen::MatrixXd randn(std::mt19937_64& gen, Eigen::Index r, Eigen::Index c, double scale) {
    std::normal_distribution<double> nd(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j) m(i, j) = nd(gen);
    return m;
}

inline SymMatrix random_psd(std::mt19937_64& gen, Eigen::Index n, double scale = 1.0) {
    const Eigen::MatrixXd L = randn(gen, n, n, scale);
    return SymMatrix(L * L.transpose());
}

struct RandomInstance {
    SlqModel model;
    SymMatrix P_star;
};

// Random systems with n <= 3, m <= 2, Q > 0, R > 0. Accepted only when the
// Riccati flow from 0 converges and its gain passes the mean-square test.
inline std::vector<RandomInstance> random_stabilizable_systems(std::size_t count, std::uint64_t seed) {
    std::mt19937_64 gen(seed);
    std::uniform_int_distribution<int> nd(1, 3), md(1, 2);
    std::vector<RandomInstance> out;
    while (out.size() < count) {
        const Eigen::Index n = nd(gen), m = md(gen);
        const Eigen::MatrixXd A = randn(gen, n, n, 0.6);
        const Eigen::MatrixXd B = randn(gen, n, m, 1.0);
        const Eigen::MatrixXd C = randn(gen, n, n, 0.2);
        const Eigen::MatrixXd D = randn(gen, n, m, 0.1);
        const SymMatrix Q(random_psd(gen, n, 0.5).matrix() + 0.1 * Eigen::MatrixXd::Identity(n, n));
        const SymMatrix R(random_psd(gen, m, 0.5).matrix() + 0.5 * Eigen::MatrixXd::Identity(m, m));
        const SlqModel model(A, B, C, D, Q, R, Eigen::VectorXd::Ones(n));
        try {
            OracleOptions opts;
            opts.t_end = 400.0;
            const OracleResult res = solve_sare_oracle(model, SymMatrix::zero(n), opts);
            if (!is_ms_stabilizing(model, gain(model, res.P))) continue;
            out.push_back({model, res.P});
        } catch (const Error&) {
        }
    }
    return out;
}

}  // namespace slqvi::testing
