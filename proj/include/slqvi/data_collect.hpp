#pragma once

// Data matrices of the Ito identity
//
//   E[x'Px](t_{i+1}) - E[x'Px](t_i)
//       = E int (x'Mx + 2u'Nx + u'Hu) ds,   M = A'P + PA + C'PC, N = B'P + D'PC, H = D'PD
//
// Row i of each block is an ensemble mean over interval [t_i, t_{i+1}]:
//   I_xx : quad_basis(x(t_{i+1})) - quad_basis(x(t_i))
//   d_xx : int quad_basis(x) ds
//   d_xu : int x (x) u ds
//   d_uu : int quad_basis(u) ds
// and  [d_xx, 2 d_xu, d_uu] theta = I_xx, so  [vecs M; vec N; vecs H] = theta vecs(P).

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "slqvi/defaults.hpp"
#include "slqvi/errors.hpp"
#include "slqvi/model.hpp"
#include "slqvi/simulator.hpp"
#include "slqvi/symmat.hpp"

namespace slqvi {

inline constexpr double kDefaultRankTol = defaults::rank_tol;

struct ItoTriple {
    SymMatrix M;
    Eigen::MatrixXd N;  // m x n
    SymMatrix H;
};

class DataMatrices {
public:
    DataMatrices(Eigen::Index n, Eigen::Index m, Eigen::MatrixXd I_xx, Eigen::MatrixXd d_xx, Eigen::MatrixXd d_xu,
                 Eigen::MatrixXd d_uu, double rank_tol = kDefaultRankTol)
        : n_(n), m_(m), I_xx_(std::move(I_xx)), d_xx_(std::move(d_xx)), d_xu_(std::move(d_xu)),
          d_uu_(std::move(d_uu)), rank_tol_(rank_tol) {
        const Eigen::Index l = I_xx_.rows();
        if (n_ < 1 || m_ < 1) throw DimensionError("DataMatrices: n and m must be >= 1");
        if (I_xx_.cols() != sym_size(n_) || d_xx_.cols() != sym_size(n_) || d_xu_.cols() != m_ * n_ ||
            d_uu_.cols() != sym_size(m_)) {
            throw DimensionError("DataMatrices: block column counts do not match n, m");
        }
        if (d_xx_.rows() != l || d_xu_.rows() != l || d_uu_.rows() != l) {
            throw DimensionError("DataMatrices: blocks must share the same row count");
        }
        analyze();
    }

    Eigen::Index n() const noexcept { return n_; }
    Eigen::Index m() const noexcept { return m_; }
    Eigen::Index rows() const noexcept { return I_xx_.rows(); }
    const Eigen::MatrixXd& I_xx() const noexcept { return I_xx_; }
    const Eigen::MatrixXd& d_xx() const noexcept { return d_xx_; }
    const Eigen::MatrixXd& d_xu() const noexcept { return d_xu_; }
    const Eigen::MatrixXd& d_uu() const noexcept { return d_uu_; }
    double rank_tol() const noexcept { return rank_tol_; }

    // [d_xx, 2 d_xu, d_uu]
    Eigen::MatrixXd regressor() const {
        Eigen::MatrixXd X(rows(), unknown_count(n_, m_));
        X << d_xx_, 2.0 * d_xu_, d_uu_;
        return X;
    }

    bool rank_ok() const noexcept { return rank_ok_; }
    double min_singular_value() const noexcept { return sigma_min_; }
    double max_singular_value() const noexcept { return sigma_max_; }

    const Eigen::MatrixXd& theta() const {
        if (!rank_ok_) throw RankError(rank_message());
        return *theta_;
    }

    std::string rank_message() const {
        std::ostringstream os;
        os << "data matrix [d_xx, 2 d_xu, d_uu] (" << rows() << " x " << unknown_count(n_, m_)
           << ") does not have full column rank mn + n(n+1)/2 + m(m+1)/2 = " << unknown_count(n_, m_)
           << " (sigma_min/sigma_max = " << (sigma_max_ > 0 ? sigma_min_ / sigma_max_ : 0.0) << ", tol " << rank_tol_
           << "); use a richer exploration input or more intervals";
        return os.str();
    }

private:
    void analyze() {
        const Eigen::MatrixXd X = regressor();
        const Eigen::Index cols = X.cols();
        if (X.rows() < cols) {
            rank_ok_ = false;
            sigma_min_ = 0.0;
            sigma_max_ = X.rows() > 0 ? Eigen::JacobiSVD<Eigen::MatrixXd>(X).singularValues()(0) : 0.0;
            return;
        }
        const Eigen::JacobiSVD<Eigen::MatrixXd> svd(X);
        sigma_max_ = svd.singularValues()(0);
        sigma_min_ = svd.singularValues()(cols - 1);
        rank_ok_ = sigma_max_ > 0.0 && sigma_min_ > rank_tol_ * sigma_max_;
        if (!rank_ok_) return;

        // Least squares via column-scaled Householder QR.
        Eigen::VectorXd scale = X.colwise().norm().transpose();
        for (Eigen::Index j = 0; j < cols; ++j)
            if (scale(j) == 0.0) scale(j) = 1.0;
        const Eigen::MatrixXd Xs = X * scale.cwiseInverse().asDiagonal();
        const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(Xs);
        Eigen::MatrixXd th = qr.solve(I_xx_);
        theta_ = scale.cwiseInverse().asDiagonal() * th;
    }

    Eigen::Index n_, m_;
    Eigen::MatrixXd I_xx_, d_xx_, d_xu_, d_uu_;
    double rank_tol_;
    bool rank_ok_ = false;
    double sigma_min_ = 0.0;
    double sigma_max_ = 0.0;
    std::optional<Eigen::MatrixXd> theta_;
};

// theta via the explicit normal equations (X'X)^{-1} X' I_xx. Numerically
// inferior; kept as a cross-check.
inline Eigen::MatrixXd theta_normal_equations(const DataMatrices& data) {
    const Eigen::MatrixXd X = data.regressor();
    return (X.transpose() * X).inverse() * X.transpose() * data.I_xx();
}

inline ItoTriple recover_triple(const DataMatrices& data, const SymMatrix& P) {
    if (P.dim() != data.n()) throw DimensionError("recover_triple: P dimension does not match data");
    const Eigen::VectorXd v = data.theta() * vecs(P).data();
    const Eigen::Index n = data.n();
    const Eigen::Index m = data.m();
    const Eigen::Index sn = sym_size(n);
    return ItoTriple{mat_from_vecs(Eigen::VectorXd(v.segment(0, sn))),
                     unvec(v.segment(sn, m * n), m, n),
                     mat_from_vecs(Eigen::VectorXd(v.segment(sn + m * n, sym_size(m))))};
}

// Per-path interval sums; the ensemble rows are their means.
struct PathIntegrals {
    Eigen::MatrixXd I_xx, d_xx, d_xu, d_uu;

    PathIntegrals(std::size_t l, Eigen::Index n, Eigen::Index m)
        : I_xx(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l), sym_size(n))),
          d_xx(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l), sym_size(n))),
          d_xu(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l), m * n)),
          d_uu(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(l), sym_size(m))) {}
};

// Accumulates one path node by node (trapezoidal rule inside each interval).
class PathAccumulator {
public:
    PathAccumulator(const TimeGrid& grid, Eigen::Index n, Eigen::Index m)
        : grid_(&grid), out_(grid.intervals(), n, m), qx_(sym_size(n)), qu_(sym_size(m)), xu_(m * n) {}

    void operator()(std::size_t k, double, const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        const double dt = grid_->dt();
        quad_basis_into(x, qx_);
        quad_basis_into(u, qu_);
        const Eigen::VectorXd& qx = qx_;
        const Eigen::VectorXd& qu = qu_;
        for (Eigen::Index i = 0; i < x.size(); ++i)
            for (Eigen::Index j = 0; j < u.size(); ++j) xu_(i * u.size() + j) = x(i) * u(j);

        // Node k closes interval `interval_` if it is its right endpoint.
        if (k > 0) {
            add(interval_, 0.5 * dt, qx, qu);
            if (k == grid_->step_of(interval_ + 1)) {
                out_.I_xx.row(static_cast<Eigen::Index>(interval_)) += qx.transpose();
                ++interval_;
            }
        }
        if (interval_ < grid_->intervals()) {
            if (k == grid_->step_of(interval_)) out_.I_xx.row(static_cast<Eigen::Index>(interval_)) -= qx.transpose();
            add(interval_, 0.5 * dt, qx, qu);
        }
    }

    const PathIntegrals& result() const noexcept { return out_; }

private:
    void add(std::size_t i, double w, const Eigen::VectorXd& qx, const Eigen::VectorXd& qu) {
        const auto r = static_cast<Eigen::Index>(i);
        out_.d_xx.row(r) += w * qx.transpose();
        out_.d_xu.row(r) += w * xu_.transpose();
        out_.d_uu.row(r) += w * qu.transpose();
    }

    const TimeGrid* grid_;
    PathIntegrals out_;
    Eigen::VectorXd qx_, qu_, xu_;
    std::size_t interval_ = 0;
};

namespace detail {

inline DataMatrices reduce(const std::vector<PathIntegrals>& per_path, Eigen::Index n, Eigen::Index m,
                           double rank_tol) {
    PathIntegrals sum = per_path.front();
    for (std::size_t p = 1; p < per_path.size(); ++p) {
        sum.I_xx += per_path[p].I_xx;
        sum.d_xx += per_path[p].d_xx;
        sum.d_xu += per_path[p].d_xu;
        sum.d_uu += per_path[p].d_uu;
    }
    const double inv = 1.0 / static_cast<double>(per_path.size());
    return DataMatrices(n, m, sum.I_xx * inv, sum.d_xx * inv, sum.d_xu * inv, sum.d_uu * inv, rank_tol);
}

}  // namespace detail

inline DataMatrices collect(const TrajectoryEnsemble& ens, double rank_tol = kDefaultRankTol) {
    ens.validate();
    const Eigen::Index n = ens.n();
    const Eigen::Index m = ens.m();
    std::vector<PathIntegrals> per_path;
    per_path.reserve(ens.paths());
    for (std::size_t p = 0; p < ens.paths(); ++p) {
        PathAccumulator acc(ens.grid, n, m);
        for (Eigen::Index k = 0; k < ens.states[p].rows(); ++k) {
            acc(static_cast<std::size_t>(k), ens.grid.time_of_step(static_cast<std::size_t>(k)),
                ens.states[p].row(k).transpose(), ens.inputs[p].row(k).transpose());
        }
        per_path.push_back(acc.result());
    }
    return detail::reduce(per_path, n, m, rank_tol);
}

// Same result as collect(simulate_open_loop(...)) without storing the paths.
inline DataMatrices collect_online(const SlqModel& model, const ExplorationInput& input, const TimeGrid& grid,
                                   const SimConfig& cfg, double rank_tol = kDefaultRankTol) {
    cfg.validate();
    input.validate(model.m());
    const ExplorationLaw law(input, model.m(), cfg.seed);
    std::vector<PathIntegrals> per_path(cfg.paths, PathIntegrals(grid.intervals(), model.n(), model.m()));
    for_each_path(cfg.paths, cfg.workers, [&](std::size_t p) {
        PathAccumulator acc(grid, model.n(), model.m());
        simulate_path(model, law, grid, cfg.seed, p, acc);
        per_path[p] = acc.result();
    });
    return detail::reduce(per_path, model.n(), model.m(), rank_tol);
}

// Text format:
//   slqvi-data 1
//   n <n> m <m> l <l>
//   then l rows, each: I_xx | d_xx | d_xu | d_uu  as comma-separated values
inline void write_data_matrices(std::ostream& os, const DataMatrices& d) {
    os << "slqvi-data 1\n";
    os << "n " << d.n() << " m " << d.m() << " l " << d.rows() << '\n';
    os << std::setprecision(17);
    for (Eigen::Index r = 0; r < d.rows(); ++r) {
        bool first = true;
        auto put = [&](const Eigen::MatrixXd& b) {
            for (Eigen::Index c = 0; c < b.cols(); ++c) {
                if (!first) os << ',';
                os << b(r, c);
                first = false;
            }
        };
        put(d.I_xx());
        put(d.d_xx());
        put(d.d_xu());
        put(d.d_uu());
        os << '\n';
    }
}

inline DataMatrices read_data_matrices(std::istream& is, double rank_tol = kDefaultRankTol) {
    std::string magic;
    int version = 0;
    if (!(is >> magic >> version) || magic != "slqvi-data" || version != 1) {
        throw ConfigError("data matrices: bad header (expected 'slqvi-data 1')");
    }
    std::string kn, km, kl;
    Eigen::Index n = 0, m = 0, l = 0;
    if (!(is >> kn >> n >> km >> m >> kl >> l) || kn != "n" || km != "m" || kl != "l" || n < 1 || m < 1 || l < 1) {
        throw ConfigError("data matrices: bad dimension line");
    }
    const Eigen::Index sn = sym_size(n), sm = sym_size(m);
    const Eigen::Index width = 2 * sn + m * n + sm;
    Eigen::MatrixXd all(l, width);
    std::string line;
    std::getline(is, line);
    for (Eigen::Index r = 0; r < l; ++r) {
        if (!std::getline(is, line)) throw ConfigError("data matrices: expected " + std::to_string(l) + " rows");
        std::stringstream ss(line);
        std::string cell;
        Eigen::Index c = 0;
        while (std::getline(ss, cell, ',')) {
            if (c >= width) throw ConfigError("data matrices: too many columns in row " + std::to_string(r));
            try {
                all(r, c++) = std::stod(cell);
            } catch (const std::exception&) {
                throw ConfigError("data matrices: bad number '" + cell + "' in row " + std::to_string(r));
            }
        }
        if (c != width) throw ConfigError("data matrices: too few columns in row " + std::to_string(r));
    }
    return DataMatrices(n, m, all.middleCols(0, sn), all.middleCols(sn, sn), all.middleCols(2 * sn, m * n),
                        all.middleCols(2 * sn + m * n, sm), rank_tol);
}

}  // namespace slqvi
