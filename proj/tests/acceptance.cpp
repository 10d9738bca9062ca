#include <CLI11.hpp>

#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "slqvi/data_collect.hpp"
#include "slqvi/riccati.hpp"
#include "slqvi/simulator.hpp"
#include "slqvi/vi_engine.hpp"
#include "support/exact_data.hpp"
#include "support/paper_model.hpp"
#include "support/random_systems.hpp"

namespace {

using namespace slqvi;
namespace st = slqvi::testing;

struct Verdict {
    bool pass;
    std::string detail;
};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3e", v);
    return buf;
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

Verdict ac1() {
    const SlqModel model = st::paper_model();
    ViConfig cfg{SymMatrix::identity(2)};
    cfg.stop_tol = 1e-5;
    const ViResult r = run(ModelBasedMap(model), cfg);
    const double p_err = (r.P_final.matrix() - st::published_P().matrix()).norm();
    const double k_err = r.K_final ? max_abs(r.K_final->K - st::published_K().K) : INFINITY;
    const bool pass = r.converged && p_err <= 2e-3 && k_err <= 1e-3;
    return {pass, "converged=" + std::to_string(r.converged) + " iterations=" + std::to_string(r.iterations) +
                      " |P-P_pub|_F=" + fmt(p_err) + " (tol 2e-3) max|K-K_pub|=" + fmt(k_err) + " (tol 1e-3)"};
}

Verdict ac2() {
    const SlqModel model = st::paper_model();
    const Eigen::MatrixXd r1 = riccati_map(model, st::published_P()).matrix();
    const Eigen::MatrixXd r2 = lyapunov_residual(model, st::published_P(), st::published_K()).matrix();
    const double e1 = max_abs(r1 - st::published_R1());
    const double e2 = max_abs(r2 - st::published_R2());
    std::ostringstream os;
    os << "max|R1-R1_pub|=" << fmt(e1) << " max|R2-R2_pub|=" << fmt(e2) << " (tol 5e-5)";
    for (Eigen::Index i = 0; i < 2; ++i)
        for (Eigen::Index j = i; j < 2; ++j) {
            if (std::abs(r1(i, j) - st::published_R1()(i, j)) > 5e-5)
                os << "; R1(" << i << "," << j << ") computed " << fmt(r1(i, j)) << " printed " << fmt(st::published_R1()(i, j));
            if (std::abs(r2(i, j) - st::published_R2()(i, j)) > 5e-5)
                os << "; R2(" << i << "," << j << ") computed " << fmt(r2(i, j)) << " printed " << fmt(st::published_R2()(i, j));
        }
    return {e1 <= 5e-5 && e2 <= 5e-5, os.str()};
}

Verdict ac3() {
    const SlqModel model = st::paper_model();
    std::vector<OracleResult> res;
    double worst_res = 0.0;
    for (double s : {0.0, 1.0, 10.0}) {
        res.push_back(solve_sare_oracle(model, s * SymMatrix::identity(2)));
        worst_res = std::max(worst_res, riccati_map(model, res.back().P).frobenius_norm());
    }
    double spread = 0.0;
    for (std::size_t i = 0; i < res.size(); ++i)
        for (std::size_t j = i + 1; j < res.size(); ++j)
            spread = std::max(spread, (res[i].P.matrix() - res[j].P.matrix()).norm());

    // 20 sample times spread over the flow's horizon from P0 = 0
    OracleOptions opts;
    for (int i = 1; i <= 20; ++i) opts.sample_times.push_back(res.front().t * i / 21.0);
    const OracleResult flow = solve_sare_oracle(model, SymMatrix::zero(2), opts);
    double worst_drop = INFINITY;
    for (std::size_t i = 1; i < flow.samples.size(); ++i)
        worst_drop = std::min(worst_drop, (flow.samples[i].P - flow.samples[i - 1].P).min_eigenvalue());
    const bool enough = flow.samples.size() == 20;
    const bool pass = spread <= 1e-8 && worst_res < 1e-10 && enough && worst_drop >= -1e-8;
    return {pass, "pairwise spread=" + fmt(spread) + " (tol 1e-8) max|R1|_F=" + fmt(worst_res) +
                      " (tol 1e-10) samples=" + std::to_string(flow.samples.size()) +
                      " min eig of successive increments=" + fmt(worst_drop) + " (slack 1e-8)"};
}

Verdict ac4() {
    const SlqModel model = st::paper_model();
    const DataMatrices data = st::exact_data(model, 20, 1);
    if (!data.rank_ok()) return {false, "exact data failed the rank test"};
    ViConfig cfg{SymMatrix::identity(2)};
    const ModelBasedMap mb(model);
    const ModelFreeMap mf(data, model.Q(), model.R());
    ViState a = ViState::initial(cfg), b = ViState::initial(cfg);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
        a = vi_step(mb, std::move(a), cfg);
        b = vi_step(mf, std::move(b), cfg);
        worst = std::max(worst, (a.P.matrix() - b.P.matrix()).norm());
    }
    return {worst <= 1e-8, "max per-iterate |P_mf-P_mb|_F over 50 steps=" + fmt(worst) + " (tol 1e-8)"};
}

Verdict ac5() {
    const SlqModel model = st::paper_model();
    const SymMatrix P_star = solve_sare_oracle(model, SymMatrix::zero(2)).P;
    const TimeGrid grid = TimeGrid::uniform(20, 0.1, 1e-3);
    const ExplorationInput input = default_exploration(model, 20);
    int good = 0;
    std::ostringstream os;
    os << "errors:";
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        SimConfig sim;
        sim.paths = 10000;
        sim.dt = 1e-3;
        sim.seed = seed;
        sim.workers = 0;
        const DataMatrices data = collect_online(model, input, grid, sim);
        if (!data.rank_ok()) {
            os << " seed" << seed << "=rank";
            continue;
        }
        const ViResult r = run(ModelFreeMap(data, model.Q(), model.R()), ViConfig{SymMatrix::identity(2)});
        const double err = (r.P_final.matrix() - P_star.matrix()).norm();
        if (r.converged && err <= 5e-2) ++good;
        os << " " << fmt(err) << (r.converged ? "" : "(nc)");
    }
    return {good >= 8, std::to_string(good) + "/10 seeds within 5e-2; " + os.str()};
}

Verdict ac6() {
    const auto systems = st::random_stabilizable_systems(20, 2024);
    int good = 0, stab = 0, conv = 0;
    double worst_ratio = 0.0;
    for (const auto& inst : systems) {
        ViConfig cfg{SymMatrix::identity(inst.model.n())};
        cfg.trust.r0 = defaults::trust_radius_factor * (1.0 + inst.model.Q().frobenius_norm());
        const ViResult r = run(ModelBasedMap(inst.model), cfg);
        const double tol = 1e-2 * (1.0 + inst.P_star.frobenius_norm());
        const double err = (r.P_final.matrix() - inst.P_star.matrix()).norm();
        worst_ratio = std::max(worst_ratio, err / tol);
        if (err <= tol) ++good;
        if (r.converged) {
            ++conv;
            if (r.K_final && is_ms_stabilizing(inst.model, *r.K_final)) ++stab;
        }
    }
    const bool pass = good == 20 && stab == conv;
    return {pass, std::to_string(good) + "/20 within 1e-2(1+|P*|); converged=" + std::to_string(conv) +
                      " stabilizing=" + std::to_string(stab) + " worst err/tol=" + fmt(worst_ratio)};
}

Verdict ac7() {
    std::mt19937_64 g(7);
    std::vector<std::string> failed;

    bool round_trip = true;
    for (int t = 0; t < 100; ++t) {
        const Eigen::Index n = 1 + t % 6;
        const Eigen::VectorXd v = st::randn(g, sym_size(n), 1, 1.0);
        round_trip = round_trip && vecs(mat_from_vecs(v)).data() == v;
    }
    if (!round_trip) failed.push_back("vecs round-trip");

    bool duality = true;
    for (int t = 0; t < 100; ++t) {
        const Eigen::Index n = 1 + t % 6;
        const Eigen::VectorXd xi = st::randn(g, n, 1, 1.0);
        const Eigen::MatrixXd h = st::randn(g, n, n, 1.0);
        const SymMatrix P(h + h.transpose());
        const double direct = xi.dot(P.matrix() * xi);
        duality = duality && std::abs(quad_basis(xi).dot(vecs(P).data()) - direct) <= 1e-12 * std::max(1.0, std::abs(direct));
    }
    if (!duality) failed.push_back("quad_basis duality");

    bool identity = true;
    const auto systems = st::random_stabilizable_systems(5, 3);
    for (int t = 0; t < 100; ++t) {
        const SlqModel& model = systems[static_cast<std::size_t>(t) % systems.size()].model;
        const SymMatrix P = st::random_psd(g, model.n());
        const Eigen::MatrixXd f = riccati_map(model, P).matrix();
        const Eigen::MatrixXd l = lyapunov_residual(model, P, gain(model, P)).matrix();
        identity = identity && (f - l).norm() <= 1e-9 * std::max(1.0, f.norm());
    }
    if (!identity) failed.push_back("gain/residual identity");

    bool nesting = true;
    const TrustSetFamily fam{3.0, 2.0};
    for (int t = 0; t < 100; ++t) {
        const SymMatrix P = (1.0 + t) * st::random_psd(g, 1 + t % 4);
        std::size_t q = 0;
        while (!fam.contains(P, q) && q < 200) ++q;
        nesting = nesting && q < 200 && fam.contains(P, q + 1) && fam.contains(P, q + 7);
    }
    if (!nesting) failed.push_back("trust-set nesting/exhaustion");

    const SlqModel model = st::paper_model();
    const TimeGrid grid = TimeGrid::uniform(6, 0.1, 1e-3);
    const ExplorationInput in = default_exploration(model, 6);
    SimConfig sim;
    sim.paths = 16;
    sim.seed = 11;
    const TrajectoryEnsemble e1 = simulate_open_loop(model, in, grid, sim);
    sim.workers = 4;
    const TrajectoryEnsemble e2 = simulate_open_loop(model, in, grid, sim);
    bool determinism = true;
    for (std::size_t p = 0; p < sim.paths; ++p) determinism = determinism && e1.states[p] == e2.states[p] && e1.inputs[p] == e2.inputs[p];
    const DataMatrices d1 = collect(e1), d2 = collect_online(model, in, grid, sim);
    determinism = determinism && d1.I_xx() == d2.I_xx() && d1.d_xx() == d2.d_xx() && d1.d_xu() == d2.d_xu() && d1.d_uu() == d2.d_uu();
    if (!determinism) failed.push_back("seed determinism");

    const SlqModel still(model.A(), model.B(), model.C(), model.D(), model.Q(), model.R(), Eigen::VectorXd::Zero(2));
    sim.workers = 1;
    const DataMatrices zero = collect(simulate_closed_loop(still, FeedbackGain{Eigen::MatrixXd::Zero(1, 2)}, grid, sim));
    const DataMatrices thin = st::exact_data(model, 5, 1);
    const DataMatrices full = st::exact_data(model, 20, 1);
    if (zero.rank_ok() || thin.rank_ok() || !full.rank_ok()) failed.push_back("rank detection");

    std::string detail = "6 property suites";
    if (failed.empty()) detail += " green";
    for (const auto& f : failed) detail += "; failed: " + f;
    return {failed.empty(), detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    int only = 0;
    app.add_option("--criterion", only, "Run a single criterion (1-7)")->check(CLI::Range(1, 7));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::function<Verdict()>> criteria{ac1, ac2, ac3, ac4, ac5, ac6, ac7};
    int failures = 0;
    for (int i = 1; i <= 7; ++i) {
        if (only != 0 && only != i) continue;
        Verdict v{false, ""};
        try {
            v = criteria[static_cast<std::size_t>(i - 1)]();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        std::printf("AC%d %s  %s\n", i, v.pass ? "PASS" : "FAIL", v.detail.c_str());
        std::fflush(stdout);
        if (!v.pass) ++failures;
    }
    return failures == 0 ? 0 : 1;
}
