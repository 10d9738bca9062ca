// slqvi: value-iteration solver for continuous-time stochastic LQ control.
//
//   slqvi solve  <config.json> [overrides]      run an experiment, write result bundle
//   slqvi verify <bundle dir | result.json>     recompute Riccati/Lyapunov residuals
//   slqvi oracle <config.json>                  integrate the Riccati flow to P*
//   slqvi sweep  <config.json> --seeds ...      independent runs over seeds

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <future>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "slqvi/experiment.hpp"

namespace {

using nlohmann::json;
using slqvi::ExitCode;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> paths;
    std::optional<double> dt;
    std::optional<std::string> algorithm;
    std::optional<double> stop_tol;
    std::optional<std::size_t> max_iter;
    std::optional<std::string> output;
    std::optional<std::size_t> intervals;
    std::optional<double> interval_length;
    std::optional<std::string> data_file;
    std::optional<unsigned> workers;
    bool ensemble_csv = false;

    void attach(CLI::App* app) {
        app->add_option("--seed", seed, "Simulation seed");
        app->add_option("--paths", paths, "Ensemble size");
        app->add_option("--dt", dt, "Simulation time step");
        app->add_option("--algorithm", algorithm, "model_based | model_free")
            ->check(CLI::IsMember({"model_based", "model_free"}));
        app->add_option("--stop-tol", stop_tol, "Stop tolerance on |P~ - P|/eps");
        app->add_option("--max-iter", max_iter, "Iteration cap");
        app->add_option("-o,--output", output, "Output directory");
        app->add_option("--intervals", intervals, "Number of collection intervals");
        app->add_option("--interval-length", interval_length, "Length of each collection interval");
        app->add_option("--data-file", data_file, "Pre-recorded data matrices (skips simulation)");
        app->add_option("--workers", workers, "Worker threads for path simulation (0 = all cores)");
        app->add_flag("--ensemble-csv", ensemble_csv, "Also write ensemble.csv (model_free only)");
    }

    json patch() const {
        json p = json::object();
        if (seed) p["sim"]["seed"] = *seed;
        if (paths) p["sim"]["paths"] = *paths;
        if (dt) p["sim"]["dt"] = *dt;
        if (workers) p["sim"]["workers"] = *workers;
        if (algorithm) p["algorithm"] = *algorithm;
        if (stop_tol) p["vi"]["stop_tol"] = *stop_tol;
        if (max_iter) p["vi"]["max_iter"] = *max_iter;
        if (output) p["output"]["directory"] = *output;
        if (intervals) p["collection"]["intervals"] = *intervals;
        if (interval_length) p["collection"]["interval_length"] = *interval_length;
        if (data_file) p["collection"]["data_file"] = std::filesystem::absolute(*data_file).string();
        if (ensemble_csv) p["output"]["ensemble_csv"] = true;
        return p;
    }
};

int code(ExitCode c) { return static_cast<int>(c); }

void print_matrix(const char* label, const Eigen::MatrixXd& m) {
    std::cout << label << " =\n";
    std::ostringstream os;
    os.precision(9);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        os << "  [";
        for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? ", " : "") << m(r, c) + 0.0;
        os << "]\n";
    }
    std::cout << os.str();
}

int cmd_solve(const std::string& config_path, const Overrides& ov) {
    const slqvi::ExperimentConfig cfg = slqvi::load_experiment(config_path, ov.patch());
    for (const auto& w : cfg.model.warnings()) std::cerr << "warning: " << w << '\n';
    std::optional<slqvi::TrajectoryEnsemble> ensemble;
    const bool keep = cfg.output.ensemble_csv && cfg.algorithm == slqvi::Algorithm::model_free;
    const slqvi::ExperimentOutcome out = slqvi::run_experiment(cfg, keep ? &ensemble : nullptr);
    if (out.code == ExitCode::rank_failure) {
        std::cerr << "error: " << out.message << '\n';
        return code(out.code);
    }
    slqvi::write_bundle(cfg, out, ensemble);
    const auto& r = *out.vi;
    std::cout << cfg.name << " (" << slqvi::to_string(cfg.algorithm) << "): " << out.message << " after "
              << r.iterations << " iterations, " << r.resets << " resets\n";
    print_matrix("P_final", r.P_final.matrix());
    if (r.K_final) print_matrix("K_final", r.K_final->K);
    if (out.R1) std::cout << "|R1|_F = " << out.R1->frobenius_norm() << '\n';
    if (out.R2) std::cout << "|R2|_F = " << out.R2->frobenius_norm() << '\n';
    std::cout << "bundle written to " << cfg.output.directory.string() << '\n';
    if (out.code == ExitCode::not_converged) std::cerr << "error: " << out.message << '\n';
    return code(out.code);
}

int cmd_verify(const std::string& bundle, std::optional<double> threshold) {
    const slqvi::VerifyReport rep = slqvi::verify_bundle(bundle, threshold);
    if (rep.R1) std::cout << "|R1(P)| entrywise:\n" << slqvi::format_matrix_abs(rep.R1->matrix());
    if (rep.R2) std::cout << "|R2(P, K)| entrywise:\n" << slqvi::format_matrix_abs(rep.R2->matrix());
    for (const auto& f : rep.flagged) std::cout << "FLAG " << f << " exceeds " << rep.threshold << '\n';
    std::cout << (rep.ok() ? "verify: ok" : "verify: flagged") << '\n';
    return rep.ok() ? code(ExitCode::ok) : code(ExitCode::verify_flagged);
}

int cmd_oracle(const std::string& config_path, const std::string& p0, std::optional<double> t_end,
               std::optional<double> rtol, const Overrides& ov) {
    const slqvi::ExperimentConfig cfg = slqvi::load_experiment(config_path, ov.patch());
    const Eigen::Index n = cfg.model.n();
    slqvi::SymMatrix start = slqvi::SymMatrix::zero(n);
    if (p0 == "identity") start = slqvi::SymMatrix::identity(n);
    else if (p0 != "zero") {
        double s = 0.0;
        try {
            s = std::stod(p0);
        } catch (const std::exception&) {
            throw slqvi::ConfigError("--P0 must be 'zero', 'identity' or a scale factor");
        }
        start = s * slqvi::SymMatrix::identity(n);
    }
    slqvi::OracleOptions opts;
    if (t_end) opts.t_end = *t_end;
    if (rtol) opts.rtol = *rtol;
    const slqvi::OracleResult res = slqvi::solve_sare_oracle(cfg.model, start, opts);
    const slqvi::FeedbackGain K = slqvi::gain(cfg.model, res.P);

    json b;
    b["schema_version"] = slqvi::kSchemaVersion;
    b["name"] = cfg.name;
    b["algorithm"] = "oracle";
    b["converged"] = true;
    b["flow_time"] = res.t;
    b["flow_steps"] = res.steps;
    b["P_final"] = slqvi::json_io::to_json(res.P.matrix());
    b["K_final"] = slqvi::json_io::to_json(K.K);
    b["residuals"] = {{"R1_fro", res.residual}};
    b["ms_stabilizing"] = slqvi::is_ms_stabilizing(cfg.model, K);
    b["config"] = cfg.to_json();
    std::filesystem::create_directories(cfg.output.directory);
    slqvi::write_text(cfg.output.directory / "result.json", b.dump(2) + "\n");

    std::cout << "Riccati flow reached |R1|_F = " << res.residual << " at t = " << res.t << '\n';
    print_matrix("P*", res.P.matrix());
    print_matrix("K*", K.K);
    return code(ExitCode::ok);
}

std::vector<std::uint64_t> parse_seeds(const std::string& spec) {
    std::vector<std::uint64_t> seeds;
    const auto colon = spec.find(':');
    if (colon != std::string::npos) {
        const auto lo = std::stoull(spec.substr(0, colon));
        const auto hi = std::stoull(spec.substr(colon + 1));
        if (hi < lo) throw slqvi::ConfigError("--seeds range must be lo:hi with lo <= hi");
        for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
        return seeds;
    }
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) seeds.push_back(std::stoull(item));
    if (seeds.empty()) throw slqvi::ConfigError("--seeds is empty");
    return seeds;
}

int cmd_sweep(const std::string& config_path, const std::string& seeds_spec, unsigned jobs, const Overrides& ov) {
    const std::vector<std::uint64_t> seeds = parse_seeds(seeds_spec);
    const slqvi::ExperimentConfig base = slqvi::load_experiment(config_path, ov.patch());
    std::vector<slqvi::ExperimentConfig> cfgs;
    for (auto s : seeds) {
        json p = ov.patch();
        p["sim"]["seed"] = s;
        p["output"]["directory"] = (base.output.directory / ("seed_" + std::to_string(s))).string();
        cfgs.push_back(slqvi::load_experiment(config_path, p));
    }

    std::optional<slqvi::SymMatrix> oracle;
    try {
        oracle = slqvi::solve_sare_oracle(base.model, slqvi::SymMatrix::zero(base.model.n())).P;
    } catch (const slqvi::Error& e) {
        std::cerr << "warning: no oracle reference (" << e.what() << ")\n";
    }

    std::vector<slqvi::ExperimentOutcome> outcomes(cfgs.size());
    const unsigned width = std::max(1u, jobs == 0 ? std::thread::hardware_concurrency() : jobs);
    for (std::size_t lo = 0; lo < cfgs.size(); lo += width) {
        std::vector<std::future<slqvi::ExperimentOutcome>> batch;
        for (std::size_t i = lo; i < std::min(cfgs.size(), lo + width); ++i) {
            batch.push_back(std::async(std::launch::async, [&cfgs, i] { return slqvi::run_experiment(cfgs[i]); }));
        }
        for (std::size_t i = 0; i < batch.size(); ++i) outcomes[lo + i] = batch[i].get();
    }

    std::filesystem::create_directories(base.output.directory);
    std::ostringstream csv;
    csv.precision(17);
    csv << "seed,exit_code,converged,iterations,resets,error_vs_oracle\n";
    int worst = 0;
    std::size_t converged = 0;
    for (std::size_t i = 0; i < cfgs.size(); ++i) {
        const auto& o = outcomes[i];
        if (o.code != ExitCode::rank_failure) slqvi::write_bundle(cfgs[i], o);
        double err = std::numeric_limits<double>::quiet_NaN();
        if (o.vi && oracle) err = (o.vi->P_final.matrix() - oracle->matrix()).norm();
        const bool conv = o.vi && o.vi->converged;
        converged += conv ? 1 : 0;
        csv << seeds[i] << ',' << code(o.code) << ',' << (conv ? 1 : 0) << ',' << (o.vi ? o.vi->iterations : 0) << ','
            << (o.vi ? o.vi->resets : 0) << ',' << err << '\n';
        worst = std::max(worst, code(o.code));
    }
    slqvi::write_text(base.output.directory / "sweep.csv", csv.str());
    std::cout << csv.str();
    std::cout << converged << "/" << cfgs.size() << " runs converged; summary in "
              << (base.output.directory / "sweep.csv").string() << '\n';
    return worst;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Value iteration for continuous-time stochastic LQ control"};
    app.require_subcommand(1);

    std::string config, bundle, seeds = "0:9", p0 = "zero";
    std::optional<double> threshold, t_end, rtol;
    unsigned jobs = 1;
    Overrides solve_ov, oracle_ov, sweep_ov;

    auto* solve = app.add_subcommand("solve", "Run an experiment and write a result bundle");
    solve->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    solve_ov.attach(solve);

    auto* ver = app.add_subcommand("verify", "Recompute residuals R1(P), R2(P, K) for a result bundle");
    ver->add_option("bundle", bundle, "Bundle directory or result.json")->required();
    ver->add_option("--threshold", threshold, "Flag residual entries above this magnitude");

    auto* orc = app.add_subcommand("oracle", "Integrate the forward Riccati flow to the maximal solution");
    orc->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    orc->add_option("--P0", p0, "Initial condition: zero | identity | <scale> (scale * I)");
    orc->add_option("--t-end", t_end, "Flow horizon");
    orc->add_option("--rtol", rtol, "Residual tolerance");
    oracle_ov.attach(orc);

    auto* swp = app.add_subcommand("sweep", "Run independent experiments over a list of seeds");
    swp->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    swp->add_option("--seeds", seeds, "Comma list or lo:hi range");
    swp->add_option("-j,--jobs", jobs, "Concurrent experiments (0 = all cores)");
    sweep_ov.attach(swp);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : code(ExitCode::config_error);
    }

    try {
        if (*solve) return cmd_solve(config, solve_ov);
        if (*ver) return cmd_verify(bundle, threshold);
        if (*orc) return cmd_oracle(config, p0, t_end, rtol, oracle_ov);
        if (*swp) return cmd_sweep(config, seeds, jobs, sweep_ov);
    } catch (const slqvi::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return code(ExitCode::config_error);
    } catch (const slqvi::DimensionError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return code(ExitCode::config_error);
    } catch (const slqvi::RankError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return code(ExitCode::rank_failure);
    } catch (const slqvi::ConvergenceError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return code(ExitCode::not_converged);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return code(ExitCode::failure);
    }
    return code(ExitCode::failure);
}
