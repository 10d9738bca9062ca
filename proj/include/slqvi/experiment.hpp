#pragma once

// Experiment configuration, the end-to-end pipeline and result bundles.
//
// Config file (JSON):
//
//   {
//     "schema_version": 1,
//     "name": "paper_example",
//     "algorithm": "model_free" | "model_based",
//     "model": { "A": [[..]], "B": [[..]], "C": [[..]], "D": [[..]],
//                "Q": [[..]], "R": [[..]], "x0": [..] }      // or "model_file": "path.json"
//     "sim":        { "dt", "paths", "seed", "scheme": "euler_maruyama", "workers" },
//     "collection": { "intervals", "interval_length", "amplitude", "rank_tol", "data_file" },
//     "vi":         { "P0": [[..]] | "identity", "a", "b", "gamma", "trust_radius0",
//                     "trust_growth", "stop_tol", "max_iter", "snapshot_every" },
//     "output":     { "directory", "formats": ["json", "csv"], "ensemble_csv": false },
//     "verify":     { "threshold" }
//   }
//
// Missing keys take the values in defaults.hpp. A 1x1 matrix may be written as
// a bare number. Relative file paths resolve against the config file.

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "slqvi/data_collect.hpp"
#include "slqvi/defaults.hpp"
#include "slqvi/errors.hpp"
#include "slqvi/model.hpp"
#include "slqvi/riccati.hpp"
#include "slqvi/simulator.hpp"
#include "slqvi/vi_engine.hpp"

namespace slqvi {

inline constexpr int kSchemaVersion = 1;

enum class ExitCode : int {
    ok = 0,
    failure = 1,
    config_error = 2,
    rank_failure = 3,
    not_converged = 4,
    io_error = 5,
    verify_flagged = 6,
};

enum class Algorithm { model_based, model_free };

inline std::string to_string(Algorithm a) { return a == Algorithm::model_based ? "model_based" : "model_free"; }

namespace json_io {

using nlohmann::json;

inline Eigen::MatrixXd matrix(const json& j, const std::string& what) {
    if (j.is_number()) return Eigen::MatrixXd::Constant(1, 1, j.get<double>());
    if (!j.is_array() || j.empty()) throw ConfigError(what + ": expected a non-empty nested numeric array");
    const auto rows = static_cast<Eigen::Index>(j.size());
    Eigen::Index cols = -1;
    Eigen::MatrixXd m;
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || row.empty()) throw ConfigError(what + ": row " + std::to_string(r) + " is not a numeric array");
        if (cols < 0) {
            cols = static_cast<Eigen::Index>(row.size());
            m.resize(rows, cols);
        }
        if (static_cast<Eigen::Index>(row.size()) != cols) throw ConfigError(what + ": ragged rows");
        for (Eigen::Index c = 0; c < cols; ++c) {
            const json& v = row[static_cast<std::size_t>(c)];
            if (!v.is_number()) throw ConfigError(what + ": non-numeric entry");
            m(r, c) = v.get<double>();
        }
    }
    return m;
}

inline Eigen::VectorXd vector(const json& j, const std::string& what) {
    if (j.is_number()) return Eigen::VectorXd::Constant(1, j.get<double>());
    if (!j.is_array() || j.empty()) throw ConfigError(what + ": expected a numeric array");
    Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number()) throw ConfigError(what + ": non-numeric entry");
        v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
    }
    return v;
}

inline json to_json(const Eigen::MatrixXd& m) {
    json out = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        out.push_back(row);
    }
    return out;
}

inline json to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

template <typename T>
T get_or(const json& obj, const char* key, T fallback) {
    if (!obj.contains(key) || obj.at(key).is_null()) return fallback;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config key '") + key + "': " + e.what());
    }
}

inline const json& section(const json& root, const char* key) {
    static const json empty = json::object();
    if (!root.contains(key)) return empty;
    if (!root.at(key).is_object()) throw ConfigError(std::string("config section '") + key + "' must be an object");
    return root.at(key);
}

}  // namespace json_io

inline SlqModel model_from_json(const nlohmann::json& j) {
    using json_io::matrix;
    for (const char* key : {"A", "B", "C", "D", "Q", "R", "x0"}) {
        if (!j.contains(key)) throw ConfigError(std::string("model: missing key '") + key + "'");
    }
    return SlqModel(matrix(j.at("A"), "A"), matrix(j.at("B"), "B"), matrix(j.at("C"), "C"), matrix(j.at("D"), "D"),
                    SymMatrix(matrix(j.at("Q"), "Q")), SymMatrix(matrix(j.at("R"), "R")),
                    json_io::vector(j.at("x0"), "x0"));
}

inline nlohmann::json model_to_json(const SlqModel& m) {
    using json_io::to_json;
    return {{"A", to_json(m.A())}, {"B", to_json(m.B())}, {"C", to_json(m.C())}, {"D", to_json(m.D())},
            {"Q", to_json(m.Q().matrix())}, {"R", to_json(m.R().matrix())}, {"x0", to_json(m.x0())}};
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("'" + path.string() + "': " + e.what());
    }
}

struct CollectionConfig {
    std::size_t intervals = defaults::intervals;
    double interval_length = defaults::interval_length;
    double amplitude = defaults::exploration_amplitude;
    double rank_tol = defaults::rank_tol;
    std::optional<std::filesystem::path> data_file;  // pre-recorded data matrices
};

struct OutputConfig {
    std::filesystem::path directory = "slqvi_out";
    bool json = true;
    bool csv = true;
    bool ensemble_csv = false;
};

struct ExperimentConfig {
    std::string name;
    Algorithm algorithm;
    SlqModel model;
    SimConfig sim;
    CollectionConfig collection;
    ViConfig vi;
    OutputConfig output;
    double verify_threshold = defaults::verify_threshold;

    // Fully resolved form; parse_experiment(to_json()) reproduces this config.
    nlohmann::json to_json() const {
        using json_io::to_json;
        nlohmann::json coll = {{"intervals", collection.intervals},
                               {"interval_length", collection.interval_length},
                               {"amplitude", collection.amplitude},
                               {"rank_tol", collection.rank_tol}};
        if (collection.data_file) coll["data_file"] = collection.data_file->string();
        nlohmann::json formats = nlohmann::json::array();
        if (output.json) formats.push_back("json");
        if (output.csv) formats.push_back("csv");
        return {{"schema_version", kSchemaVersion},
                {"name", name},
                {"algorithm", slqvi::to_string(algorithm)},
                {"model", model_to_json(model)},
                {"sim",
                 {{"dt", sim.dt},
                  {"paths", sim.paths},
                  {"seed", sim.seed},
                  {"scheme", "euler_maruyama"},
                  {"workers", sim.workers}}},
                {"collection", coll},
                {"vi",
                 {{"P0", to_json(vi.P0.matrix())},
                  {"a", vi.schedule.a},
                  {"b", vi.schedule.b},
                  {"gamma", vi.schedule.gamma},
                  {"trust_radius0", vi.trust.r0},
                  {"trust_growth", vi.trust.growth},
                  {"stop_tol", vi.stop_tol},
                  {"max_iter", vi.max_iter},
                  {"snapshot_every", vi.snapshot_every}}},
                {"output",
                 {{"directory", output.directory.string()}, {"formats", formats}, {"ensemble_csv", output.ensemble_csv}}},
                {"verify", {{"threshold", verify_threshold}}}};
    }
};

inline ExperimentConfig parse_experiment(const nlohmann::json& root,
                                         const std::filesystem::path& base_dir = std::filesystem::current_path()) {
    using json_io::get_or;
    using json_io::section;
    if (!root.is_object()) throw ConfigError("config: top level must be an object");
    const int version = get_or<int>(root, "schema_version", -1);
    if (version != kSchemaVersion) {
        throw ConfigError("config: schema_version must be " + std::to_string(kSchemaVersion));
    }
    auto resolve = [&](const std::string& p) {
        const std::filesystem::path path(p);
        return path.is_absolute() ? path : base_dir / path;
    };

    const std::string algo = get_or<std::string>(root, "algorithm", "model_based");
    Algorithm algorithm;
    if (algo == "model_based") algorithm = Algorithm::model_based;
    else if (algo == "model_free") algorithm = Algorithm::model_free;
    else throw ConfigError("config: algorithm must be 'model_based' or 'model_free', got '" + algo + "'");

    std::optional<SlqModel> model;
    if (root.contains("model")) model = model_from_json(root.at("model"));
    else if (root.contains("model_file")) model = model_from_json(read_json_file(resolve(root.at("model_file").get<std::string>())));
    else throw ConfigError("config: needs 'model' or 'model_file'");

    const auto& s = section(root, "sim");
    SimConfig sim;
    sim.dt = get_or<double>(s, "dt", defaults::dt);
    sim.paths = get_or<std::size_t>(s, "paths", defaults::paths);
    sim.seed = get_or<std::uint64_t>(s, "seed", defaults::seed);
    sim.workers = get_or<unsigned>(s, "workers", 1u);
    if (get_or<std::string>(s, "scheme", "euler_maruyama") != "euler_maruyama") {
        throw ConfigError("config: sim.scheme must be 'euler_maruyama'");
    }
    sim.validate();

    const auto& c = section(root, "collection");
    CollectionConfig coll;
    coll.intervals = get_or<std::size_t>(c, "intervals", defaults::intervals);
    coll.interval_length = get_or<double>(c, "interval_length", defaults::interval_length);
    coll.amplitude = get_or<double>(c, "amplitude", defaults::exploration_amplitude);
    coll.rank_tol = get_or<double>(c, "rank_tol", defaults::rank_tol);
    if (c.contains("data_file")) coll.data_file = resolve(c.at("data_file").get<std::string>());
    if (!(coll.interval_length > 0.0)) throw ConfigError("config: collection.interval_length must be positive");

    const auto& v = section(root, "vi");
    const Eigen::Index n = model->n();
    SymMatrix P0 = SymMatrix::identity(n);
    if (v.contains("P0") && !(v.at("P0").is_string() && v.at("P0").get<std::string>() == "identity")) {
        P0 = SymMatrix(json_io::matrix(v.at("P0"), "vi.P0"));
    }
    ViConfig vi{P0};
    vi.schedule.a = get_or<double>(v, "a", defaults::step_a);
    vi.schedule.b = get_or<double>(v, "b", defaults::step_b);
    vi.schedule.gamma = get_or<double>(v, "gamma", defaults::step_gamma);
    vi.trust.r0 = get_or<double>(v, "trust_radius0", defaults::trust_radius_factor * (1.0 + model->Q().frobenius_norm()));
    vi.trust.growth = get_or<double>(v, "trust_growth", defaults::trust_growth);
    vi.stop_tol = get_or<double>(v, "stop_tol", defaults::stop_tol);
    vi.max_iter = get_or<std::size_t>(v, "max_iter", defaults::max_iter);
    vi.snapshot_every = get_or<std::size_t>(v, "snapshot_every", 0);
    vi.validate(n);

    const auto& o = section(root, "output");
    OutputConfig out;
    out.directory = get_or<std::string>(o, "directory", out.directory.string());
    if (o.contains("formats")) {
        out.json = out.csv = false;
        for (const auto& f : o.at("formats")) {
            const auto fs = f.get<std::string>();
            if (fs == "json") out.json = true;
            else if (fs == "csv") out.csv = true;
            else throw ConfigError("config: unknown output format '" + fs + "'");
        }
    }
    out.ensemble_csv = get_or<bool>(o, "ensemble_csv", false);

    const double threshold = get_or<double>(section(root, "verify"), "threshold", defaults::verify_threshold);

    return ExperimentConfig{get_or<std::string>(root, "name", "experiment"), algorithm, *model, sim, coll, vi, out,
                            threshold};
}

inline ExperimentConfig load_experiment(const std::filesystem::path& path, const nlohmann::json& overrides = {}) {
    nlohmann::json root = read_json_file(path);
    if (!overrides.is_null()) root.merge_patch(overrides);
    try {
        return parse_experiment(root, path.parent_path().empty() ? std::filesystem::current_path() : path.parent_path());
    } catch (const ConfigError&) {
        throw;
    } catch (const DimensionError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(e.what());
    }
}

struct DataSummary {
    bool rank_ok = false;
    double sigma_min = 0.0;
    double sigma_max = 0.0;
};

struct ExperimentOutcome {
    ExitCode code = ExitCode::failure;
    std::string message;
    std::optional<ViResult> vi;
    std::optional<DataSummary> data;
    std::optional<SymMatrix> R1;
    std::optional<SymMatrix> R2;
    nlohmann::json bundle;  // contents of result.json
};

inline DataMatrices acquire_data(const ExperimentConfig& cfg, std::optional<TrajectoryEnsemble>* keep = nullptr) {
    if (cfg.collection.data_file) {
        std::ifstream in(*cfg.collection.data_file);
        if (!in) throw ConfigError("cannot open data file '" + cfg.collection.data_file->string() + "'");
        return read_data_matrices(in, cfg.collection.rank_tol);
    }
    const TimeGrid grid = TimeGrid::uniform(cfg.collection.intervals, cfg.collection.interval_length, cfg.sim.dt);
    const ExplorationInput input = default_exploration(cfg.model, cfg.collection.intervals, cfg.collection.amplitude);
    if (keep) {
        *keep = simulate_open_loop(cfg.model, input, grid, cfg.sim);
        return collect(**keep, cfg.collection.rank_tol);
    }
    return collect_online(cfg.model, input, grid, cfg.sim, cfg.collection.rank_tol);
}

inline nlohmann::json residual_json(const std::optional<SymMatrix>& r) {
    if (!r) return nullptr;
    return json_io::to_json(r->matrix());
}

// Runs the configured algorithm; does not touch the filesystem except to read
// a data file. The returned bundle is what write_bundle persists.
inline ExperimentOutcome run_experiment(const ExperimentConfig& cfg, std::optional<TrajectoryEnsemble>* ensemble = nullptr) {
    ExperimentOutcome out;
    if (cfg.algorithm == Algorithm::model_based) {
        out.vi = run(ModelBasedMap(cfg.model), cfg.vi);
    } else {
        const DataMatrices data = acquire_data(cfg, ensemble);
        out.data = DataSummary{data.rank_ok(), data.min_singular_value(), data.max_singular_value()};
        if (!data.rank_ok()) {
            out.code = ExitCode::rank_failure;
            out.message = data.rank_message();
            return out;
        }
        out.vi = run(ModelFreeMap(data, cfg.model.Q(), cfg.model.R()), cfg.vi);
    }
    const ViResult& r = *out.vi;
    try {
        out.R1 = riccati_map(cfg.model, r.P_final);
    } catch (const SingularityError&) {
    }
    if (r.K_final) out.R2 = lyapunov_residual(cfg.model, r.P_final, *r.K_final);

    nlohmann::json b;
    b["schema_version"] = kSchemaVersion;
    b["name"] = cfg.name;
    b["algorithm"] = to_string(cfg.algorithm);
    b["converged"] = r.converged;
    b["iterations"] = r.iterations;
    b["resets"] = r.resets;
    b["trust_index"] = r.q;
    b["P_final"] = json_io::to_json(r.P_final.matrix());
    b["K_final"] = r.K_final ? json_io::to_json(r.K_final->K) : nlohmann::json(nullptr);
    b["residuals"] = {{"R1", residual_json(out.R1)},
                      {"R2", residual_json(out.R2)},
                      {"R1_fro", out.R1 ? nlohmann::json(out.R1->frobenius_norm()) : nlohmann::json(nullptr)},
                      {"R2_fro", out.R2 ? nlohmann::json(out.R2->frobenius_norm()) : nlohmann::json(nullptr)}};
    b["final_step_residual"] = r.history.empty() ? 0.0 : r.history.back().residual;
    b["seed"] = cfg.sim.seed;
    if (out.data) {
        b["data"] = {{"rank_ok", out.data->rank_ok},
                     {"sigma_min", out.data->sigma_min},
                     {"sigma_max", out.data->sigma_max}};
    }
    b["config"] = cfg.to_json();
    out.bundle = std::move(b);
    out.code = r.converged ? ExitCode::ok : ExitCode::not_converged;
    out.message = r.converged ? "converged" : "max_iter reached without meeting the stop rule";
    return out;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw Error("cannot write '" + path.string() + "'");
    f << text;
}

inline void write_bundle(const ExperimentConfig& cfg, const ExperimentOutcome& outcome,
                         const std::optional<TrajectoryEnsemble>& ensemble = std::nullopt) {
    std::filesystem::create_directories(cfg.output.directory);
    if (cfg.output.json && !outcome.bundle.is_null()) {
        write_text(cfg.output.directory / "result.json", outcome.bundle.dump(2) + "\n");
    }
    if (cfg.output.csv && outcome.vi) {
        std::ostringstream h;
        write_history_csv(h, outcome.vi->history);
        write_text(cfg.output.directory / "history.csv", h.str());
        if (!outcome.vi->snapshots.empty()) {
            std::ostringstream s;
            s.precision(17);
            s << "k";
            const Eigen::Index len = sym_size(outcome.vi->P_final.dim());
            for (Eigen::Index i = 0; i < len; ++i) s << ",p" << i;
            s << '\n';
            for (const auto& snap : outcome.vi->snapshots) {
                s << snap.k;
                const Eigen::VectorXd v = vecs(snap.P).data();
                for (Eigen::Index i = 0; i < v.size(); ++i) s << ',' << v(i);
                s << '\n';
            }
            write_text(cfg.output.directory / "iterates.csv", s.str());
        }
    }
    if (cfg.output.ensemble_csv && ensemble) {
        std::ostringstream e;
        write_ensemble_csv(e, *ensemble);
        write_text(cfg.output.directory / "ensemble.csv", e.str());
    }
}

struct VerifyReport {
    SymMatrix P;
    std::optional<FeedbackGain> K;
    std::optional<SymMatrix> R1;
    std::optional<SymMatrix> R2;
    double threshold;
    std::vector<std::string> flagged;  // entries whose magnitude exceeds threshold

    bool ok() const { return flagged.empty() && R1.has_value(); }
};

// Recomputes the model-based residuals at the bundle's P_final / K_final.
inline VerifyReport verify(const SlqModel& model, const nlohmann::json& bundle, double threshold) {
    if (!bundle.contains("P_final")) throw ConfigError("result bundle has no P_final");
    VerifyReport rep{SymMatrix(json_io::matrix(bundle.at("P_final"), "P_final")), std::nullopt, std::nullopt,
                     std::nullopt, threshold, {}};
    if (rep.P.dim() != model.n()) throw DimensionError("verify: P_final does not match the model dimension");
    if (bundle.contains("K_final") && !bundle.at("K_final").is_null()) {
        rep.K = FeedbackGain{json_io::matrix(bundle.at("K_final"), "K_final")};
        check_gain(model, *rep.K);
    }
    try {
        rep.R1 = riccati_map(model, rep.P);
    } catch (const SingularityError& e) {
        rep.flagged.push_back(std::string("R1 undefined: ") + e.what());
    }
    if (rep.K) rep.R2 = lyapunov_residual(model, rep.P, *rep.K);
    auto scan = [&](const std::optional<SymMatrix>& r, const char* label) {
        if (!r) return;
        for (Eigen::Index i = 0; i < r->dim(); ++i)
            for (Eigen::Index j = i; j < r->dim(); ++j)
                if (std::abs((*r)(i, j)) > threshold) {
                    std::ostringstream os;
                    os << label << "(" << i << "," << j << ") = " << (*r)(i, j);
                    rep.flagged.push_back(os.str());
                }
    };
    scan(rep.R1, "R1");
    scan(rep.R2, "R2");
    return rep;
}

inline VerifyReport verify_bundle(const std::filesystem::path& bundle_dir, std::optional<double> threshold = std::nullopt) {
    const auto path = std::filesystem::is_directory(bundle_dir) ? bundle_dir / "result.json" : bundle_dir;
    if (!std::filesystem::exists(path)) throw ConfigError("result bundle not found at '" + path.string() + "'");
    const nlohmann::json bundle = read_json_file(path);
    if (!bundle.contains("config") || !bundle.at("config").contains("model")) {
        throw ConfigError("result bundle carries no model; cannot recompute residuals");
    }
    const SlqModel model = model_from_json(bundle.at("config").at("model"));
    double thr = defaults::verify_threshold;
    if (threshold) thr = *threshold;
    else if (bundle.at("config").contains("verify")) thr = json_io::get_or<double>(bundle.at("config").at("verify"), "threshold", thr);
    return verify(model, bundle, thr);
}

inline std::string format_matrix_abs(const Eigen::MatrixXd& m) {
    std::ostringstream os;
    os.setf(std::ios::scientific);
    os.precision(4);
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        os << "  [";
        for (Eigen::Index c = 0; c < m.cols(); ++c) os << (c ? ", " : "") << std::abs(m(r, c));
        os << "]\n";
    }
    return os.str();
}

}  // namespace slqvi
