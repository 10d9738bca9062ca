#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "slqvi/experiment.hpp"
#include "support/exact_data.hpp"
#include "support/paper_model.hpp"

namespace {

using namespace slqvi;
namespace st = slqvi::testing;
namespace fs = std::filesystem;
using nlohmann::json;

class Scratch : public ::testing::Test {
protected:
    void SetUp() override {
        const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
        dir_ = fs::temp_directory_path() / (std::string("slqvi_") + info->test_suite_name() + "_" + info->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    fs::path write_json(const std::string& name, const json& j) const {
        const fs::path p = dir_ / name;
        std::ofstream(p) << j.dump(2);
        return p;
    }

    static std::string slurp(const fs::path& p) {
        std::ifstream in(p, std::ios::binary);
        std::ostringstream os;
        os << in.rdbuf();
        return os.str();
    }

    static int cli(const std::string& args) {
        const std::string cmd = std::string(SLQVI_CLI) + " " + args + " > /dev/null 2>&1";
        const int status = std::system(cmd.c_str());
        return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    }

    fs::path dir_;
};

json scalar_config(const fs::path& out) {
    return {{"schema_version", 1},
            {"name", "scalar"},
            {"algorithm", "model_based"},
            {"model", {{"A", -1}, {"B", 0}, {"C", 0}, {"D", 0}, {"Q", 1}, {"R", 1}, {"x0", {1.0}}}},
            {"vi", {{"P0", {{0.1}}}, {"a", 0.5}, {"stop_tol", 1e-8}}},
            {"output", {{"directory", out.string()}}}};
}

json paper_config(const fs::path& out, const std::string& algorithm) {
    return {{"schema_version", 1},
            {"algorithm", algorithm},
            {"model", model_to_json(st::paper_model())},
            {"output", {{"directory", out.string()}}}};
}

TEST(Parse, DefaultsAreFilledIn) {
    const ExperimentConfig c = parse_experiment(paper_config("out", "model_free"));
    EXPECT_EQ(c.algorithm, Algorithm::model_free);
    EXPECT_EQ(c.sim.dt, 1e-3);
    EXPECT_EQ(c.sim.paths, 1000u);
    EXPECT_EQ(c.sim.seed, 0u);
    EXPECT_EQ(c.collection.intervals, 20u);
    EXPECT_EQ(c.collection.interval_length, 0.1);
    EXPECT_EQ(c.vi.schedule.a, 1.0);
    EXPECT_EQ(c.vi.schedule.b, 0.0);
    EXPECT_EQ(c.vi.schedule.gamma, 0.7);
    EXPECT_EQ(c.vi.stop_tol, 1e-5);
    EXPECT_EQ(c.vi.trust.growth, 2.0);
    EXPECT_DOUBLE_EQ(c.vi.trust.r0, 10.0 * (1.0 + st::paper_model().Q().frobenius_norm()));
    EXPECT_EQ(c.vi.P0.matrix(), Eigen::MatrixXd::Identity(2, 2));
}

TEST(Parse, ScalarsAcceptedAsOneByOne) {
    const ExperimentConfig c = parse_experiment(scalar_config("out"));
    EXPECT_EQ(c.model.n(), 1);
    EXPECT_EQ(c.model.A()(0, 0), -1.0);
}

TEST(Parse, Rejections) {
    json j = paper_config("out", "model_free");
    j["schema_version"] = 2;
    EXPECT_THROW(parse_experiment(j), ConfigError);
    j = paper_config("out", "policy_iteration");
    EXPECT_THROW(parse_experiment(j), ConfigError);
    j = paper_config("out", "model_free");
    j["model"].erase("Q");
    EXPECT_THROW(parse_experiment(j), ConfigError);
    j = paper_config("out", "model_free");
    j["vi"]["gamma"] = 0.4;
    EXPECT_THROW(parse_experiment(j), ConfigError);
    j = paper_config("out", "model_free");
    j["sim"]["dt"] = -1.0;
    EXPECT_THROW(parse_experiment(j), ConfigError);
}

TEST(Parse, EchoRoundTrips) {
    const ExperimentConfig a = parse_experiment(scalar_config("out"));
    const ExperimentConfig b = parse_experiment(a.to_json());
    EXPECT_EQ(a.to_json(), b.to_json());
}

TEST_F(Scratch, ModelBasedExperimentOutcome) {
    const ExperimentConfig cfg = parse_experiment(scalar_config(dir_ / "out"));
    const ExperimentOutcome o = run_experiment(cfg);
    EXPECT_EQ(o.code, ExitCode::ok);
    EXPECT_NEAR(o.bundle["P_final"][0][0].get<double>(), 0.5, 1e-8);
    EXPECT_EQ(o.bundle["config"], cfg.to_json());
    write_bundle(cfg, o);
    EXPECT_TRUE(fs::exists(dir_ / "out" / "result.json"));
    EXPECT_TRUE(fs::exists(dir_ / "out" / "history.csv"));
}

TEST_F(Scratch, RankFailureFromDataFile) {
    std::ofstream(dir_ / "data.txt") << "slqvi-data 1\nn 1 m 1 l 1\n0,0,0,0\n";
    json j = scalar_config(dir_ / "out");
    j["algorithm"] = "model_free";
    j["collection"]["data_file"] = (dir_ / "data.txt").string();
    const ExperimentOutcome o = run_experiment(parse_experiment(j));
    EXPECT_EQ(o.code, ExitCode::rank_failure);
    EXPECT_FALSE(o.vi.has_value());
}

TEST_F(Scratch, DataFileDrivesModelFreeRun) {
    const SlqModel model = st::paper_model();
    {
        std::ofstream f(dir_ / "data.txt");
        write_data_matrices(f, st::exact_data(model, 20, 3));
    }
    json j = paper_config(dir_ / "out", "model_free");
    j["collection"]["data_file"] = "data.txt";
    const ExperimentOutcome o = run_experiment(parse_experiment(j, dir_));
    ASSERT_EQ(o.code, ExitCode::ok);
    EXPECT_LT((o.vi->P_final.matrix() - st::reference_P_star().matrix()).norm(), 1e-4);
}

TEST_F(Scratch, VerifyAtZeroGivesQ) {
    json bundle = {{"P_final", {{0.0, 0.0}, {0.0, 0.0}}}, {"K_final", nullptr}};
    const VerifyReport rep = verify(st::paper_model(), bundle, 1e-2);
    ASSERT_TRUE(rep.R1.has_value());
    EXPECT_EQ(rep.R1->matrix(), st::paper_model().Q().matrix());
    EXPECT_FALSE(rep.ok());
}

TEST_F(Scratch, CliMalformedConfigWritesNothing) {
    json j = scalar_config(dir_ / "out");
    j["model"]["A"] = {{1.0, 2.0}};
    const fs::path cfg = write_json("bad.json", j);
    EXPECT_EQ(cli("solve " + cfg.string()), 2);
    EXPECT_FALSE(fs::exists(dir_ / "out"));

    std::ofstream(dir_ / "garbage.json") << "{ not json";
    EXPECT_EQ(cli("solve " + (dir_ / "garbage.json").string()), 2);
    EXPECT_EQ(cli("solve " + (dir_ / "missing.json").string()), 2);
    EXPECT_FALSE(fs::exists(dir_ / "out"));
}

TEST_F(Scratch, CliBundlesAreReproducible) {
    json j = paper_config(dir_ / "out", "model_free");
    j["sim"] = {{"paths", 40}, {"seed", 5}, {"dt", 1e-2}};
    j["vi"] = {{"max_iter", 300}};
    const fs::path cfg = write_json("mf.json", j);
    cli("solve " + cfg.string());
    const std::string first = slurp(dir_ / "out" / "result.json");
    const std::string first_hist = slurp(dir_ / "out" / "history.csv");
    ASSERT_FALSE(first.empty());
    fs::remove_all(dir_ / "out");
    cli("solve " + cfg.string() + " --workers 3");
    const std::string second = slurp(dir_ / "out" / "result.json");
    // worker count is echoed in the config; everything else must match
    json a = json::parse(first), b = json::parse(second);
    a["config"]["sim"].erase("workers");
    b["config"]["sim"].erase("workers");
    EXPECT_EQ(a, b);
    EXPECT_EQ(first_hist, slurp(dir_ / "out" / "history.csv"));
}

TEST_F(Scratch, CliConfigEchoReproducesRun) {
    const fs::path cfg = write_json("s.json", scalar_config(dir_ / "out"));
    ASSERT_EQ(cli("solve " + cfg.string()), 0);
    const json first = read_json_file(dir_ / "out" / "result.json");
    const fs::path echo = write_json("echo.json", first["config"]);
    fs::remove_all(dir_ / "out");
    ASSERT_EQ(cli("solve " + echo.string()), 0);
    EXPECT_EQ(read_json_file(dir_ / "out" / "result.json"), first);
}

TEST_F(Scratch, CliOverridesApply) {
    const fs::path cfg = write_json("s.json", scalar_config(dir_ / "out"));
    EXPECT_EQ(cli("solve " + cfg.string() + " --max-iter 1"), 4);
    const json r = read_json_file(dir_ / "out" / "result.json");
    EXPECT_EQ(r["iterations"], 1);
    EXPECT_EQ(r["converged"], false);
    EXPECT_EQ(cli("solve " + cfg.string() + " -o " + (dir_ / "other").string()), 0);
    EXPECT_TRUE(fs::exists(dir_ / "other" / "result.json"));
}

TEST_F(Scratch, CliOracleBundleVerifies) {
    const fs::path cfg = write_json("p.json", paper_config(dir_ / "oracle", "model_based"));
    ASSERT_EQ(cli("oracle " + cfg.string()), 0);
    const VerifyReport rep = verify_bundle(dir_ / "oracle", 1e-9);
    EXPECT_TRUE(rep.ok());
    EXPECT_LT(rep.R1->matrix().cwiseAbs().maxCoeff(), 1e-9);
    EXPECT_EQ(cli("verify " + (dir_ / "oracle").string() + " --threshold 1e-9"), 0);
}

TEST_F(Scratch, CliVerifyFlagsLooseSolution) {
    const fs::path cfg = write_json("p.json", paper_config(dir_ / "out", "model_based"));
    ASSERT_EQ(cli("solve " + cfg.string() + " --max-iter 5"), 4);
    EXPECT_EQ(cli("verify " + (dir_ / "out").string() + " --threshold 1e-6"), 6);
    EXPECT_EQ(cli("verify " + (dir_ / "nowhere").string()), 2);
}

TEST_F(Scratch, CliSweepWritesSummary) {
    const fs::path cfg = write_json("s.json", scalar_config(dir_ / "sweep"));
    ASSERT_EQ(cli("sweep " + cfg.string() + " --seeds 1:3"), 0);
    EXPECT_TRUE(fs::exists(dir_ / "sweep" / "seed_2" / "result.json"));
    std::istringstream csv(slurp(dir_ / "sweep" / "sweep.csv"));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "seed,exit_code,converged,iterations,resets,error_vs_oracle");
    int rows = 0;
    while (std::getline(csv, line)) {
        ++rows;
        const double err = std::stod(line.substr(line.rfind(',') + 1));
        EXPECT_LT(err, 1e-7);
    }
    EXPECT_EQ(rows, 3);
}

}  // namespace
