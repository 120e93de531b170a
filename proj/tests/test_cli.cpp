#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <gtest/gtest.h>

#include "agedist/cli.hpp"

using namespace agedist;
using namespace agedist::cli;

namespace {

std::string write_model(const std::string& name, const Model& m) {
    const auto path = (std::filesystem::temp_directory_path() / name).string();
    std::ofstream(path) << m.to_json().dump();
    return path;
}

std::vector<std::vector<std::string>> read_csv(const std::string& text) {
    std::vector<std::vector<std::string>> rows;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) rows.push_back(split(line, ','));
    return rows;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct Outcome {
    int code;
    std::string out, err;
};

template <class Cmd>
Outcome invoke(Cmd cmd, const ExperimentSpec& spec) {
    std::ostringstream out, err;
    const int code = run(cmd, spec, out, err);
    return {code, out.str(), err.str()};
}

}  // namespace

TEST(Cli, TradeoffWritesConsistentFiles) {
    ExperimentSpec spec;
    spec.model_path = write_model("cli_reference.json", settings::reference());
    spec.eta_grid = "max:k17:20";
    const auto dir = std::filesystem::temp_directory_path();
    spec.out = (dir / "cli_points.csv").string();
    spec.converse_out = (dir / "cli_converse.csv").string();
    spec.policy_out = (dir / "cli_policy.json").string();
    const Outcome r = invoke(cmd_tradeoff, spec);
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NE(r.err.find("max K 17"), std::string::npos);
    EXPECT_NE(r.err.find("converse exact for delta_e >="), std::string::npos);
    const auto points = read_csv(slurp(spec.out));
    const auto lines = read_csv(slurp(spec.converse_out));
    ASSERT_EQ(points.size(), 21u);
    ASSERT_EQ(lines.size(), 21u);
    EXPECT_EQ(points[0][0], "eta");
    EXPECT_EQ(lines[0], (std::vector<std::string>{"eta", "intercept"}));
    for (std::size_t i = 1; i < points.size(); ++i) {
        const double eta = std::stod(points[i][0]), de = std::stod(points[i][2]), d = std::stod(points[i][3]);
        EXPECT_EQ(points[i][0], lines[i][0]);
        EXPECT_NEAR(d + eta * de, std::stod(lines[i][1]), 1e-9);
    }
    EXPECT_EQ(load_policy(spec.policy_out, settings::reference()).K, 17u);
}

TEST(Cli, TradeoffSingleWeightAndUsageErrors) {
    ExperimentSpec spec;
    spec.model_path = write_model("cli_reference.json", settings::reference());
    spec.eta_list = "3.8";
    Outcome r = invoke(cmd_tradeoff, spec);
    ASSERT_EQ(r.code, kOk);
    auto rows = read_csv(r.out);
    ASSERT_EQ(rows.size(), 2u);
    EXPECT_EQ(std::stod(rows[1][2]), 0.0);

    spec.eta_list.clear();
    EXPECT_EQ(invoke(cmd_tradeoff, spec).code, kUsage);
    spec.eta_list = "1,2";
    EXPECT_EQ(invoke(cmd_tradeoff, spec).code, kUsage);
    spec.eta_list = "1";
    spec.eta_grid = "max:0.5:3";
    EXPECT_EQ(invoke(cmd_tradeoff, spec).code, kUsage);
    spec.eta_list.clear();
    spec.eta_grid = "max:0.5";
    EXPECT_EQ(invoke(cmd_tradeoff, spec).code, kUsage);
    spec.model_path = "/nonexistent/model.json";
    EXPECT_EQ(invoke(cmd_tradeoff, spec).code, kUsage);
}

TEST(Cli, TradeoffWarnsOnOversizedWeights) {
    ExperimentSpec spec;
    spec.model_path = write_model("cli_reference.json", settings::reference());
    spec.eta_list = "1,0.1";
    const Outcome r = invoke(cmd_tradeoff, spec);
    EXPECT_EQ(r.code, kOk);
    EXPECT_NE(r.err.find("warning: skipped eta=0.1"), std::string::npos);
}

TEST(Cli, StrategiesReportMinimumDistortion) {
    ExperimentSpec spec;
    spec.k_range = "1..1";
    for (const auto& [m, dmin] : {std::pair{settings::reference(), 2.7}, std::pair{settings::sparse(), 0.7}}) {
        spec.model_path = write_model("cli_strat.json", m);
        const Outcome r = invoke(cmd_strategies, spec);
        ASSERT_EQ(r.code, kOk) << r.err;
        const auto rows = read_csv(r.out);
        ASSERT_EQ(rows.size(), 5u);  // header, S1, S2, S3, dmin
        EXPECT_EQ(rows[1][0], "S1");
        EXPECT_EQ(rows[3][0], "S3");
        EXPECT_EQ(rows[4][0], "dmin");
        EXPECT_NEAR(std::stod(rows[4][3]), dmin, 1e-12);
    }
    spec.model_path = write_model("cli_three.json", Model(ImportanceDist({1, 2, 3}, {0.2, 0.3, 0.5}), InterspeakDist::geometric(0.5)));
    EXPECT_EQ(invoke(cmd_strategies, spec).code, kUsage);
}

TEST(Cli, BufferIgnorantCurves) {
    ExperimentSpec spec;
    spec.model_path = write_model("cli_reference.json", settings::reference());
    spec.tau_range = "0..4";
    spec.horizon = 100'000;
    const Outcome r = invoke(cmd_bufferignorant, spec);
    ASSERT_EQ(r.code, kOk) << r.err;
    const auto rows = read_csv(r.out);
    ASSERT_EQ(rows.size(), 1u + 2u * 2u * 5u);
    std::set<std::string> curves;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        curves.insert(rows[i][0] + rows[i][1]);
        if (rows[i][2] == "0") {
            EXPECT_EQ(std::stod(rows[i][3]), 0.0);
        }
    }
    EXPECT_EQ(curves, (std::set<std::string>{"BI3", "BI6", "BIT3", "BIT6"}));
    spec.tau_range = "5..2";
    EXPECT_EQ(invoke(cmd_bufferignorant, spec).code, kUsage);
}

TEST(Cli, SimulateSourcesAndDeterminism) {
    const auto dir = std::filesystem::temp_directory_path();
    ExperimentSpec solve;
    solve.model_path = write_model("cli_reference.json", settings::reference());
    solve.eta_list = "1";
    solve.out = (dir / "cli_sim_points.csv").string();
    solve.policy_out = (dir / "cli_sim_policy.json").string();
    ASSERT_EQ(invoke(cmd_tradeoff, solve).code, kOk);

    ExperimentSpec spec;
    spec.model_path = solve.model_path;
    spec.horizon = 200'000;
    spec.seed = 5;
    spec.policy_in = solve.policy_out;
    const Outcome a = invoke(cmd_simulate, spec);
    const Outcome b = invoke(cmd_simulate, spec);
    ASSERT_EQ(a.code, kOk) << a.err;
    EXPECT_EQ(a.out, b.out);
    const auto direct = nlohmann::json::parse(a.out);
    spec.mode = "erasure";
    spec.seed = 6;
    const auto erasure = nlohmann::json::parse(invoke(cmd_simulate, spec).out);
    const double se = std::hypot(direct["se_delta"].get<double>(), erasure["se_delta"].get<double>());
    EXPECT_NEAR(direct["delta_e"].get<double>(), erasure["delta_e"].get<double>(), 4.0 * se);

    spec.mode = "direct";
    spec.policy_in.clear();
    EXPECT_EQ(invoke(cmd_simulate, spec).code, kUsage);  // no policy source
    spec.strategy = "S9";
    EXPECT_EQ(invoke(cmd_simulate, spec).code, kUsage);
    spec.strategy = "S2";
    spec.window = 4;
    EXPECT_EQ(invoke(cmd_simulate, spec).code, kOk);
    spec.strategy = "latest";
    EXPECT_EQ(nlohmann::json::parse(invoke(cmd_simulate, spec).out)["delta_e"].get<double>(), 0.0);
    spec.strategy.clear();
    spec.mode = "bits";
    EXPECT_EQ(invoke(cmd_simulate, spec).code, kUsage);  // needs --tau
    spec.tau = 3;
    spec.n_bits = "3";
    spec.tunstall = true;
    EXPECT_EQ(invoke(cmd_simulate, spec).code, kOk);
    spec.mode = "carrier-pigeon";
    EXPECT_EQ(invoke(cmd_simulate, spec).code, kUsage);

    ExperimentSpec other = spec;
    other.mode = "direct";
    other.tau.reset();
    other.model_path = write_model("cli_sparse.json", settings::sparse());
    other.policy_in = solve.policy_out;
    EXPECT_EQ(invoke(cmd_simulate, other).code, kUsage);  // policy solved for another model
}

TEST(Cli, VerifyConfigurationErrorRunsNothing) {
    ExperimentSpec spec;
    spec.model_path = "/nonexistent/model.json";
    const Outcome r = invoke(cmd_verify, spec);
    EXPECT_EQ(r.code, kUsage);
    EXPECT_TRUE(r.out.empty());
}

TEST(Cli, VerifyNegativeControl) {
    ExperimentSpec spec;
    spec.horizon = 50'000;
    spec.lambda_perturbation = 0.05;
    const Outcome r = invoke(cmd_verify, spec);
    EXPECT_EQ(r.code, kFailure);
    EXPECT_NE(r.out.find("FAIL  [ 8]"), std::string::npos);
    EXPECT_NE(r.out.find("PASS  [ 4]"), std::string::npos);
}

TEST(Cli, RangeParsing) {
    EXPECT_EQ(parse_range("1..20", "K"), (std::pair<std::size_t, std::size_t>{1, 20}));
    EXPECT_EQ(parse_range("3:4", "K"), (std::pair<std::size_t, std::size_t>{3, 4}));
    EXPECT_EQ(parse_range("7", "K"), (std::pair<std::size_t, std::size_t>{7, 7}));
    EXPECT_THROW(parse_range("4..1", "K"), UsageError);
    EXPECT_THROW(parse_range("a..b", "K"), UsageError);
    EXPECT_THROW(parse_size_list("", "N"), UsageError);
}
