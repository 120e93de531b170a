#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

#include "agedist/acceptance.hpp"
#include "agedist/policy_io.hpp"

using namespace agedist;

TEST(PolicyIo, RoundTripThroughFile) {
    const Model m = settings::reference();
    const PolicySolution sol = policy_iteration(m, 0.6);
    const auto path = (std::filesystem::temp_directory_path() / "agedist_policy.json").string();
    save_policy(path, m, sol);
    const StoredPolicy back = load_policy(path, m);
    EXPECT_EQ(back.actions, sol.actions);
    EXPECT_EQ(back.K, sol.K);
    EXPECT_EQ(back.alphabet, 2u);
    EXPECT_DOUBLE_EQ(back.eta, 0.6);
    EXPECT_DOUBLE_EQ(back.lambda, sol.lambda);
    EXPECT_THROW(load_policy(path, settings::sparse()), std::invalid_argument);
}

TEST(PolicyIo, RunLengthEncodingPerLevel) {
    const Model m = settings::reference();
    const PolicySolution sol = policy_iteration(m, 5.0);  // send-latest everywhere
    const auto j = policy_to_json(m, sol);
    ASSERT_EQ(j.at("levels").size(), sol.K + 1);
    for (std::size_t l = 0; l <= sol.K; ++l) {
        ASSERT_EQ(j["levels"][l].size(), 1u);
        EXPECT_EQ(j["levels"][l][0][0].get<std::size_t>(), l);
    }
    EXPECT_EQ(model_hash(m), model_hash(settings::reference()));
    EXPECT_NE(model_hash(m), model_hash(settings::sparse()));
    EXPECT_EQ(model_hash(m).size(), 16u);
}

TEST(PolicyIo, RejectsDamagedFiles) {
    const Model m = settings::reference();
    auto j = policy_to_json(m, policy_iteration(m, 1.0));
    auto wrong_version = j;
    wrong_version["version"] = 99;
    EXPECT_THROW(policy_from_json(wrong_version), std::invalid_argument);
    auto short_level = j;
    short_level["levels"][2] = nlohmann::json::array({nlohmann::json::array({1, 1})});
    EXPECT_THROW(policy_from_json(short_level), std::invalid_argument);
    auto bad_action = j;
    bad_action["levels"][1] = nlohmann::json::array({nlohmann::json::array({5, 2})});
    EXPECT_THROW(policy_from_json(bad_action), std::invalid_argument);
    const auto path = (std::filesystem::temp_directory_path() / "agedist_policy_bad.json").string();
    std::ofstream(path) << "[1, 2";
    EXPECT_THROW(load_policy(path, m), std::runtime_error);
    EXPECT_THROW(load_policy(path + ".missing", m), std::runtime_error);
}
