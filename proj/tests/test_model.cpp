#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "agedist/acceptance.hpp"
#include "agedist/model.hpp"
#include "agedist/oracles.hpp"

using namespace agedist;

namespace {

Model three_level() {
    return Model(ImportanceDist({0.5, 4.0, 12.0}, {0.6, 0.3, 0.1}), InterspeakDist::finite_pmf({0.1, 0.3, 0.4, 0.2}));
}

}  // namespace

TEST(Model, MinimumDistortionOfBuiltInSettings) {
    EXPECT_NEAR(d_min(settings::reference()), 2.7, 1e-12);
    EXPECT_NEAR(d_min(settings::sparse()), 0.7, 1e-12);
}

TEST(Model, MinimumDistortionSplitsTheMarginalValue) {
    // top two values cover 0.4 >= 1/2.7, so the 4.0 class is partly dropped
    const Model m = three_level();
    EXPECT_NEAR(m.mu(), 2.7, 1e-15);
    EXPECT_NEAR(d_min(m), 0.6 * 0.5 + (0.4 - 1.0 / 2.7) * 4.0, 1e-12);
}

TEST(Model, MinimumDistortionVanishesWhenSpeakingEverySlot) {
    const Model m(ImportanceDist({1.0, 20.0}, {0.7, 0.3}), InterspeakDist::geometric(1.0));
    EXPECT_EQ(d_min(m), 0.0);
}

TEST(Model, WeightThresholdsAndBufferBounds) {
    const Model m = settings::reference();
    EXPECT_NEAR(eta_max(m), 3.8, 1e-15);
    EXPECT_EQ(buffer_bound(m, 10.0), 1u);
    EXPECT_EQ(buffer_bound(m, 3.8), 1u);
    EXPECT_EQ(buffer_bound(m, 1.0), 4u);
    EXPECT_EQ(buffer_bound(m, 0.5), 8u);
    // exact integer ratios must not round up through float noise
    for (std::size_t k = 1; k <= 30; ++k) EXPECT_EQ(buffer_bound(m, eta_max(m) / static_cast<double>(k)), k);
    EXPECT_EQ(buffer_bound_i(m, 1.0, 0), 0u);
    EXPECT_EQ(buffer_bound_i(m, 1.0, 1), 4u);
    EXPECT_THROW(buffer_bound(m, 0.0), std::invalid_argument);
    EXPECT_THROW(buffer_bound(m, -1.0), std::invalid_argument);
}

TEST(Model, RejectsMalformedDistributions) {
    EXPECT_THROW(ImportanceDist({}, {}), std::invalid_argument);
    EXPECT_THROW(ImportanceDist({2.0, 1.0}, {0.5, 0.5}), std::invalid_argument);
    EXPECT_THROW(ImportanceDist({1.0, 2.0}, {0.5, 0.6}), std::invalid_argument);
    EXPECT_THROW(ImportanceDist({1.0, 2.0}, {1.0, 0.0}), std::invalid_argument);
    EXPECT_THROW(ImportanceDist({-1.0, 2.0}, {0.5, 0.5}), std::invalid_argument);
    EXPECT_THROW(InterspeakDist::geometric(0.0), std::invalid_argument);
    EXPECT_THROW(InterspeakDist::geometric(1.5), std::invalid_argument);
    EXPECT_THROW(InterspeakDist::finite_pmf({0.5, 0.4}), std::invalid_argument);
    EXPECT_THROW(InterspeakDist::finite_pmf(std::vector<double>(65, 1.0 / 65)), std::invalid_argument);
}

TEST(Model, GeometricMoments) {
    const auto z = InterspeakDist::geometric(0.2);
    EXPECT_DOUBLE_EQ(z.mean(), 5.0);
    EXPECT_DOUBLE_EQ(z.nu(), 25.0);  // E[Z(Z+1)]/2 = 1/p^2
    EXPECT_DOUBLE_EQ(z.tail(1), 1.0);
    EXPECT_NEAR(z.tail(3), 0.64, 1e-15);
    EXPECT_NEAR(z.pmf(2), 0.16, 1e-15);
}

TEST(ModelProperty, ExcessMeanMatchesDirectSummation) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0.02, 1.0);
    for (int trial = 0; trial < 40; ++trial) {
        InterspeakDist z = InterspeakDist::geometric(0.5);
        if (trial % 2 == 0) {
            z = InterspeakDist::geometric(u(rng));
        } else {
            std::vector<double> pmf(1 + trial % 9);
            double total = 0.0;
            for (auto& w : pmf) total += w = u(rng);
            for (auto& w : pmf) w /= total;
            pmf.back() = 1.0 - std::accumulate(pmf.begin(), pmf.end() - 1, 0.0);
            z = InterspeakDist::finite_pmf(pmf);
        }
        for (long K = 0; K <= 20; ++K)
            EXPECT_NEAR(z.excess_mean(K), oracle::excess_mean_bruteforce(z, K), 1e-9 * (1.0 + z.mean())) << trial;
        double brute_nu = 0.0;
        for (long k = 1; k < 20000; ++k) brute_nu += 0.5 * double(k) * double(k + 1) * z.pmf(k);
        EXPECT_NEAR(z.nu(), brute_nu, 1e-8 * z.nu());
    }
}

TEST(Model, JsonRoundTripAndFileErrors) {
    const Model m = three_level();
    const Model back = Model::from_json(m.to_json());
    EXPECT_EQ(back.v().values(), m.v().values());
    EXPECT_EQ(back.v().probs(), m.v().probs());
    EXPECT_EQ(back.z().pmf_table(), m.z().pmf_table());
    EXPECT_FALSE(back.z().is_geometric());

    const auto dir = std::filesystem::temp_directory_path();
    const auto good = dir / "agedist_model_ok.json";
    std::ofstream(good) << settings::reference().to_json().dump();
    EXPECT_DOUBLE_EQ(Model::load(good.string()).mu(), 5.0);

    const auto bad = dir / "agedist_model_bad.json";
    std::ofstream(bad) << "{ not json";
    EXPECT_THROW(Model::load(bad.string()), std::runtime_error);
    EXPECT_THROW(Model::load((dir / "agedist_missing.json").string()), std::runtime_error);
    EXPECT_THROW(Model::from_json(nlohmann::json{{"values", {1, 2}}}), std::invalid_argument);
}
