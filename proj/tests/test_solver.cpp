#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "agedist/acceptance.hpp"
#include "agedist/solver.hpp"

using namespace agedist;

namespace {

struct Frozen {
    double eta, lambda, delta_e, d;
    std::size_t K;
};

// Values produced by the dense reference solver.
const Frozen kReference[] = {
    {2.0, 5.0576000000000016, 0.16800000000000001, 4.7216000000000014, 2},
    {1.0, 4.6781081599999998, 0.51421439999999996, 4.1638937599999997, 4},
    {0.5, 4.300998034606609, 1.0711329553748752, 3.765431556919177, 8},
};

const Frozen kThreeLevel[] = {
    {2.0, 1.5436000000000003, 0.14579999999999999, 1.2520000000000002, 3},
    {1.0, 1.3253519999999999, 0.35791199999999995, 0.96743999999999986, 5},
};

Model three_level() {
    return Model(ImportanceDist({0.5, 4.0, 12.0}, {0.6, 0.3, 0.1}), InterspeakDist::finite_pmf({0.1, 0.3, 0.4, 0.2}));
}

}  // namespace

TEST(Solver, SendLatestAboveEtaMax) {
    const Model m = settings::reference();
    for (double eta : {3.8, 4.0, 10.0}) {
        const PolicySolution sol = policy_iteration(m, eta);
        EXPECT_EQ(sol.K, 1u);
        EXPECT_NEAR(sol.lambda, 6.7 * 4.0 / 5.0, 1e-9);
        EXPECT_NEAR(sol.delta_e, 0.0, 1e-12);
        EXPECT_EQ(sol.actions[1], 1);
        EXPECT_EQ(sol.actions[2], 1);
    }
}

TEST(Solver, FrozenReferenceValues) {
    const Model m = settings::reference();
    for (const auto& f : kReference) {
        const PolicySolution sol = policy_iteration(m, f.eta);
        EXPECT_EQ(sol.K, f.K);
        EXPECT_NEAR(sol.lambda, f.lambda, 1e-9) << f.eta;
        EXPECT_NEAR(sol.delta_e, f.delta_e, 1e-9) << f.eta;
        EXPECT_NEAR(sol.d, f.d, 1e-9) << f.eta;
    }
}

TEST(Solver, FrozenFinitePmfValues) {
    const Model m = three_level();
    for (const auto& f : kThreeLevel) {
        const PolicySolution sol = policy_iteration(m, f.eta);
        EXPECT_EQ(sol.K, f.K);
        EXPECT_NEAR(sol.lambda, f.lambda, 1e-9) << f.eta;
        EXPECT_NEAR(sol.delta_e, f.delta_e, 1e-9) << f.eta;
        EXPECT_NEAR(sol.d, f.d, 1e-9) << f.eta;
    }
}

TEST(Solver, MatchesDenseSolverOnReferenceModel) {
    const Model m = settings::reference();
    for (double eta : {2.0, 1.0, 0.7, 0.5}) {
        const std::size_t K = buffer_bound(m, eta);
        const PolicySolution fast = policy_iteration(m, eta, K);
        const PolicySolution slow = generic_policy_iteration(m, eta, K);
        EXPECT_NEAR(fast.lambda, slow.lambda, 1e-9);
        EXPECT_EQ(fast.actions, slow.actions);
        for (NodeId id = 2; id < fast.h.size(); ++id) EXPECT_NEAR(fast.h[id] - fast.h[1], slow.h[id] - slow.h[1], 1e-8);
    }
}

TEST(Solver, ThresholdFlipOfTheExtremeState) {
    const Model m = settings::reference();
    for (std::size_t L = 2; L <= 5; ++L) {
        const double eta_star = 19.0 / (5.0 * static_cast<double>(L - 1));
        BufferState b;
        b.entries.assign(L, 0);
        b.entries[0] = 1;
        const auto below = policy_iteration(m, eta_star - 1e-6, L + 1);
        const auto above = policy_iteration(m, eta_star + 1e-6, L + 1);
        EXPECT_EQ(below.action_for(StateTree(m, below.K), b), 1u);
        EXPECT_EQ(above.action_for(StateTree(m, above.K), b), L);
    }
}

TEST(Solver, CostDecomposesIntoComponents) {
    const Model m = three_level();
    for (double eta : {3.0, 1.5, 0.8}) {
        const PolicySolution sol = policy_iteration(m, eta);
        EXPECT_NEAR(sol.d + eta * sol.delta_e, sol.lambda, 1e-9);
        EXPECT_GE(sol.d, d_min(m) - 1e-12);
        EXPECT_GE(sol.delta_e, -1e-12);
    }
}

TEST(Solver, RejectsBadArguments) {
    const Model m = settings::reference();
    EXPECT_THROW(policy_iteration(m, 0.0), std::invalid_argument);
    EXPECT_THROW(policy_iteration(m, 1.0, 0), std::invalid_argument);
    EXPECT_THROW(generic_policy_iteration(m, 0.2, 16), std::length_error);
}

TEST(SolverProperty, LargerBuffersNeverHurt) {
    // lambda(K) is nonincreasing and flat from K(eta) on
    for (const Model& m : {settings::reference(), three_level()}) {
        for (double eta : {2.0, 1.0}) {
            const std::size_t Kstar = buffer_bound(m, eta);
            double prev = std::numeric_limits<double>::infinity();
            for (std::size_t K = 1; K <= Kstar + 2; ++K) {
                const double lambda = policy_iteration(m, eta, K).lambda;
                EXPECT_LE(lambda, prev + 1e-10);
                if (K > Kstar) {
                    EXPECT_NEAR(lambda, policy_iteration(m, eta, Kstar).lambda, 1e-9);
                }
                prev = lambda;
            }
        }
    }
}

TEST(SolverProperty, RandomModelsAgreeWithDenseReference) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 12; ++trial) {
        const Model m = detail::random_model(rng, trial % 2 ? 3 : 2);
        for (std::size_t K = 1; K <= 4; ++K)
            for (double eta : {0.3, 1.0}) {
                const auto fast = policy_iteration(m, eta, K);
                const auto slow = generic_policy_iteration(m, eta, K);
                ASSERT_NEAR(fast.lambda, slow.lambda, 1e-9);
                ASSERT_EQ(fast.actions, slow.actions);
                EXPECT_EQ(detail::reach_violations(m, fast), 0u);
                const auto rep = detail::check_structure(m, fast);
                EXPECT_EQ(rep.prefix_action + rep.prefix_value + rep.recursion + rep.infeasible, 0u);
            }
    }
}

TEST(Sweep, ReferenceGridReachesBufferSeventeen) {
    const Model m = settings::reference();
    const auto etas = settings::converse_grid(m, 17, 25);
    const TradeoffCurve curve = sweep_eta(m, etas);
    ASSERT_TRUE(curve.failures.empty());
    ASSERT_EQ(curve.points.size(), etas.size());
    EXPECT_EQ(curve.points.front().K, 1u);
    EXPECT_NEAR(curve.points.front().delta_e, 0.0, 1e-12);
    EXPECT_EQ(curve.points.back().K, 17u);
    for (std::size_t i = 0; i < curve.points.size(); ++i) {
        const auto& p = curve.points[i];
        EXPECT_NEAR(p.d + p.eta * p.delta_e, p.lambda, 1e-9);
        if (i == 0) continue;
        const auto& q = curve.points[i - 1];
        // J* is nondecreasing in eta; along the sweep age rises as distortion falls
        EXPECT_LE(p.lambda, q.lambda + 1e-12);
        EXPECT_GE(p.delta_e, q.delta_e - 1e-9);
        EXPECT_LE(p.d, q.d + 1e-9);
    }
    const auto& a = curve.points[curve.points.size() - 2];
    const auto& b = curve.points.back();
    EXPECT_NEAR(curve.exact_until, (a.lambda - b.lambda) / (a.eta - b.eta), 1e-15);
    EXPECT_NEAR(curve.converse(0.0), curve.points.front().lambda, 1e-12);
}

TEST(Sweep, WarmStartMatchesColdSolves) {
    const Model m = settings::reference();
    const std::vector<double> etas{3.0, 1.3, 0.9, 0.6};
    SweepOptions cold;
    cold.warm_start = false;
    const auto warm = sweep_eta(m, etas);
    const auto fresh = sweep_eta(m, etas, cold);
    ASSERT_EQ(warm.points.size(), fresh.points.size());
    for (std::size_t i = 0; i < etas.size(); ++i) EXPECT_NEAR(warm.points[i].lambda, fresh.points[i].lambda, 1e-9);
}

TEST(Sweep, ValidatesGridAndRecordsOversizedWeights) {
    const Model m = settings::reference();
    EXPECT_THROW(sweep_eta(m, {1.0, 2.0}), std::invalid_argument);
    EXPECT_THROW(sweep_eta(m, {1.0, 1.0}), std::invalid_argument);
    EXPECT_THROW(sweep_eta(m, {-1.0}), std::invalid_argument);
    const auto curve = sweep_eta(m, {1.0, 3.8 / 30.0});
    EXPECT_EQ(curve.points.size(), 1u);
    ASSERT_EQ(curve.failures.size(), 1u);
    EXPECT_NE(curve.failures[0].second.find("exceeds"), std::string::npos);
    const auto grid = geometric_eta_grid(4.0, 0.5, 4);
    ASSERT_EQ(grid.size(), 4u);
    EXPECT_DOUBLE_EQ(grid.front(), 4.0);
    EXPECT_DOUBLE_EQ(grid.back(), 0.5);
    EXPECT_NEAR(grid[1], 2.0, 1e-12);
}
