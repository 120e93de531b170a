#pragma once

// Independent numeric references used by the test suite and the verify
// command: explicit transition matrices for the window strategies, a
// stationary solver, brute-force tail sums and exhaustive parse-tree search.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agedist/model.hpp"
#include "agedist/strategies.hpp"

namespace agedist::oracle {

/// Stationary distribution of a row-stochastic matrix.
inline std::vector<double> stationary(const Eigen::MatrixXd& P) {
    const Eigen::Index n = P.rows();
    Eigen::MatrixXd A = (P - Eigen::MatrixXd::Identity(n, n)).transpose();
    A.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    const Eigen::VectorXd pi = A.fullPivLu().solve(b);
    return {pi.data(), pi.data() + n};
}

/// Transition matrix of a strategy's chain, plus E[excess age at the next
/// instant ; next state] per transition, built by enumerating the
/// interspeaking time and the position of important packets. Arrivals not
/// pinned down by the previous selection are i.i.d.
struct StrategyChain {
    Eigen::MatrixXd P;
    Eigen::MatrixXd age;
};

inline StrategyChain strategy_chain(const Model& m, Strategy strat, std::size_t K) {
    const double p = m.z().geometric_p();
    const double q = m.v().prob(1), qb = 1.0 - q;
    const std::size_t states = strat == Strategy::S3 ? K + 2 : K + 1;
    StrategyChain c{Eigen::MatrixXd::Zero(states, states), Eigen::MatrixXd::Zero(states, states)};
    std::size_t zmax = 1;
    if (p < 1.0) zmax = static_cast<std::size_t>(std::ceil(std::log(1e-18) / std::log(1.0 - p))) + 1;

    for (std::size_t a = 0; a < states; ++a) {
        for (std::size_t z = 1; z <= zmax; ++z) {
            const double pz = std::pow(1.0 - p, static_cast<double>(z - 1)) * p;
            // unknown packets in the buffer, oldest first
            std::size_t U;
            if (strat == Strategy::S2 || a == 0) U = z;
            else if (a == K + 1) U = K + z;
            else U = a - 1 + z;
            const std::size_t W = std::min(K, U);
            auto add = [&](std::size_t to, double pr, double excess) {
                c.P(a, to) += pz * pr;
                c.age(a, to) += pz * pr * excess;
            };
            if (strat == Strategy::S2) {
                for (std::size_t k = 1; k <= W; ++k) add(k, std::pow(qb, static_cast<double>(k - 1)) * q, double(k - 1));
                add(0, std::pow(qb, static_cast<double>(W)), 0.0);
                continue;
            }
            double window_weight = 1.0;
            if (strat == Strategy::S3 && U > W) {
                const std::size_t O = U - W;
                for (std::size_t k = 1; k <= O; ++k)
                    add(K + 1, std::pow(qb, static_cast<double>(k - 1)) * q, static_cast<double>(W + k - 1));
                window_weight = std::pow(qb, static_cast<double>(O));
            }
            for (std::size_t j = 1; j <= W; ++j)
                add(W - j + 1, window_weight * std::pow(qb, static_cast<double>(j - 1)) * q, static_cast<double>(W - j));
            add(0, window_weight * std::pow(qb, static_cast<double>(W)), 0.0);
        }
    }
    return c;
}

/// Stationary law, excess age and send-rate distortion from the explicit chain.
inline StrategyCurvePoint strategy_point_numeric(const Model& m, Strategy strat, std::size_t K) {
    const StrategyChain c = strategy_chain(m, strat, K);
    StrategyCurvePoint pt;
    pt.strategy = strat;
    pt.K = K;
    pt.pi = stationary(c.P);
    for (Eigen::Index a = 0; a < c.P.rows(); ++a) pt.delta_e += pt.pi[a] * c.age.row(a).sum();
    const double p = m.z().geometric_p(), q = m.v().prob(1);
    pt.d = (1.0 - q - p * pt.pi[0]) * m.v().value(0) + (q - p * (1.0 - pt.pi[0])) * m.v().value(1);
    return pt;
}

/// E[(Z - K)^+] by direct summation of the pmf until the tail is negligible.
inline double excess_mean_bruteforce(const InterspeakDist& z, long K) {
    double s = 0.0;
    for (long k = K + 1; k < 100000; ++k) {
        const double w = z.pmf(k);
        s += static_cast<double>(k - K) * w;
        if (z.tail(k) < 1e-18 && k > K + 10) break;
    }
    return s;
}

/// All complete binary parse trees with M leaves, as sorted leaf-word lists.
inline std::vector<std::vector<std::string>> complete_trees(std::size_t M) {
    std::function<std::vector<std::vector<std::string>>(std::size_t)> build = [&](std::size_t leaves) {
        std::vector<std::vector<std::string>> out;
        if (leaves == 1) {
            out.push_back({""});
            return out;
        }
        for (std::size_t left = 1; left < leaves; ++left)
            for (const auto& l : build(left))
                for (const auto& r : build(leaves - left)) {
                    std::vector<std::string> words;
                    for (const auto& w : l) words.push_back('0' + w);
                    for (const auto& w : r) words.push_back('1' + w);
                    out.push_back(std::move(words));
                }
        return out;
    };
    return build(M);
}

inline double expected_parse_length(const std::vector<std::string>& words, double prob_one) {
    double e = 0.0;
    for (const auto& w : words) {
        double pr = 1.0;
        for (char ch : w) pr *= ch == '1' ? prob_one : 1.0 - prob_one;
        e += pr * static_cast<double>(w.size());
    }
    return e;
}

/// Largest expected parse length over every complete M-leaf tree.
inline double best_parse_length(std::size_t M, double prob_one) {
    double best = 0.0;
    for (const auto& t : complete_trees(M)) best = std::max(best, expected_parse_length(t, prob_one));
    return best;
}

}  // namespace agedist::oracle
