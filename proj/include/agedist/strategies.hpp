#pragma once

// Closed-form stationary analysis of three window strategies for a binary
// importance alphabet {v1 < v2} and geometric interspeaking times.
//
//   S1: send the oldest important packet among the K most recent.
//   S2: send the newest important packet among the K most recent.
//   S3: send the newest important packet older than the K most recent;
//       otherwise behave like S1. Needs an unbounded buffer.
//
// With no important packet available the newest packet is sent. The chain
// state a is one plus the number of packets newer than the selected one
// (a = 0 when an unimportant packet is sent); S3 adds state K + 1.

#include <cmath>
#include <cstddef>
#include <ostream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "agedist/model.hpp"

namespace agedist {

enum class Strategy { S1, S2, S3 };

inline std::string to_string(Strategy s) {
    switch (s) {
        case Strategy::S1: return "S1";
        case Strategy::S2: return "S2";
        case Strategy::S3: return "S3";
    }
    return "?";
}

inline Strategy parse_strategy(const std::string& name) {
    if (name == "S1" || name == "s1") return Strategy::S1;
    if (name == "S2" || name == "s2") return Strategy::S2;
    if (name == "S3" || name == "s3") return Strategy::S3;
    throw std::invalid_argument("unknown strategy: " + name);
}

struct StrategyCurvePoint {
    Strategy strategy = Strategy::S1;
    std::size_t K = 0;
    double delta_e = 0.0;
    double d = 0.0;
    std::vector<double> pi;  // indexed by chain state
};

/// Switch to the equal-ratio limit of S1 when |q̄/p̄ - 1| is below this.
inline constexpr double kRatioSingularity = 1e-9;

namespace detail {

struct BinaryGeometric {
    double p, q, pb, qb, v1, v2;
};

inline BinaryGeometric binary_geometric(const Model& m) {
    if (m.alphabet() != 2) throw std::invalid_argument("closed-form strategies need exactly two importance values");
    if (!m.z().is_geometric()) throw std::invalid_argument("closed-form strategies need geometric interspeaking times");
    const double p = m.z().geometric_p();
    const double q = m.v().prob(1);
    return {p, q, 1.0 - p, 1.0 - q, m.v().value(0), m.v().value(1)};
}

/// Distortion per slot from the fraction pi_0 of speaking instants that send v1.
inline double send_rate_distortion(const BinaryGeometric& g, double pi0) {
    return (g.qb - g.p * pi0) * g.v1 + (g.q - g.p * (1.0 - pi0)) * g.v2;
}

}  // namespace detail

inline StrategyCurvePoint s1_point(const Model& m, std::size_t K) {
    if (K < 1) throw std::invalid_argument("window K must be at least 1");
    const auto g = detail::binary_geometric(m);
    const double r = g.qb / g.pb;
    const double Kd = static_cast<double>(K);
    StrategyCurvePoint pt{Strategy::S1, K, 0.0, 0.0, std::vector<double>(K + 1)};
    double piK;
    if (std::abs(r - 1.0) < kRatioSingularity) {
        piK = 1.0 / (Kd + g.pb / g.p);
        pt.delta_e = (Kd - 1.0) * Kd / (2.0 * (Kd + g.pb / g.p));
    } else {
        piK = (1.0 - r) / (1.0 - (g.p / g.q) * std::pow(r, Kd));
    }
    for (std::size_t a = 1; a <= K; ++a) pt.pi[a] = std::pow(r, static_cast<double>(K - a)) * piK;
    pt.pi[0] = (g.qb / g.q) * pt.pi[1];
    if (!(std::abs(r - 1.0) < kRatioSingularity))
        for (std::size_t k = 1; k <= K; ++k) pt.delta_e += static_cast<double>(k - 1) * pt.pi[k];
    pt.d = detail::send_rate_distortion(g, pt.pi[0]);
    return pt;
}

inline StrategyCurvePoint s2_point(const Model& m, std::size_t K) {
    if (K < 1) throw std::invalid_argument("window K must be at least 1");
    const auto g = detail::binary_geometric(m);
    const double miss = g.pb * g.qb;
    StrategyCurvePoint pt{Strategy::S2, K, 0.0, 0.0, std::vector<double>(K + 1)};
    for (std::size_t a = 1; a <= K; ++a) {
        pt.pi[a] = g.q * std::pow(miss, static_cast<double>(a - 1));
        pt.delta_e += static_cast<double>(a - 1) * pt.pi[a];
    }
    pt.pi[0] = (g.qb * g.p + g.q * std::pow(miss, static_cast<double>(K))) / (1.0 - miss);
    pt.d = detail::send_rate_distortion(g, pt.pi[0]);
    return pt;
}

inline StrategyCurvePoint s3_point(const Model& m, std::size_t K) {
    if (K < 1) throw std::invalid_argument("window K must be at least 1");
    const auto g = detail::binary_geometric(m);
    const double r = g.qb / g.pb;
    const double Kd = static_cast<double>(K);
    StrategyCurvePoint pt{Strategy::S3, K, 0.0, 0.0, std::vector<double>(K + 2)};
    // Unnormalized, with pi_{K+1} = 1.
    pt.pi[K + 1] = 1.0;
    for (std::size_t a = 1; a <= K; ++a) pt.pi[a] = g.p * std::pow(r, static_cast<double>(K + 1 - a));
    pt.pi[0] = (g.p * g.qb / g.q) * std::pow(r, Kd);
    double total = 0.0;
    for (double x : pt.pi) total += x;
    for (double& x : pt.pi) x /= total;
    for (std::size_t k = 1; k <= K; ++k) pt.delta_e += static_cast<double>(k - 1) * pt.pi[k];
    // Given state K + 1, the age beyond K - 1 is geometric with success 1 - p̄q̄.
    pt.delta_e += pt.pi[K + 1] * (1.0 / (1.0 - g.pb * g.qb) + Kd - 1.0);
    pt.d = detail::send_rate_distortion(g, pt.pi[0]);
    return pt;
}

inline StrategyCurvePoint strategy_point(const Model& m, Strategy s, std::size_t K) {
    switch (s) {
        case Strategy::S1: return s1_point(m, K);
        case Strategy::S2: return s2_point(m, K);
        case Strategy::S3: return s3_point(m, K);
    }
    throw std::invalid_argument("unknown strategy");
}

inline std::vector<StrategyCurvePoint> strategy_curve(const Model& m, Strategy s, std::size_t k_lo, std::size_t k_hi) {
    if (k_lo < 1 || k_hi < k_lo) throw std::invalid_argument("invalid K range");
    std::vector<StrategyCurvePoint> out;
    for (std::size_t K = k_lo; K <= k_hi; ++K) out.push_back(strategy_point(m, s, K));
    return out;
}

inline void write_strategy_csv(std::ostream& os, const std::vector<StrategyCurvePoint>& points, double dmin) {
    os << "strategy,K,delta_e,d\n";
    os.precision(17);
    for (const auto& p : points) os << to_string(p.strategy) << ',' << p.K << ',' << p.delta_e << ',' << p.d << '\n';
    os << "dmin,0,0," << dmin << '\n';
}

/// Window used when simulating a strategy: S1/S2 forget packets beyond the
/// K most recent, S3 needs the whole backlog (0 = unbounded).
inline std::size_t strategy_window(Strategy s, std::size_t K) { return s == Strategy::S3 ? 0 : K; }

/// Literal action rule of a strategy on a buffer of symbols (0 = v1, 1 = v2).
inline std::size_t strategy_action(Strategy s, std::size_t K, std::span<const Symbol> b) {
    const std::size_t l = b.size();
    const std::size_t lo = l > K ? l - K : 0;  // window is b[lo, l)
    if (s == Strategy::S3 && lo > 0)
        for (std::size_t i = lo; i-- > 0;)
            if (b[i] != 0) return i + 1;
    if (s == Strategy::S2) {
        for (std::size_t i = l; i-- > lo;)
            if (b[i] != 0) return i + 1;
        return l;
    }
    for (std::size_t i = lo; i < l; ++i)
        if (b[i] != 0) return i + 1;
    return l;
}

}  // namespace agedist
