#pragma once

// Headerless binary packets: the sender transmits N bits per speaking time
// and its action depends only on the buffer length l. Choosing selection
// index s sends the contiguous chunk ending at bit s and permanently skips
// the (s - N)^+ bits before it.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <queue>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agedist/model.hpp"
#include "agedist/solver.hpp"

namespace agedist {

/// Bit source: a 1-bit has importance v with probability q, a 0-bit has
/// importance v_low. Speaking times are geometric with parameter p.
struct BinarySource {
    double q = 0.5;
    double v = 1.0;
    double v_low = 1.0;
    double p = 1.0;
    std::size_t N = 1;

    BinarySource() = default;
    BinarySource(double q_, double v_, double p_, std::size_t N_, double v_low_ = 1.0)
        : q(q_), v(v_), v_low(v_low_), p(p_), N(N_) {
        validate();
    }

    /// Importance values and geometric speaking parameter taken from a two-value model.
    static BinarySource from_model(const Model& m, std::size_t N) {
        if (m.alphabet() != 2 || !m.z().is_geometric())
            throw std::invalid_argument("buffer-ignorant analysis needs two importance values and geometric Z");
        return BinarySource(m.v().prob(1), m.v().value(1), m.z().geometric_p(), N, m.v().value(0));
    }

    void validate() const {
        if (!(q > 0.0 && q < 1.0)) throw std::invalid_argument("bit probability q must lie in (0, 1)");
        if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("speaking parameter p must lie in (0, 1]");
        if (!(v >= v_low) || !(v_low >= 0.0)) throw std::invalid_argument("bit importances must satisfy 0 <= v_low <= v");
        if (N < 1) throw std::invalid_argument("N must be at least 1");
    }

    double mean_importance() const { return v_low * (1.0 - q) + v * q; }
    double pmf(std::size_t z) const { return z < 1 ? 0.0 : std::pow(1.0 - p, static_cast<double>(z - 1)) * p; }
    double tail(std::size_t z) const { return z <= 1 ? 1.0 : std::pow(1.0 - p, static_cast<double>(z - 1)); }
};

/// mu_V p (s - N)^+ + eta (l - s).
inline double bi_one_step_cost(const BinarySource& src, double eta, std::size_t l, std::size_t s) {
    if (s < 1 || s > l) throw std::invalid_argument("action must satisfy 1 <= s <= l");
    const double skipped = s > src.N ? static_cast<double>(s - src.N) : 0.0;
    return src.mean_importance() * src.p * skipped + eta * static_cast<double>(l - s);
}

struct LengthPolicySolution {
    double eta = 0.0;
    double lambda = 0.0;
    std::size_t L_cap = 0;
    std::vector<std::size_t> actions;  // actions[l], l = 1..L_cap; index 0 unused
    std::vector<double> h;
    std::size_t iters = 0;

    /// Action at any length: beyond L_cap the backlog stays at the last one.
    std::size_t action(std::size_t l) const {
        if (l < 1) throw std::invalid_argument("buffer length must be positive");
        if (l <= L_cap) return actions[l];
        return l - (L_cap - actions[L_cap]);
    }

    /// Threshold tau if the policy is s(l) = min(max(l - tau, N), l), else -1.
    long threshold(std::size_t N) const {
        const long tau = static_cast<long>(L_cap - actions[L_cap]);
        for (std::size_t l = 1; l <= L_cap; ++l) {
            const long s = std::min<long>(std::max<long>(static_cast<long>(l) - tau, static_cast<long>(N)),
                                          static_cast<long>(l));
            if (s != static_cast<long>(actions[l])) return -1;
        }
        return tau;
    }
};

/// Largest backlog an optimal length policy may keep: N mu_V / eta.
inline std::size_t bi_length_cap(const BinarySource& src, double eta) {
    const double reach = static_cast<double>(src.N) * src.mean_importance() / eta;
    if (!(reach < 1e6)) throw std::length_error("eta too small for the buffer-ignorant length MDP");
    return src.N + static_cast<std::size_t>(std::ceil(reach)) + 4 * src.N + 20;
}

namespace detail {

/// E[h(r + Z)] with h extended linearly above L: h(L + j) = h(L) + mu_V p j.
inline double bi_expected_next(const BinarySource& src, const std::vector<double>& h, std::size_t L, std::size_t r) {
    double e = 0.0;
    for (std::size_t z = 1; r + z <= L; ++z) e += src.pmf(z) * h[r + z];
    const std::size_t room = L - r;  // Z > room overflows
    e += src.tail(room + 1) * h[L];
    // E[(Z - room)^+] for geometric Z
    e += src.mean_importance() * src.p * std::pow(1.0 - src.p, static_cast<double>(room)) / src.p;
    return e;
}

}  // namespace detail

/// Policy iteration for the length MDP on 1..L_cap with h(1) = 0.
inline LengthPolicySolution bi_policy_iteration(const BinarySource& src, double eta, std::size_t max_iters = 1000) {
    src.validate();
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    const std::size_t L = bi_length_cap(src, eta);
    const double mu_v = src.mean_importance();

    std::vector<std::size_t> act(L + 1, 0);
    for (std::size_t l = 1; l <= L; ++l) act[l] = std::min(l, src.N);  // send the newest N bits

    std::vector<double> h(L + 1, 0.0);
    const auto n = static_cast<Eigen::Index>(L);
    for (std::size_t it = 1; it <= max_iters; ++it) {
        // Unknowns: slot 0 holds lambda (h(1) = 0), slot l - 1 holds h(l).
        Eigen::MatrixXd A = Eigen::MatrixXd::Zero(n, n);
        Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
        for (std::size_t l = 1; l <= L; ++l) {
            const auto row = static_cast<Eigen::Index>(l - 1);
            const std::size_t r = l - act[l];
            const std::size_t room = L - r;
            if (l > 1) A(row, row) += 1.0;
            A(row, 0) += 1.0;
            rhs(row) = bi_one_step_cost(src, eta, l, act[l]);
            for (std::size_t z = 1; r + z <= L; ++z)
                if (r + z > 1) A(row, static_cast<Eigen::Index>(r + z - 1)) -= src.pmf(z);
            A(row, n - 1) -= src.tail(room + 1);
            rhs(row) += mu_v * std::pow(1.0 - src.p, static_cast<double>(room));
        }
        const Eigen::VectorXd x = A.partialPivLu().solve(rhs);
        if (!x.allFinite()) throw SolverError("length-MDP evaluation failed");
        const double lambda = x(0);
        h.assign(L + 1, 0.0);
        for (std::size_t l = 2; l <= L; ++l) h[l] = x(static_cast<Eigen::Index>(l - 1));

        bool changed = false;
        for (std::size_t l = 1; l <= L; ++l) {
            double best = std::numeric_limits<double>::infinity();
            std::vector<double> score(l + 1);
            for (std::size_t s = 1; s <= l; ++s) {
                score[s] = bi_one_step_cost(src, eta, l, s) + detail::bi_expected_next(src, h, L, l - s);
                best = std::min(best, score[s]);
            }
            std::size_t pick = l;
            const double band = kTieTolerance * std::max(1.0, std::abs(best));
            while (pick > 1 && !(score[pick] <= best + band)) --pick;
            changed |= pick != act[l];
            act[l] = pick;
        }
        if (!changed) {
            LengthPolicySolution sol;
            sol.eta = eta;
            sol.lambda = lambda;
            sol.L_cap = L;
            sol.actions = act;
            sol.h = h;
            sol.iters = it;
            return sol;
        }
    }
    throw SolverError("length-MDP policy iteration did not converge");
}

// ---------------------------------------------------------------------------
// Single-threshold policies s(l) = min(max(l - tau, N), l)

inline std::size_t threshold_action(std::size_t N, std::size_t tau, std::size_t l) {
    const std::size_t keep_newest = l > tau ? l - tau : 0;
    return std::min(std::max(keep_newest, N), l);
}

struct ThresholdPoint {
    std::size_t N = 1;
    std::size_t tau = 0;
    double delta_e = 0.0;
    double d = 0.0;
    std::vector<double> pi;  // pi[l] for l = 1..tau+N, remaining mass in the geometric tail
    bool closed_form = true;  // false when the numeric stationary solve is the value of record
    /// Rounding amplification of the alternating series: absolute error in pi is about this times eps.
    double cancellation = 1.0;
};

/// Stationary law of the length chain under threshold tau, solved numerically.
/// States above T = tau + N + 64 are lumped; every such state keeps tau bits,
/// and the overshoot past T is geometric(p) by memorylessness.
inline ThresholdPoint threshold_point_numeric(const BinarySource& src, std::size_t tau) {
    src.validate();
    const std::size_t N = src.N;
    const std::size_t T = tau + N + 64;
    const auto n = static_cast<Eigen::Index>(T + 1);  // states 1..T and the lump (index T)
    auto keep = [&](std::size_t l) { return l - threshold_action(N, tau, l); };
    Eigen::MatrixXd P = Eigen::MatrixXd::Zero(n, n);
    for (std::size_t l = 1; l <= T + 1; ++l) {
        const std::size_t r = l <= T ? keep(l) : tau;
        const auto row = static_cast<Eigen::Index>(l - 1);
        for (std::size_t z = 1; r + z <= T; ++z) P(row, static_cast<Eigen::Index>(r + z - 1)) += src.pmf(z);
        P(row, n - 1) += src.tail(T - r + 1);
    }
    // pi (P - I) = 0 with sum(pi) = 1
    Eigen::MatrixXd A = (P - Eigen::MatrixXd::Identity(n, n)).transpose();
    A.row(n - 1).setOnes();
    Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
    b(n - 1) = 1.0;
    const Eigen::VectorXd pi = A.fullPivLu().solve(b);

    ThresholdPoint pt;
    pt.N = N;
    pt.tau = tau;
    pt.closed_form = false;
    pt.pi.assign(T + 1, 0.0);
    double skipped = 0.0;
    for (std::size_t l = 1; l <= T; ++l) {
        pt.pi[l] = pi(static_cast<Eigen::Index>(l - 1));
        pt.delta_e += pt.pi[l] * static_cast<double>(keep(l));
        const std::size_t s = threshold_action(N, tau, l);
        if (s > N) skipped += pt.pi[l] * static_cast<double>(s - N);
    }
    const double lump = pi(n - 1);
    pt.delta_e += lump * static_cast<double>(tau);
    skipped += lump * (static_cast<double>(T) + 1.0 / src.p - static_cast<double>(tau + N));
    pt.d = src.mean_importance() * src.p * skipped;
    pt.pi.resize(tau + N + 1);
    return pt;
}

/// S_j^{(n)}: S_j^{(0)} = 1 + j p, S_j^{(n)} = sum_{k<=j} S_k^{(n-1)}, zero for j < 0.
inline std::vector<std::vector<double>> threshold_partial_sums(double p, std::size_t levels, std::size_t jmax) {
    std::vector<std::vector<double>> S(levels + 1, std::vector<double>(jmax + 1, 0.0));
    for (std::size_t j = 0; j <= jmax; ++j) S[0][j] = 1.0 + static_cast<double>(j) * p;
    for (std::size_t n = 1; n <= levels; ++n) {
        double acc = 0.0;
        for (std::size_t j = 0; j <= jmax; ++j) S[n][j] = acc += S[n - 1][j];
    }
    return S;
}

/// Closed-form stationary law and (delta_e, d) of a threshold policy. Valid
/// for tau > N; otherwise the numeric solve is returned.
inline ThresholdPoint threshold_point_closed_form(const BinarySource& src, std::size_t tau) {
    src.validate();
    const std::size_t N = src.N;
    const double p = src.p, pb = 1.0 - p;
    ThresholdPoint pt;
    pt.N = N;
    pt.tau = tau;
    if (tau == 0) {
        // every buffer is emptied, so the length is Z itself
        pt.pi.assign(N + 1, 0.0);
        for (std::size_t l = 1; l <= N; ++l) pt.pi[l] = src.pmf(l);
        pt.d = src.mean_importance() * std::pow(pb, static_cast<double>(N));
        return pt;
    }
    const std::size_t levels = (tau + N - 1) / N;  // ceil(tau / N)
    const auto S = threshold_partial_sums(p, levels, tau);
    // ratio[j] = pi_{tau - j} / pi_{tau + 1}
    std::vector<double> ratio(tau);
    double scale = 0.0;
    for (std::size_t j = 0; j < tau; ++j) {
        double num = 1.0, mag = 1.0;
        for (std::size_t k = 0; k <= levels; ++k) {
            if (k * N > j) break;
            const double sign = (k % 2 == 0) ? -1.0 : 1.0;
            const double term = S[k][j - k * N] * std::pow(p, static_cast<double>(k)) *
                                std::pow(pb, static_cast<double>((k + 1) * (N - 1)));
            num += sign * term;
            mag += term;
        }
        scale = std::max(scale, mag / std::pow(pb, static_cast<double>(j + 1)));
        ratio[j] = num / std::pow(pb, static_cast<double>(j + 1));
    }
    double inv = 1.0 / p;
    for (double r : ratio) inv += r;
    const double top = 1.0 / inv;  // pi_{tau+1}
    // pi_{tau+1} <= p whatever the computed ratios say, so scale * p bounds the error
    const double amplification = scale * p;
    pt.cancellation = std::isfinite(amplification) ? std::max(1.0, amplification)
                                                   : std::numeric_limits<double>::infinity();

    pt.pi.assign(tau + N + 1, 0.0);
    for (std::size_t j = 0; j < tau; ++j) pt.pi[tau - j] = top * ratio[j];
    for (std::size_t l = tau + 1; l <= tau + N; ++l) pt.pi[l] = top * std::pow(pb, static_cast<double>(l - tau - 1));

    auto pi_at = [&](std::size_t l) {
        return l <= tau ? pt.pi[l] : top * std::pow(pb, static_cast<double>(l - tau - 1));
    };
    for (std::size_t j = 1; j + 1 <= tau; ++j) pt.delta_e += static_cast<double>(j) * pi_at(N + j);
    pt.delta_e += static_cast<double>(tau) * top * std::pow(pb, static_cast<double>(N - 1)) / p;
    pt.d = src.mean_importance() * top * std::pow(pb, static_cast<double>(N)) / p;
    return pt;
}

/// Cancellation factor above which the closed form is not trusted.
inline constexpr double kMaxCancellation = 1e6;

/// Value of record for a threshold policy: the closed form when tau > N or
/// tau = 0 and its series is well conditioned, otherwise the numeric solve.
inline ThresholdPoint threshold_point(const BinarySource& src, std::size_t tau) {
    if (tau == 0) return threshold_point_closed_form(src, tau);
    if (tau > src.N) {
        ThresholdPoint pt = threshold_point_closed_form(src, tau);
        if (pt.cancellation <= kMaxCancellation) return pt;
    }
    return threshold_point_numeric(src, tau);
}

// ---------------------------------------------------------------------------
// Tunstall parsing

struct TunstallDictionary {
    std::vector<std::string> leaves;  // words over {0,1}, sorted
    double expected_length = 0.0;
    double prob_one = 0.5;

    std::size_t size() const { return leaves.size(); }

    double kraft_sum() const {
        double s = 0.0;
        for (const auto& w : leaves) s += std::ldexp(1.0, -static_cast<int>(w.size()));
        return s;
    }

    std::size_t max_length() const {
        std::size_t m = 0;
        for (const auto& w : leaves) m = std::max(m, w.size());
        return m;
    }

    void write(std::ostream& os) const {
        for (const auto& w : leaves) os << w << '\n';
    }
};

inline double word_probability(const std::string& w, double prob_one) {
    double pr = 1.0;
    for (char c : w) pr *= c == '1' ? prob_one : 1.0 - prob_one;
    return pr;
}

/// Grows the parse tree by splitting the most probable leaf until there are
/// M leaves; ties split the lexicographically smallest leaf.
inline TunstallDictionary tunstall_build(double prob_one, std::size_t M) {
    if (M < 2) throw std::invalid_argument("dictionary size must be at least 2");
    if (!(prob_one > 0.0 && prob_one < 1.0)) throw std::invalid_argument("bit probability must lie in (0, 1)");
    struct Leaf {
        double prob;
        std::string word;
    };
    auto later = [](const Leaf& a, const Leaf& b) {
        if (a.prob != b.prob) return a.prob < b.prob;
        return a.word > b.word;
    };
    std::priority_queue<Leaf, std::vector<Leaf>, decltype(later)> heap(later);
    heap.push({1.0, ""});
    std::size_t count = 1;
    while (count + 1 <= M) {
        const Leaf top = heap.top();
        heap.pop();
        heap.push({top.prob * (1.0 - prob_one), top.word + '0'});
        heap.push({top.prob * prob_one, top.word + '1'});
        ++count;
    }
    TunstallDictionary dict;
    dict.prob_one = prob_one;
    while (!heap.empty()) {
        const Leaf leaf = heap.top();
        heap.pop();
        dict.expected_length += leaf.prob * static_cast<double>(leaf.word.size());
        dict.leaves.push_back(leaf.word);
    }
    std::sort(dict.leaves.begin(), dict.leaves.end());
    return dict;
}

/// Number of bits consumed when parsing `bits` (first element parsed first)
/// with a complete prefix-free dictionary; a parse that runs off the end
/// consumes everything that is left.
inline std::size_t tunstall_parse_length(const TunstallDictionary& dict, const std::vector<std::uint8_t>& bits) {
    std::string prefix;
    for (std::size_t i = 0; i < bits.size(); ++i) {
        prefix.push_back(bits[i] ? '1' : '0');
        if (std::binary_search(dict.leaves.begin(), dict.leaves.end(), prefix)) return i + 1;
    }
    return bits.size();
}

// ---------------------------------------------------------------------------
// Curve output

struct BufferIgnorantRow {
    std::string variant;  // "BI" or "BIT"
    std::size_t N = 1;
    std::size_t tau = 0;
    double delta_e = 0.0;
    double d = 0.0;
};

inline void write_buffer_ignorant_csv(std::ostream& os, const std::vector<BufferIgnorantRow>& rows) {
    os << "variant,N,tau,delta_e,d\n";
    os.precision(17);
    for (const auto& r : rows) os << r.variant << ',' << r.N << ',' << r.tau << ',' << r.delta_e << ',' << r.d << '\n';
}

}  // namespace agedist
