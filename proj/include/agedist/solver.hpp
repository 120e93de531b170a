#pragma once

// Policy iteration for the truncated average-cost MDP whose state is the
// buffer content at a speaking time and whose action s selects the s-th
// oldest buffered packet.
//
// Two solvers share the same cost model:
//  - generic_policy_iteration: textbook policy iteration over the full
//    state space with exhaustive argmin; used as the oracle.
//  - policy_iteration: the trie-based variant. Every state either selects
//    its oldest packet (set B1) or inherits parent action + 1, so relative
//    values outside B1 follow h(b) = b_1/mu + h(parent(b)) and evaluation only
//    solves for B1. Improvement uses the kappa recursion and runs in
//    O(K |V|^K) per sweep.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "agedist/model.hpp"
#include "agedist/state_tree.hpp"

namespace agedist {

class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Guard band for argmin ties and the improvement test.
inline constexpr double kTieTolerance = 1e-12;

/// Linear weights on the two cost components: age (eta) and distortion.
struct CostWeights {
    double age = 1.0;
    double distortion = 1.0;
};

struct PolicySolution {
    double eta = 0.0;
    std::size_t K = 0;
    std::size_t alphabet = 0;
    std::vector<std::int32_t> actions;  // per node, breadth-first layout
    double lambda = 0.0;
    std::vector<double> h;
    std::vector<NodeId> b1_set;  // v_min singleton plus every l >= 2 state with s = 1
    double delta_e = 0.0;
    double d = 0.0;
    std::size_t iters = 0;

    /// Action for a buffer state of length <= K.
    std::size_t action_for(const StateTree& topology, const BufferState& b) const {
        return static_cast<std::size_t>(actions.at(topology.index_of(b)));
    }
};

// ---------------------------------------------------------------------------
// Cost model

/// (1/mu) sum_{k<s} b_k + eta (l(b) - s).
inline double one_step_cost(const Model& m, double eta, const BufferState& b, std::size_t s) {
    const std::size_t l = b.length();
    if (s < 1 || s > l) throw std::invalid_argument("action must satisfy 1 <= s <= l(b)");
    double skipped = 0.0;
    for (std::size_t k = 0; k + 1 < s; ++k) skipped += m.v().value(b.entries[k]);
    return skipped / m.mu() + eta * static_cast<double>(l - s);
}

/// True when s is allowed at b: the newest packet, or an older one above v_min.
inline bool feasible_action(const BufferState& b, std::size_t s) {
    return s >= 1 && s <= b.length() && (s == b.length() || b.entries[s - 1] != 0);
}

namespace detail {

inline double value_at(const Model& m, const StateTree& t, NodeId id) { return m.v().value(t.first(id)); }

}  // namespace detail

/// Expected forgetting cost plus next-state relative value after the
/// unsent packets r are kept and Z new packets arrive, truncated to K.
/// Returns the constant part and calls visit(node, coefficient) for every
/// relative-value term. Distortion terms are scaled by dist_weight.
template <class Visit>
double continuation(const Model& m, const StateTree& t, NodeId r, double dist_weight, Visit&& visit) {
    const std::size_t K = t.K();
    const std::size_t mlen = t.depth(r);
    const double mu = m.mu();

    double constant = 0.0;
    // r_k is forgotten once Z >= K - m + k.
    NodeId cur = r;
    for (std::size_t k = 1; k <= mlen; ++k, cur = t.parent(cur))
        constant += detail::value_at(m, t, cur) * m.z_tail(static_cast<long>(K - mlen + k));
    constant += m.v().mean() * m.z_excess_mean(static_cast<long>(K));
    constant *= dist_weight / mu;

    for (std::size_t z = 1; z + 1 <= K; ++z) {
        const double pz = m.z_pmf(static_cast<long>(z));
        if (pz == 0.0) continue;
        const std::size_t drop = mlen + z > K ? mlen + z - K : 0;
        const NodeId kept = t.drop_oldest(r, drop);
        t.for_each_extension(kept, z, [&](NodeId x, double w) { visit(x, pz * w); });
    }
    const double qK = m.z_tail(static_cast<long>(K));
    if (qK != 0.0) t.for_each_extension(t.root(), K, [&](NodeId x, double w) { visit(x, qK * w); });
    return constant;
}

/// C_h(b, s): one-step cost plus expected truncated continuation under h.
inline double c_value(const Model& m, const StateTree& t, std::span<const double> h, NodeId b, std::size_t s,
                      double eta, CostWeights w = {}) {
    const BufferState state = t.state_of(b);
    if (s < 1 || s > state.length()) throw std::invalid_argument("action must satisfy 1 <= s <= l(b)");
    double skipped = 0.0;
    for (std::size_t k = 0; k + 1 < s; ++k) skipped += m.v().value(state.entries[k]);
    double total = w.distortion * skipped / m.mu() + w.age * eta * static_cast<double>(state.length() - s);
    double cont = 0.0;
    total += continuation(m, t, t.drop_oldest(b, s), w.distortion, [&](NodeId x, double c) { cont += c * h[x]; });
    return total + cont;
}

// ---------------------------------------------------------------------------
// Trie-based policy iteration

/// Recomputes parentone and cost (distance to parentone, in units of 1/mu)
/// from the action table. Length-1 states are their own B1 ancestor.
inline void rebuild_links(const Model& m, StateTree& t) {
    const double inv_mu = 1.0 / m.mu();
    t.parentone[0] = kNoNode;
    t.cost[0] = 0.0;
    for (NodeId id = 1; id < t.size(); ++id) {
        if (t.depth(id) == 1 || t.action[id] == 1) {
            t.parentone[id] = id;
            t.cost[id] = 0.0;
        } else {
            const NodeId par = t.parent(id);
            t.parentone[id] = t.parentone[par];
            t.cost[id] = t.cost[par] + detail::value_at(m, t, id) * inv_mu;
        }
    }
}

/// States of length >= 2 whose action is 1, breadth-first.
inline std::vector<NodeId> collect_b1(const StateTree& t) {
    std::vector<NodeId> out;
    for (NodeId id = static_cast<NodeId>(t.level_offset(2)); id < t.size(); ++id)
        if (t.action[id] == 1) out.push_back(id);
    return out;
}

/// Solves the reduced evaluation system over B1 and lambda, then fills the
/// relative value of every node into h_out. Needs links consistent with the
/// action table (see rebuild_links). Returns lambda.
inline double evaluate_policy(const Model& m, const StateTree& t, double eta, std::vector<double>& h_out,
                              CostWeights w = {}) {
    const std::vector<NodeId> b1 = collect_b1(t);
    const std::size_t dim = b1.size() + 1;
    std::unordered_map<NodeId, std::size_t> col;
    col.reserve(b1.size() * 2);
    for (std::size_t j = 0; j < b1.size(); ++j) col.emplace(b1[j], j + 1);

    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));

    // h(x) = w.distortion * cost(x) + h(parentone(x)), h(singleton) = 0.
    auto add_row = [&](Eigen::Index row, NodeId r) {
        double constant = continuation(m, t, r, w.distortion, [&](NodeId x, double c) {
            rhs(row) += c * w.distortion * t.cost[x];
            const auto it = col.find(t.parentone[x]);
            if (it != col.end()) A(row, static_cast<Eigen::Index>(it->second)) -= c;
        });
        rhs(row) += constant;
    };

    // v_min singleton: 0 + lambda = C(v_min, 1).
    A(0, 0) = 1.0;
    add_row(0, t.root());
    for (std::size_t j = 0; j < b1.size(); ++j) {
        const auto row = static_cast<Eigen::Index>(j + 1);
        A(row, 0) += 1.0;
        A(row, row) += 1.0;
        rhs(row) += w.age * eta * static_cast<double>(t.depth(b1[j]) - 1);
        add_row(row, t.parent(b1[j]));
    }

    Eigen::FullPivLU<Eigen::MatrixXd> lu;
    Eigen::VectorXd x;
    if (dim <= 64) {
        lu.compute(A);
        if (!lu.isInvertible()) throw SolverError("policy evaluation system is singular (policy not unichain?)");
        x = lu.solve(rhs);
    } else {
        Eigen::PartialPivLU<Eigen::MatrixXd> plu(A);
        x = plu.solve(rhs);
    }
    if (!x.allFinite()) throw SolverError("policy evaluation produced non-finite values");

    h_out.assign(t.size(), 0.0);
    for (NodeId id = 1; id < t.size(); ++id) {
        const NodeId one = t.parentone[id];
        double base = 0.0;
        if (const auto it = col.find(one); it != col.end()) base = x(static_cast<Eigen::Index>(it->second));
        h_out[id] = w.distortion * t.cost[id] + base;
    }
    return x(0);
}

/// Age and distortion parts of the average cost of the current action table,
/// by evaluating the two cost components separately.
inline std::pair<double, double> evaluate_components(const Model& m, const StateTree& t) {
    std::vector<double> scratch;
    const double delta_e = evaluate_policy(m, t, 1.0, scratch, {1.0, 0.0});
    const double d = evaluate_policy(m, t, 0.0, scratch, {0.0, 1.0});
    return {delta_e, d};
}

/// kappa(b) aggregates every continuation term of C(b', 1), parent(b') = b,
/// that involves arrivals of at least K - l(b) packets.
inline void kappa_update(const Model& m, StateTree& t) {
    const std::size_t K = t.K();
    const double inv_mu = 1.0 / m.mu();
    t.kappa[0] = m.z_tail(static_cast<long>(K)) * t.expectation_over_suffix(t.root(), K) +
                 m.v().mean() * inv_mu * m.z_excess_mean(static_cast<long>(K));
    for (std::size_t l = 1; l < K; ++l) {
        const double p = m.z_pmf(static_cast<long>(K - l));
        const double q = m.z_tail(static_cast<long>(K - l + 1));
        const auto begin = static_cast<NodeId>(t.level_offset(l));
        const auto end = static_cast<NodeId>(t.level_offset(l + 1));
        for (NodeId id = begin; id < end; ++id) {
            const double ext = p == 0.0 ? 0.0 : p * t.expectation_over_suffix(id, K - l);
            t.kappa[id] = ext + q * detail::value_at(m, t, id) * inv_mu + t.kappa[t.parent(id)];
        }
    }
}

/// C_h(b, 1) through the kappa recursion; requires kappa_update on the same h.
inline double c_value_oldest(const Model& m, const StateTree& t, NodeId b, double eta) {
    const std::size_t l = t.depth(b);
    const NodeId par = t.parent(b);
    double s = eta * static_cast<double>(l - 1);
    for (std::size_t z = 1; z + l <= t.K(); ++z) {
        const double pz = m.z_pmf(static_cast<long>(z));
        if (pz != 0.0) s += pz * t.expectation_over_suffix(par, z);
    }
    return s + t.kappa[par];
}

/// One improvement sweep. Updates action, temp, cost and parentone in place.
/// Returns true when any action changed.
inline bool policy_improve(const Model& m, StateTree& t, double eta, double lambda) {
    const double inv_mu = 1.0 / m.mu();
    std::vector<std::size_t> reach(m.alphabet());
    for (Symbol i = 0; i < reach.size(); ++i) reach[i] = buffer_bound_i(m, eta, i);

    kappa_update(m, t);
    bool changed = false;
    for (NodeId id = 1; id < t.level_offset(2) && id < t.size(); ++id) {
        changed |= t.action[id] != 1;
        t.action[id] = 1;
        t.temp[id] = lambda;
        t.cost[id] = 0.0;
        t.parentone[id] = id;
    }
    for (NodeId id = static_cast<NodeId>(t.level_offset(2)); id < t.size(); ++id) {
        const std::size_t l = t.depth(id);
        const NodeId par = t.parent(id);
        const Symbol head = t.first(id);
        const double step = m.v().value(head) * inv_mu;
        const double chained = t.temp[par] + step;
        std::int32_t next;
        // Selecting the oldest packet v_i is only useful while l - 1 < K_i(eta).
        if (l - 1 < reach[head]) {
            const double oldest = c_value_oldest(m, t, id, eta);
            if (oldest < chained - kTieTolerance) {
                next = 1;
                t.temp[id] = oldest;
                t.cost[id] = 0.0;
                t.parentone[id] = id;
            } else {
                next = t.action[par] + 1;
            }
        } else {
            next = t.action[par] + 1;
        }
        if (next != 1) {
            t.temp[id] = chained;
            t.cost[id] = t.cost[par] + step;
            t.parentone[id] = t.parentone[par];
        }
        changed |= next != t.action[id];
        t.action[id] = next;
    }
    return changed;
}

struct SolveOptions {
    std::size_t max_iters = 1000;
    bool compute_components = true;
};

namespace detail {

inline PolicySolution package(const Model& m, const StateTree& t, double eta, double lambda, std::size_t iters,
                              bool components) {
    PolicySolution sol;
    sol.eta = eta;
    sol.K = t.K();
    sol.alphabet = t.alphabet();
    sol.actions = t.action;
    sol.lambda = lambda;
    sol.h = t.h;
    sol.b1_set.push_back(1);
    for (NodeId id : collect_b1(t)) sol.b1_set.push_back(id);
    sol.iters = iters;
    if (components) {
        std::tie(sol.delta_e, sol.d) = evaluate_components(m, t);
    } else {
        sol.delta_e = std::numeric_limits<double>::quiet_NaN();
        sol.d = std::numeric_limits<double>::quiet_NaN();
    }
    return sol;
}

}  // namespace detail

/// Runs trie-based policy iteration starting from the action table already in
/// the tree (send-latest for a fresh tree, or a warm start).
inline PolicySolution solve_on_tree(const Model& m, StateTree& t, double eta, const SolveOptions& opt = {}) {
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    rebuild_links(m, t);
    std::vector<double> lambdas;
    for (std::size_t it = 1; it <= opt.max_iters; ++it) {
        const double lambda = evaluate_policy(m, t, eta, t.h);
        lambdas.push_back(lambda);
        if (!policy_improve(m, t, eta, lambda)) return detail::package(m, t, eta, lambda, it, opt.compute_components);
    }
    std::ostringstream os;
    os << "policy iteration did not converge in " << opt.max_iters << " iterations (eta = " << eta
       << ", K = " << t.K() << "); last lambdas:";
    for (std::size_t i = lambdas.size() > 5 ? lambdas.size() - 5 : 0; i < lambdas.size(); ++i) os << ' ' << lambdas[i];
    throw SolverError(os.str());
}

/// Optimal stationary policy at weight eta on V^{<=K}, K defaulting to K(eta).
inline PolicySolution policy_iteration(const Model& m, double eta, std::optional<std::size_t> K = std::nullopt,
                                       const SolveOptions& opt = {}) {
    StateTree t(m, K.value_or(buffer_bound(m, eta)));
    return solve_on_tree(m, t, eta, opt);
}

// ---------------------------------------------------------------------------
// Generic policy iteration (oracle)

namespace detail {

/// Full evaluation over every state of V^{<=K}; unknown vector reuses the
/// reference singleton's slot for lambda.
inline double evaluate_full(const Model& m, const StateTree& t, const std::vector<std::int32_t>& actions, double eta,
                            CostWeights w, std::vector<double>& h_out) {
    const NodeId ref = 1;
    const auto dim = static_cast<Eigen::Index>(t.size() - 1);
    Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(dim);
    auto slot = [](NodeId id) { return static_cast<Eigen::Index>(id - 1); };
    for (NodeId id = 1; id < t.size(); ++id) {
        const Eigen::Index row = slot(id);
        const BufferState b = t.state_of(id);
        const auto s = static_cast<std::size_t>(actions[id]);
        if (id != ref) A(row, slot(id)) += 1.0;
        A(row, slot(ref)) += 1.0;  // lambda
        double skipped = 0.0;
        for (std::size_t k = 0; k + 1 < s; ++k) skipped += m.v().value(b.entries[k]);
        rhs(row) += w.distortion * skipped / m.mu() + w.age * eta * static_cast<double>(b.length() - s);
        rhs(row) += continuation(m, t, t.drop_oldest(id, s), w.distortion, [&](NodeId x, double c) {
            if (x != ref) A(row, slot(x)) -= c;
        });
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(A);
    const Eigen::VectorXd x = lu.solve(rhs);
    if (!x.allFinite() || (A * x - rhs).lpNorm<Eigen::Infinity>() > 1e-8)
        throw SolverError("full policy evaluation failed (singular system)");
    h_out.assign(t.size(), 0.0);
    for (NodeId id = 2; id < t.size(); ++id) h_out[id] = x(slot(id));
    return x(slot(ref));
}

}  // namespace detail

/// Dense evaluation is O(nodes^3); beyond this the oracle refuses to run.
inline constexpr std::size_t kGenericMaxNodes = 4096;

/// Textbook policy iteration over all of V^{<=K}: full linear evaluation and
/// exhaustive argmin over feasible actions, ties to the largest s.
inline PolicySolution generic_policy_iteration(const Model& m, double eta, std::size_t K,
                                               const SolveOptions& opt = {}) {
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    if (StateTree::estimate_nodes(m.alphabet(), K) > kGenericMaxNodes)
        throw std::length_error("generic policy iteration is limited to " + std::to_string(kGenericMaxNodes) + " states");
    StateTree t(m, K);
    std::vector<std::int32_t> actions(t.size());
    for (NodeId id = 0; id < t.size(); ++id) actions[id] = static_cast<std::int32_t>(t.depth(id));
    std::vector<double> h;
    for (std::size_t it = 1; it <= opt.max_iters; ++it) {
        const double lambda = detail::evaluate_full(m, t, actions, eta, {}, h);
        bool changed = false;
        for (NodeId id = 1; id < t.size(); ++id) {
            const BufferState b = t.state_of(id);
            const std::size_t l = b.length();
            double best = std::numeric_limits<double>::infinity();
            std::vector<std::pair<std::size_t, double>> scored;
            for (std::size_t s = 1; s <= l; ++s) {
                if (!feasible_action(b, s)) continue;
                const double c = c_value(m, t, h, id, s, eta);
                scored.emplace_back(s, c);
                best = std::min(best, c);
            }
            std::size_t pick = 0;
            for (const auto& [s, c] : scored)
                if (c <= best + kTieTolerance) pick = std::max(pick, s);
            changed |= static_cast<std::int32_t>(pick) != actions[id];
            actions[id] = static_cast<std::int32_t>(pick);
        }
        if (!changed) {
            PolicySolution sol;
            sol.eta = eta;
            sol.K = K;
            sol.alphabet = t.alphabet();
            sol.actions = actions;
            sol.lambda = lambda;
            sol.h = h;
            sol.iters = it;
            sol.b1_set.push_back(1);
            for (NodeId id = static_cast<NodeId>(t.level_offset(2)); id < t.size(); ++id)
                if (actions[id] == 1) sol.b1_set.push_back(id);
            if (opt.compute_components) {
                std::vector<double> scratch;
                sol.delta_e = detail::evaluate_full(m, t, actions, 1.0, {1.0, 0.0}, scratch);
                sol.d = detail::evaluate_full(m, t, actions, 0.0, {0.0, 1.0}, scratch);
            }
            return sol;
        }
    }
    throw SolverError("generic policy iteration did not converge");
}

// ---------------------------------------------------------------------------
// Tradeoff sweep

struct TradeoffPoint {
    double eta = 0.0;
    double lambda = 0.0;
    double delta_e = 0.0;
    double d = 0.0;
    std::size_t K = 0;
    std::size_t b1_size = 0;
    std::size_t iters = 0;
};

struct TradeoffCurve {
    std::vector<TradeoffPoint> points;
    std::vector<std::pair<double, std::string>> failures;
    /// Abscissa of the intersection of the last two converse lines (NaN with < 2 points).
    double exact_until = std::numeric_limits<double>::quiet_NaN();

    /// max_m (J*(eta_m) - eta_m delta_e): the straight-line lower bound on D.
    double converse(double delta_e) const {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& p : points) best = std::max(best, p.lambda - p.eta * delta_e);
        return best;
    }

    void write_points_csv(std::ostream& os) const {
        os << "eta,lambda,delta_e,d,K,b1_size,iters\n";
        os.precision(17);
        for (const auto& p : points)
            os << p.eta << ',' << p.lambda << ',' << p.delta_e << ',' << p.d << ',' << p.K << ',' << p.b1_size << ','
               << p.iters << '\n';
    }

    void write_converse_csv(std::ostream& os) const {
        os << "eta,intercept\n";
        os.precision(17);
        for (const auto& p : points) os << p.eta << ',' << p.lambda << '\n';
    }
};

struct SweepOptions {
    SolveOptions solve;
    bool warm_start = true;
    /// Called after each solved eta with the tree it was solved on.
    std::function<void(const PolicySolution&)> on_solution;
};

/// Solves a strictly decreasing eta sequence, growing one tree and warm
/// starting from the previous optimal actions.
inline TradeoffCurve sweep_eta(const Model& m, const std::vector<double>& etas, const SweepOptions& opt = {}) {
    for (std::size_t i = 0; i < etas.size(); ++i) {
        if (!(etas[i] > 0.0)) throw std::invalid_argument("eta values must be positive");
        if (i > 0 && !(etas[i] < etas[i - 1])) throw std::invalid_argument("eta values must be strictly decreasing");
    }
    TradeoffCurve curve;
    std::optional<StateTree> tree;
    const std::size_t cap = max_tree_depth(m.alphabet());
    for (double eta : etas) {
        try {
            const std::size_t K = buffer_bound(m, eta);
            if (K > cap) {
                std::ostringstream os;
                os << "K(eta) = " << K << " exceeds the tree cap " << cap << " (about "
                   << StateTree::estimate_nodes(m.alphabet(), K) << " nodes)";
                throw std::length_error(os.str());
            }
            if (!tree || !opt.warm_start)
                tree.emplace(m, K);
            else if (K > tree->K())
                tree->extend(m, K);
            const PolicySolution sol = solve_on_tree(m, *tree, eta, opt.solve);
            curve.points.push_back({eta, sol.lambda, sol.delta_e, sol.d, sol.K, sol.b1_set.size(), sol.iters});
            if (opt.on_solution) opt.on_solution(sol);
        } catch (const std::exception& e) {
            curve.failures.emplace_back(eta, e.what());
        }
    }
    const auto n = curve.points.size();
    if (n >= 2) {
        const auto& a = curve.points[n - 2];
        const auto& b = curve.points[n - 1];
        curve.exact_until = (a.lambda - b.lambda) / (a.eta - b.eta);
    }
    return curve;
}

/// eta_max, eta_max r, eta_max r^2, ... down to eta_min (inclusive), count points.
inline std::vector<double> geometric_eta_grid(double eta_hi, double eta_lo, std::size_t count) {
    if (count == 0 || !(eta_lo > 0.0) || !(eta_hi >= eta_lo)) throw std::invalid_argument("invalid eta grid");
    std::vector<double> out;
    if (count == 1) return {eta_hi};
    const double ratio = std::pow(eta_lo / eta_hi, 1.0 / static_cast<double>(count - 1));
    for (std::size_t i = 0; i < count; ++i)
        out.push_back(i + 1 == count ? eta_lo : eta_hi * std::pow(ratio, static_cast<double>(i)));
    return out;
}

}  // namespace agedist
