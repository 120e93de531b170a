#pragma once

// The acceptance battery. Shared by the acceptance test binary and the
// `verify` subcommand; every check returns a pass flag and a short detail line.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "agedist/buffer_ignorant.hpp"
#include "agedist/model.hpp"
#include "agedist/oracles.hpp"
#include "agedist/sim.hpp"
#include "agedist/solver.hpp"
#include "agedist/state_tree.hpp"
#include "agedist/strategies.hpp"

namespace agedist {

struct CheckResult {
    int id = 0;
    std::string name;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

struct AcceptanceOptions {
    std::uint64_t horizon = 1'000'000;
    std::uint64_t seed = 20240601;
    /// Added to every J*(eta) before the converse-dominance check; a positive
    /// value is a negative control that must make that check fail.
    double lambda_perturbation = 0.0;
    /// Extra model whose solutions are screened for the structural checks.
    std::optional<Model> extra_model;
};

namespace settings {

/// V = {1, 20}, Pr(V = 1) = 0.7, Pr(Z = 1) = 0.2.
inline Model reference() { return Model(ImportanceDist({1.0, 20.0}, {0.7, 0.3}), InterspeakDist::geometric(0.2)); }
/// V = {1, 20}, Pr(V = 1) = 0.8, Pr(Z = 1) = 0.3.
inline Model sparse() { return Model(ImportanceDist({1.0, 20.0}, {0.8, 0.2}), InterspeakDist::geometric(0.3)); }

/// Decreasing eta grid from eta_max down to the value that needs K = k_max.
inline std::vector<double> converse_grid(const Model& m, std::size_t k_max, std::size_t count) {
    const double hi = eta_max(m);
    const double lo = (m.v().v_max() - m.v().v_min()) / (static_cast<double>(k_max) * m.mu());
    return geometric_eta_grid(hi, lo, count);
}

}  // namespace settings

namespace detail {

class Detail {
public:
    template <class T>
    Detail& operator<<(const T& x) {
        os_ << x;
        return *this;
    }
    std::string str() const { return os_.str(); }
    Detail() { os_ << std::setprecision(6); }

private:
    std::ostringstream os_;
};

inline bool within_se(double a, double b, double se, double k = 4.0) { return std::abs(a - b) <= k * se; }

/// Reach-bound violations: an older packet v_i selected with l - s >= K_i(eta).
inline std::size_t reach_violations(const Model& m, const PolicySolution& sol) {
    StateTree t(m, sol.K);
    std::size_t bad = 0;
    for (NodeId id = 1; id < t.size(); ++id) {
        const auto s = static_cast<std::size_t>(sol.actions[id]);
        const std::size_t l = t.depth(id);
        if (s == l) continue;
        const BufferState b = t.state_of(id);
        if (b.entries[s - 1] == 0 || l - s >= buffer_bound_i(m, sol.eta, b.entries[s - 1])) ++bad;
    }
    return bad;
}

struct StructureReport {
    std::size_t prefix_action = 0;
    std::size_t prefix_value = 0;
    std::size_t recursion = 0;
    std::size_t infeasible = 0;
    double worst_recursion = 0.0;
};

/// Prefix-decomposition checks on a solved tree.
inline StructureReport check_structure(const Model& m, const PolicySolution& sol, double tol = 1e-10) {
    StateTree t(m, sol.K);
    StructureReport r;
    std::vector<char> in_b1(t.size(), 0);
    for (NodeId id : sol.b1_set) in_b1[id] = 1;
    const double inv_mu = 1.0 / m.mu();
    for (NodeId id = 1; id < t.size(); ++id) {
        const std::size_t l = t.depth(id);
        const auto s = static_cast<std::size_t>(sol.actions[id]);
        const BufferState b = t.state_of(id);
        if (s < l && b.entries[s - 1] == 0) ++r.infeasible;
        if (l >= 2 && !in_b1[id]) {
            const double gap = std::abs(sol.h[id] - (m.v().value(t.first(id)) * inv_mu + sol.h[t.parent(id)]));
            r.worst_recursion = std::max(r.worst_recursion, gap);
            if (gap > tol) ++r.recursion;
        }
        double prefix_sum = 0.0;
        for (std::size_t k = 1; k < l; ++k) {  // prefix b_1..b_k, suffix of length l - k
            prefix_sum += m.v().value(b.entries[k - 1]);
            const NodeId suffix = t.drop_oldest(id, k);
            const auto s_suf = static_cast<std::size_t>(sol.actions[suffix]);
            if (!(s == k + s_suf || s <= k)) ++r.prefix_action;
            if (sol.h[suffix] > sol.h[id] + tol || sol.h[id] > prefix_sum * inv_mu + sol.h[suffix] + tol) ++r.prefix_value;
        }
    }
    return r;
}

/// Random model with |V| values (v_min not necessarily 1) and either a
/// geometric or a short finite interspeaking law.
inline Model random_model(std::mt19937_64& rng, std::size_t n) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::vector<double> values;
    double v = 0.5 + 2.0 * u(rng);
    for (std::size_t i = 0; i < n; ++i) {
        values.push_back(v);
        v += 1.0 + 15.0 * u(rng);
    }
    std::vector<double> probs(n);
    double total = 0.0;
    for (auto& p : probs) total += p = 0.1 + u(rng);
    for (auto& p : probs) p /= total;
    probs.back() = 1.0 - std::accumulate(probs.begin(), probs.end() - 1, 0.0);
    if (u(rng) < 0.5) return Model(ImportanceDist(values, probs), InterspeakDist::geometric(0.1 + 0.6 * u(rng)));
    std::vector<double> pmf(2 + static_cast<std::size_t>(5 * u(rng)));
    total = 0.0;
    for (auto& w : pmf) total += w = 0.05 + u(rng);
    for (auto& w : pmf) w /= total;
    pmf.back() = 1.0 - std::accumulate(pmf.begin(), pmf.end() - 1, 0.0);
    return Model(ImportanceDist(values, probs), InterspeakDist::finite_pmf(pmf));
}

template <class Fn>
CheckResult timed(int id, std::string name, Fn&& fn) {
    CheckResult r;
    r.id = id;
    r.name = std::move(name);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        fn(r);
    } catch (const std::exception& e) {
        r.pass = false;
        r.detail = std::string("exception: ") + e.what();
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

}  // namespace detail

/// Solutions collected across the battery for the structural checks.
struct SolvedPool {
    std::vector<std::pair<Model, PolicySolution>> items;
};

inline CheckResult check_dmin() {
    return detail::timed(1, "minimum distortion", [](CheckResult& r) {
        const double a = d_min(settings::reference());
        const double b = d_min(settings::sparse());
        r.pass = std::abs(a - 2.7) <= 1e-12 && std::abs(b - 0.7) <= 1e-12;
        r.detail = (detail::Detail() << std::setprecision(17) << "reference " << a << ", sparse " << b).str();
    });
}

inline CheckResult check_send_latest(SolvedPool& pool) {
    return detail::timed(2, "send-latest above eta_max", [&](CheckResult& r) {
        const Model m = settings::reference();
        const double expect = m.v().mean() * (m.mu() - 1.0) / m.mu();
        r.pass = true;
        detail::Detail d;
        for (double eta : {3.8, 4.0, 10.0}) {
            const PolicySolution sol = policy_iteration(m, eta);
            bool latest = true;
            StateTree t(m, sol.K);
            for (NodeId id = 1; id < t.size(); ++id) latest &= sol.actions[id] == static_cast<std::int32_t>(t.depth(id));
            const bool ok = latest && std::abs(sol.lambda - expect) <= 1e-9 && std::abs(sol.delta_e) <= 1e-9;
            r.pass &= ok;
            d << "eta=" << eta << " lambda=" << sol.lambda << (ok ? "" : " FAIL") << "; ";
            pool.items.emplace_back(m, sol);
        }
        r.detail = d.str();
    });
}

inline CheckResult check_extreme_state(SolvedPool& pool) {
    return detail::timed(3, "extreme-state thresholds", [&](CheckResult& r) {
        const Model m = settings::reference();
        r.pass = true;
        detail::Detail d;
        for (std::size_t L = 2; L <= 5; ++L) {
            const double eta_star = (m.v().v_max() - m.v().v_min()) / (m.mu() * static_cast<double>(L - 1));
            BufferState b;
            b.entries.assign(L, 0);
            b.entries[0] = 1;
            std::size_t below = 0, above = 0;
            for (int side : {-1, 1}) {
                const double eta = eta_star + side * 1e-6;
                const PolicySolution sol = policy_iteration(m, eta, std::max(L, buffer_bound(m, eta)));
                const StateTree t(m, sol.K);
                (side < 0 ? below : above) = sol.action_for(t, b);
                pool.items.emplace_back(m, sol);
            }
            const bool ok = below == 1 && above == L;
            r.pass &= ok;
            d << "L=" << L << ": " << below << "->" << above << (ok ? "" : " FAIL") << "; ";
        }
        r.detail = d.str();
    });
}

inline CheckResult check_oracle_equivalence(SolvedPool& pool, std::uint64_t seed) {
    return detail::timed(4, "efficient vs generic policy iteration", [&](CheckResult& r) {
        std::mt19937_64 rng(seed);
        std::size_t instances = 0, mismatched = 0;
        double worst = 0.0;
        for (int k = 0; k < 20; ++k) {
            const Model m = detail::random_model(rng, k % 2 == 0 ? 2 : 3);
            for (std::size_t K = 1; K <= 4; ++K)
                for (double eta : {0.5, 1.0, 2.0}) {
                    const PolicySolution fast = policy_iteration(m, eta, K);
                    const PolicySolution slow = generic_policy_iteration(m, eta, K);
                    ++instances;
                    const double gap = std::abs(fast.lambda - slow.lambda);
                    worst = std::max(worst, gap);
                    if (gap > 1e-9 || fast.actions != slow.actions) ++mismatched;
                    pool.items.emplace_back(m, fast);
                }
        }
        r.pass = mismatched == 0;
        r.detail = (detail::Detail() << instances << " instances, " << mismatched << " mismatches, max |dlambda| "
                                     << worst)
                       .str();
    });
}

inline CheckResult check_reach_bound(const SolvedPool& pool) {
    return detail::timed(5, "reach bound on solved actions", [&](CheckResult& r) {
        std::size_t bad = 0;
        for (const auto& [m, sol] : pool.items) bad += detail::reach_violations(m, sol);
        r.pass = bad == 0 && !pool.items.empty();
        r.detail = (detail::Detail() << pool.items.size() << " solved tables, " << bad << " violations").str();
    });
}

inline CheckResult check_structure(const SolvedPool& pool) {
    return detail::timed(6, "prefix bounds and parent recursion", [&](CheckResult& r) {
        std::size_t checked = 0, a = 0, v = 0, p2 = 0, inf = 0;
        double worst = 0.0;
        for (const auto& [m, sol] : pool.items) {
            if (sol.K > 5) continue;
            const auto rep = detail::check_structure(m, sol);
            ++checked;
            a += rep.prefix_action;
            v += rep.prefix_value;
            p2 += rep.recursion;
            inf += rep.infeasible;
            worst = std::max(worst, rep.worst_recursion);
        }
        r.pass = checked > 0 && a == 0 && v == 0 && p2 == 0 && inf == 0;
        r.detail = (detail::Detail() << checked << " trees; action " << a << ", value " << v << ", recursion " << p2
                                     << " (max gap " << worst << "), infeasible " << inf)
                       .str();
    });
}

inline CheckResult check_solver_vs_sim(SolvedPool& pool, const AcceptanceOptions& opt) {
    return detail::timed(7, "solver vs simulation", [&](CheckResult& r) {
        const Model m = settings::reference();
        r.pass = true;
        detail::Detail d;
        std::uint64_t seed = opt.seed;
        for (double eta : {0.25, 0.5, 1.0, 2.0}) {
            const PolicySolution sol = policy_iteration(m, eta);
            SimConfig cfg;
            cfg.horizon = opt.horizon;
            cfg.seed = ++seed;
            const SimResult sim = simulate_policy(m, cfg, TablePolicy(sol), sol.K);
            const double se = sim.se_cost(eta);
            const bool ok = detail::within_se(sim.cost(eta), sol.lambda, se);
            r.pass &= ok;
            d << "eta=" << eta << " lambda=" << sol.lambda << " sim=" << sim.cost(eta) << "+-" << se
              << (ok ? "" : " FAIL") << "; ";
            pool.items.emplace_back(m, sol);
        }
        r.detail = d.str();
    });
}

inline CheckResult check_strategies(const AcceptanceOptions& opt, const TradeoffCurve& curve) {
    return detail::timed(8, "closed-form strategies", [&](CheckResult& r) {
        const Model m = settings::reference();
        double worst_pi = 0.0;
        std::size_t sim_fail = 0, below = 0, sims = 0;
        double worst_margin = std::numeric_limits<double>::infinity();
        std::uint64_t seed = opt.seed + 100;
        for (Strategy s : {Strategy::S1, Strategy::S2, Strategy::S3}) {
            for (std::size_t K = 1; K <= 15; ++K) {
                const auto a = strategy_point(m, s, K);
                const auto b = oracle::strategy_point_numeric(m, s, K);
                for (std::size_t i = 0; i < a.pi.size(); ++i) worst_pi = std::max(worst_pi, std::abs(a.pi[i] - b.pi[i]));
            }
            for (std::size_t K : {1, 4, 12}) {
                const auto a = strategy_point(m, s, K);
                SimConfig cfg;
                cfg.horizon = opt.horizon;
                cfg.seed = ++seed;
                const SimResult sim = simulate_policy(m, cfg, strategy_policy(s, K), strategy_window(s, K));
                ++sims;
                if (!detail::within_se(sim.delta_e, a.delta_e, sim.se_delta) || !detail::within_se(sim.d, a.d, sim.se_d))
                    ++sim_fail;
            }
            for (std::size_t K = 1; K <= 20; ++K) {
                const auto a = strategy_point(m, s, K);
                for (const auto& pt : curve.points) {
                    const double margin = a.d + pt.eta * a.delta_e - (pt.lambda + opt.lambda_perturbation);
                    worst_margin = std::min(worst_margin, margin);
                    if (margin < -1e-6) ++below;
                }
            }
        }
        r.pass = worst_pi <= 1e-10 && sim_fail == 0 && below == 0 && !curve.points.empty();
        r.detail = (detail::Detail() << "max |dpi| " << worst_pi << ", sim mismatches " << sim_fail << "/" << sims
                                     << ", converse violations " << below << " (min margin " << worst_margin << ", "
                                     << curve.points.size() << " lines)")
                       .str();
    });
}

inline CheckResult check_threshold(const AcceptanceOptions& opt) {
    return detail::timed(9, "threshold policies", [&](CheckResult& r) {
        const Model m = settings::reference();
        double worst_sum = 0.0, worst_pi = 0.0, worst_tau0 = 0.0;
        std::size_t sim_fail = 0, sims = 0;
        std::uint64_t seed = opt.seed + 200;
        for (std::size_t N = 1; N <= 8; ++N) {
            const BinarySource src = BinarySource::from_model(m, N);
            for (std::size_t tau = 0; tau <= 30; ++tau) {
                const auto c = threshold_point_closed_form(src, tau);
                double total = 0.0;
                for (double x : c.pi) total += x;
                // states above tau + N carry a geometric tail
                if (tau > 0) total += c.pi[tau + 1] * std::pow(1.0 - src.p, static_cast<double>(N)) / src.p;
                else total += std::pow(1.0 - src.p, static_cast<double>(N));
                worst_sum = std::max(worst_sum, std::abs(total - 1.0));
                if (tau <= 12) {
                    const auto n = threshold_point_numeric(src, tau);
                    for (std::size_t l = 1; l < c.pi.size(); ++l) worst_pi = std::max(worst_pi, std::abs(c.pi[l] - n.pi[l]));
                }
            }
            worst_tau0 = std::max(worst_tau0, std::abs(threshold_point(src, 0).d -
                                                       src.mean_importance() * std::pow(1.0 - src.p, double(N))));
        }
        for (std::size_t N : {3, 6}) {
            const BinarySource src = BinarySource::from_model(m, N);
            for (std::size_t tau = 0; tau <= 12; ++tau) {
                const auto c = threshold_point(src, tau);
                SimConfig cfg;
                cfg.horizon = opt.horizon;
                cfg.seed = ++seed;
                const SimResult sim = simulate_bit_policy(cfg, src, threshold_length_policy(N, tau));
                ++sims;
                const bool age_ok = tau == 0 ? sim.delta_e == 0.0 : detail::within_se(sim.delta_e, c.delta_e, sim.se_delta);
                if (!age_ok || !detail::within_se(sim.d, c.d, sim.se_d)) ++sim_fail;
            }
        }
        r.pass = worst_sum <= 1e-10 && worst_pi <= 1e-9 && worst_tau0 == 0.0 && sim_fail == 0;
        r.detail = (detail::Detail() << "max |sum-1| " << worst_sum << ", max |dpi| " << worst_pi << ", tau=0 gap "
                                     << worst_tau0 << ", sim mismatches " << sim_fail << "/" << sims)
                       .str();
    });
}

inline CheckResult check_tunstall(const AcceptanceOptions& opt, const TradeoffCurve& curve) {
    return detail::timed(10, "Tunstall parsing", [&](CheckResult& r) {
        const Model m = settings::reference();
        std::size_t kraft_fail = 0, length_fail = 0, search_fail = 0, order_fail = 0, dicts = 0, beats_pi = 0;
        std::mt19937_64 rng(opt.seed + 300);
        std::uniform_real_distribution<double> u(0.05, 0.95);
        std::vector<double> sources{0.5, 0.3};
        for (int i = 0; i < 10; ++i) sources.push_back(u(rng));
        for (double q : sources) {
            for (std::size_t M = 2; M <= 64; ++M) {
                const auto dict = tunstall_build(q, M);
                ++dicts;
                if (std::abs(dict.kraft_sum() - 1.0) > 1e-12) ++kraft_fail;
                if ((M & (M - 1)) == 0 && dict.expected_length < std::log2(double(M)) - 1e-12) ++length_fail;
                if (M <= 8 && oracle::best_parse_length(M, q) > dict.expected_length + 1e-12) ++search_fail;
            }
        }
        std::uint64_t seed = opt.seed + 400;
        for (std::size_t N : {3, 6}) {
            const BinarySource src = BinarySource::from_model(m, N);
            const auto dict = tunstall_build(src.q, std::size_t{1} << N);
            for (std::size_t tau = 0; tau <= 12; ++tau) {
                const auto plain = threshold_point(src, tau);
                SimConfig cfg;
                cfg.horizon = opt.horizon;
                cfg.seed = ++seed;
                const SimResult bit = tunstall_threshold_point(src, tau, dict, cfg);
                if (bit.d > plain.d + 2.0 * bit.se_d) ++order_fail;
                if (N == 3 && plain.d < curve.converse(plain.delta_e) - 1e-6) ++beats_pi;
            }
        }
        r.pass = kraft_fail == 0 && length_fail == 0 && search_fail == 0 && order_fail == 0 && beats_pi > 0;
        r.detail = (detail::Detail() << dicts << " dictionaries; Kraft " << kraft_fail << ", E[L]<N " << length_fail
                                     << ", search " << search_fail << ", BIT>BI " << order_fail << "; BI N=3 points below PI "
                                     << beats_pi)
                       .str();
    });
}

inline CheckResult check_erasure(const AcceptanceOptions& opt) {
    return detail::timed(11, "erasure-channel equivalence", [&](CheckResult& r) {
        const Model m = settings::reference();
        const PolicySolution sol = policy_iteration(m, 1.0);
        const TablePolicy policy(sol);
        SimConfig cfg;
        cfg.horizon = opt.horizon;
        cfg.seed = opt.seed + 500;
        const SimResult direct = simulate_policy(m, cfg, policy, sol.K);
        const SimResult shared = simulate_erasure(m, cfg, policy, sol.K);
        cfg.seed += 1;
        const SimResult fresh = simulate_erasure(m, cfg, policy, sol.K);
        auto close = [](const SimResult& a, const SimResult& b) {
            return detail::within_se(a.delta_e, b.delta_e, std::hypot(a.se_delta, b.se_delta)) &&
                   detail::within_se(a.d, b.d, std::hypot(a.se_d, b.se_d));
        };
        r.pass = close(direct, shared) && close(direct, fresh);
        r.detail = (detail::Detail() << "direct (" << direct.delta_e << ", " << direct.d << "), erasure same stream ("
                                     << shared.delta_e << ", " << shared.d << "), erasure fresh stream (" << fresh.delta_e
                                     << ", " << fresh.d << ")")
                       .str();
    });
}

/// Solves a few weights on a user model and screens them structurally.
inline CheckResult check_extra_model(const Model& m, const AcceptanceOptions& opt) {
    return detail::timed(12, "supplied model", [&](CheckResult& r) {
        r.pass = true;
        detail::Detail d;
        const std::size_t cap = std::min<std::size_t>(max_tree_depth(m.alphabet()), 12);
        std::uint64_t seed = opt.seed + 600;
        for (double frac : {1.0, 0.5, 0.25}) {
            const double eta = std::max(eta_max(m), 1e-9) * frac;
            if (!(eta > 0.0) || buffer_bound(m, eta) > cap) continue;
            const PolicySolution sol = policy_iteration(m, eta);
            SimConfig cfg;
            cfg.horizon = opt.horizon;
            cfg.seed = ++seed;
            const SimResult sim = simulate_policy(m, cfg, TablePolicy(sol), sol.K);
            const bool ok = detail::reach_violations(m, sol) == 0 && std::abs(sol.d + eta * sol.delta_e - sol.lambda) <= 1e-9 &&
                            sol.d >= d_min(m) - 1e-9 && detail::within_se(sim.cost(eta), sol.lambda, sim.se_cost(eta));
            r.pass &= ok;
            d << "eta=" << eta << " K=" << sol.K << " lambda=" << sol.lambda << (ok ? "" : " FAIL") << "; ";
        }
        r.detail = d.str();
    });
}

inline std::vector<CheckResult> run_acceptance(const AcceptanceOptions& opt,
                                               const std::function<void(const CheckResult&)>& on_result = {}) {
    std::vector<CheckResult> out;
    auto emit = [&](CheckResult r) { out.push_back(std::move(r)); };
    SolvedPool pool;
    const Model ref = settings::reference();
    const TradeoffCurve curve = sweep_eta(ref, settings::converse_grid(ref, 17, 40));

    emit(check_dmin());
    emit(check_send_latest(pool));
    emit(check_extreme_state(pool));
    emit(check_oracle_equivalence(pool, opt.seed));
    emit(check_solver_vs_sim(pool, opt));
    {
        // deeper solutions from the sweep also feed the structural checks
        SweepOptions so;
        so.on_solution = [&](const PolicySolution& s) {
            if (s.K <= 8) pool.items.emplace_back(ref, s);
        };
        sweep_eta(ref, settings::converse_grid(ref, 8, 12), so);
    }
    emit(check_reach_bound(pool));
    emit(check_structure(pool));
    emit(check_strategies(opt, curve));
    emit(check_threshold(opt));
    emit(check_tunstall(opt, curve));
    emit(check_erasure(opt));
    if (opt.extra_model) emit(check_extra_model(*opt.extra_model, opt));
    std::sort(out.begin(), out.end(), [](const CheckResult& a, const CheckResult& b) { return a.id < b.id; });
    if (on_result)
        for (const auto& r : out) on_result(r);
    return out;
}

inline void print_check(std::ostream& os, const CheckResult& r) {
    os << (r.pass ? "PASS" : "FAIL") << "  [" << std::setw(2) << r.id << "] " << r.name << "  (" << std::fixed
       << std::setprecision(2) << r.seconds << " s)  " << std::defaultfloat << r.detail << '\n';
}

}  // namespace agedist
