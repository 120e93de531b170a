#pragma once

// Subcommand bodies behind the `agedist` executable. Argument parsing lives in
// the tool; everything here takes a filled ExperimentSpec so the commands can
// be driven directly from tests.

#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "agedist/acceptance.hpp"
#include "agedist/buffer_ignorant.hpp"
#include "agedist/model.hpp"
#include "agedist/policy_io.hpp"
#include "agedist/sim.hpp"
#include "agedist/solver.hpp"
#include "agedist/strategies.hpp"

namespace agedist::cli {

enum ExitCode : int { kOk = 0, kFailure = 1, kUsage = 2 };

/// Bad flags or unreadable inputs; reported before any work is done.
class UsageError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct ExperimentSpec {
    std::string model_path;
    std::string out;            // empty writes to stdout
    std::string converse_out;   // tradeoff only; defaults to <out>.converse.csv
    std::string policy_in;      // simulate: stored policy file
    std::string policy_out;     // tradeoff: store the last solved policy
    std::uint64_t seed = 1;
    std::uint64_t horizon = 1'000'000;
    std::string eta_list;       // "4,2,1"
    std::string eta_grid;       // "hi:lo:count"; hi may be "max", lo may be "kN"
    std::string k_range = "1..20";
    std::string tau_range = "0..12";
    std::string n_bits = "3,6";
    std::string mode = "direct";  // direct | erasure | bits
    std::string strategy;       // S1 | S2 | S3 | latest
    std::size_t window = 0;     // K for a named strategy
    std::optional<std::size_t> tau;
    bool tunstall = false;
    double lambda_perturbation = 0.0;
};

// ---------------------------------------------------------------------------
// Parsing helpers

inline std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream is(s);
    while (std::getline(is, cur, sep))
        if (!cur.empty()) out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, const char* what) {
    std::size_t used = 0;
    double x = 0.0;
    try {
        x = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used != s.size() || s.empty()) throw UsageError(std::string("bad ") + what + ": '" + s + "'");
    return x;
}

inline std::size_t parse_size(const std::string& s, const char* what) {
    const double x = parse_double(s, what);
    if (x < 0 || x != static_cast<double>(static_cast<std::size_t>(x)))
        throw UsageError(std::string("bad ") + what + ": '" + s + "'");
    return static_cast<std::size_t>(x);
}

/// "a..b", "a:b" or a single value; inclusive and nonempty.
inline std::pair<std::size_t, std::size_t> parse_range(const std::string& s, const char* what) {
    std::string lo = s, hi = s;
    if (auto p = s.find(".."); p != std::string::npos) {
        lo = s.substr(0, p);
        hi = s.substr(p + 2);
    } else if (auto q = s.find(':'); q != std::string::npos) {
        lo = s.substr(0, q);
        hi = s.substr(q + 1);
    }
    const std::size_t a = parse_size(lo, what), b = parse_size(hi, what);
    if (b < a) throw UsageError(std::string("empty ") + what + ": '" + s + "'");
    return {a, b};
}

inline std::vector<std::size_t> parse_size_list(const std::string& s, const char* what) {
    std::vector<std::size_t> out;
    for (const auto& tok : split(s, ',')) out.push_back(parse_size(tok, what));
    if (out.empty()) throw UsageError(std::string("empty ") + what);
    return out;
}

/// Resolves --eta-list or --eta-grid into a strictly decreasing sequence.
inline std::vector<double> resolve_etas(const ExperimentSpec& spec, const Model& m) {
    if (!spec.eta_list.empty() && !spec.eta_grid.empty()) throw UsageError("give either --eta-list or --eta-grid, not both");
    std::vector<double> etas;
    if (!spec.eta_list.empty()) {
        for (const auto& tok : split(spec.eta_list, ',')) etas.push_back(parse_double(tok, "eta"));
    } else if (!spec.eta_grid.empty()) {
        const auto parts = split(spec.eta_grid, ':');
        if (parts.size() != 3) throw UsageError("--eta-grid expects hi:lo:count");
        const double hi = parts[0] == "max" ? eta_max(m) : parse_double(parts[0], "eta");
        double lo;
        if (parts[1].size() > 1 && (parts[1][0] == 'k' || parts[1][0] == 'K')) {
            const std::size_t k = parse_size(parts[1].substr(1), "buffer size");
            if (k == 0) throw UsageError("buffer size in --eta-grid must be positive");
            lo = eta_max(m) / static_cast<double>(k);
        } else {
            lo = parse_double(parts[1], "eta");
        }
        const std::size_t count = parse_size(parts[2], "grid size");
        if (count == 0 || !(lo > 0.0) || hi < lo) throw UsageError("empty or inverted --eta-grid");
        etas = geometric_eta_grid(hi, lo, count);
    }
    if (etas.empty()) throw UsageError("no eta values given (use --eta-list or --eta-grid)");
    for (std::size_t i = 0; i < etas.size(); ++i) {
        if (!(etas[i] > 0.0)) throw UsageError("eta values must be positive");
        if (i > 0 && !(etas[i] < etas[i - 1])) throw UsageError("eta values must be strictly decreasing");
    }
    return etas;
}

inline Model load_model(const ExperimentSpec& spec) {
    if (spec.model_path.empty()) throw UsageError("--model is required");
    try {
        return Model::load(spec.model_path);
    } catch (const std::exception& e) {
        throw UsageError(e.what());
    }
}

/// Output sink: a file when a path is given, else the supplied stream.
class Sink {
public:
    Sink(const std::string& path, std::ostream& fallback) {
        if (path.empty()) {
            os_ = &fallback;
            return;
        }
        file_ = std::make_unique<std::ofstream>(path);
        if (!*file_) throw UsageError("cannot write " + path);
        os_ = file_.get();
    }
    std::ostream& operator*() { return *os_; }

private:
    std::unique_ptr<std::ofstream> file_;
    std::ostream* os_ = nullptr;
};

// ---------------------------------------------------------------------------
// Commands

inline int cmd_tradeoff(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
    const Model m = load_model(spec);
    const std::vector<double> etas = resolve_etas(spec, m);
    std::optional<PolicySolution> last;
    SweepOptions opt;
    if (!spec.policy_out.empty()) opt.on_solution = [&](const PolicySolution& s) { last = s; };
    const TradeoffCurve curve = sweep_eta(m, etas, opt);
    for (const auto& [eta, why] : curve.failures) err << "warning: skipped eta=" << eta << ": " << why << '\n';
    {
        Sink points(spec.out, out);
        curve.write_points_csv(*points);
    }
    std::string conv = spec.converse_out;
    if (conv.empty() && !spec.out.empty()) conv = spec.out + ".converse.csv";
    if (!conv.empty()) {
        Sink c(conv, out);
        curve.write_converse_csv(*c);
    }
    if (last) save_policy(spec.policy_out, m, *last);
    std::size_t kmax = 0;
    for (const auto& p : curve.points) kmax = std::max(kmax, p.K);
    err << "solved " << curve.points.size() << " of " << etas.size() << " weights, max K " << kmax;
    if (curve.points.size() >= 2) err << ", converse exact for delta_e >= " << curve.exact_until;
    err << '\n';
    return curve.points.empty() ? kFailure : kOk;
}

inline int cmd_strategies(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
    const Model m = load_model(spec);
    const auto [k_lo, k_hi] = parse_range(spec.k_range, "K range");
    if (k_lo < 1) throw UsageError("K range must start at 1 or above");
    std::vector<Strategy> which{Strategy::S1, Strategy::S2, Strategy::S3};
    if (!spec.strategy.empty()) {
        which.clear();
        try {
            for (const auto& tok : split(spec.strategy, ',')) which.push_back(parse_strategy(tok));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    std::vector<StrategyCurvePoint> pts;
    try {
        for (Strategy s : which) {
            auto c = strategy_curve(m, s, k_lo, k_hi);
            pts.insert(pts.end(), c.begin(), c.end());
        }
    } catch (const std::invalid_argument& e) {
        throw UsageError(std::string("unsupported model: ") + e.what());
    }
    Sink sink(spec.out, out);
    write_strategy_csv(*sink, pts, d_min(m));
    err << "wrote " << pts.size() << " strategy points\n";
    return kOk;
}

inline int cmd_bufferignorant(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
    const Model m = load_model(spec);
    const auto [t_lo, t_hi] = parse_range(spec.tau_range, "tau range");
    const auto bits = parse_size_list(spec.n_bits, "bit count");
    std::vector<BufferIgnorantRow> rows;
    std::uint64_t seed = spec.seed;
    for (std::size_t N : bits) {
        if (N == 0) throw UsageError("bit count must be positive");
        BinarySource src = [&] {
            try {
                return BinarySource::from_model(m, N);
            } catch (const std::invalid_argument& e) {
                throw UsageError(std::string("unsupported model: ") + e.what());
            }
        }();
        const auto dict = tunstall_build(src.q, std::size_t{1} << N);
        for (std::size_t tau = t_lo; tau <= t_hi; ++tau) {
            const ThresholdPoint plain = threshold_point(src, tau);
            rows.push_back({"BI", N, tau, plain.delta_e, plain.d});
            SimConfig cfg;
            cfg.horizon = spec.horizon;
            cfg.seed = seed++;
            const SimResult coded = tunstall_threshold_point(src, tau, dict, cfg);
            rows.push_back({"BIT", N, tau, plain.delta_e, coded.d});
        }
    }
    Sink sink(spec.out, out);
    write_buffer_ignorant_csv(*sink, rows);
    err << "wrote " << rows.size() << " rows\n";
    return kOk;
}

inline int cmd_simulate(const ExperimentSpec& spec, std::ostream& out, std::ostream& err) {
    const Model m = load_model(spec);
    SimConfig cfg;
    cfg.horizon = spec.horizon;
    cfg.seed = spec.seed;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    SimResult res;
    if (spec.mode == "bits") {
        if (!spec.tau) throw UsageError("bits mode needs --tau");
        const auto N = parse_size_list(spec.n_bits, "bit count");
        if (N.size() != 1 || N[0] == 0) throw UsageError("bits mode needs a single positive --n-bits");
        const BinarySource src = BinarySource::from_model(m, N[0]);
        if (spec.tunstall) {
            const auto dict = tunstall_build(src.q, std::size_t{1} << N[0]);
            res = tunstall_threshold_point(src, *spec.tau, dict, cfg);
        } else {
            res = simulate_bit_policy(cfg, src, threshold_length_policy(N[0], *spec.tau));
        }
    } else if (spec.mode == "direct" || spec.mode == "erasure") {
        BufferPolicy policy;
        std::size_t window = 0;
        if (!spec.policy_in.empty() && !spec.strategy.empty()) throw UsageError("give either --policy or --strategy");
        if (!spec.policy_in.empty()) {
            StoredPolicy sp;
            try {
                sp = load_policy(spec.policy_in, m);
            } catch (const std::exception& e) {
                throw UsageError(e.what());
            }
            policy = TablePolicy(sp.actions, sp.alphabet, sp.K);
            window = sp.K;
        } else if (spec.strategy == "latest") {
            policy = send_latest_policy();
        } else if (!spec.strategy.empty()) {
            Strategy s;
            try {
                s = parse_strategy(spec.strategy);
            } catch (const std::invalid_argument& e) {
                throw UsageError(std::string("unknown policy source: ") + e.what());
            }
            if (spec.window < 1) throw UsageError("a named strategy needs --k >= 1");
            policy = strategy_policy(s, spec.window);
            window = strategy_window(s, spec.window);
        } else {
            throw UsageError("unknown policy source: give --policy FILE or --strategy NAME");
        }
        res = spec.mode == "erasure" ? simulate_erasure(m, cfg, policy, window) : simulate_policy(m, cfg, policy, window);
    } else {
        throw UsageError("unknown --mode '" + spec.mode + "' (direct, erasure or bits)");
    }
    Sink sink(spec.out, out);
    *sink << res.to_json().dump(2) << '\n';
    err << "simulated " << res.horizon << " slots\n";
    return kOk;
}

inline int cmd_verify(const ExperimentSpec& spec, std::ostream& out, std::ostream& /*err*/) {
    AcceptanceOptions opt;
    opt.horizon = spec.horizon;
    opt.seed = spec.seed;
    opt.lambda_perturbation = spec.lambda_perturbation;
    if (!spec.model_path.empty()) opt.extra_model = load_model(spec);
    bool all = true;
    run_acceptance(opt, [&](const CheckResult& r) {
        print_check(out, r);
        out.flush();
        all &= r.pass;
    });
    out << (all ? "all checks passed" : "some checks FAILED") << '\n';
    return all ? kOk : kFailure;
}

/// Runs a command, mapping usage errors to exit code 2 and other errors to 1.
template <class Cmd>
int run(Cmd&& cmd, const ExperimentSpec& spec, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    try {
        return cmd(spec, out, err);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << '\n';
        return kUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kFailure;
    }
}

}  // namespace agedist::cli
