#pragma once

// Slot-level Monte Carlo of the packet-selection model.
//
// Slot t: packet V_t arrives; if t is a speaking time the policy picks s from
// the buffer of unsent packets (oldest first), packets 1..s-1 are skipped for
// good and s is delivered. Excess age is recorded per speaking instant as
// l - s, distortion per slot as skipped importance. A bounded window K drops
// (and charges) the oldest packet once more than K are buffered.
//
// Randomness: each stream (arrivals, speaking) is a std::mt19937_64 seeded
// with splitmix64(seed + stream). Erasure mode reuses the speaking stream as
// the channel success stream, so both modes see the same sample path.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "agedist/buffer_ignorant.hpp"
#include "agedist/model.hpp"
#include "agedist/solver.hpp"
#include "agedist/state_tree.hpp"
#include "agedist/strategies.hpp"

namespace agedist {

struct SimConfig {
    std::uint64_t horizon = 1'000'000;
    std::uint64_t seed = 1;
    std::uint64_t burn_in = 0;  // 0 selects horizon / 100
    std::size_t batches = 40;

    std::uint64_t effective_burn_in() const { return burn_in ? burn_in : horizon / 100; }

    void validate() const {
        if (horizon < 10'000) throw std::invalid_argument("simulation horizon must be at least 10^4 slots");
        if (horizon < 10 * effective_burn_in()) throw std::invalid_argument("burn-in must be at most a tenth of the horizon");
        if (batches < 30) throw std::invalid_argument("batch means need at least 30 batches");
    }
};

struct SimResult {
    double delta_e = 0.0;
    double se_delta = 0.0;
    double d = 0.0;
    double se_d = 0.0;
    double raw_age = 0.0;  // time-average instantaneous age
    double se_raw_age = 0.0;
    std::size_t batches = 0;
    std::uint64_t horizon = 0;
    std::uint64_t seed = 0;
    std::uint64_t speaking_instants = 0;

    std::vector<double> batch_delta, batch_d;

    double cost(double eta) const { return d + eta * delta_e; }

    /// Standard error of d + eta delta_e from the per-batch costs.
    double se_cost(double eta) const {
        const std::size_t b = batch_delta.size();
        if (b < 2) return 0.0;
        double mean = 0.0;
        for (std::size_t i = 0; i < b; ++i) mean += batch_d[i] + eta * batch_delta[i];
        mean /= static_cast<double>(b);
        double ss = 0.0;
        for (std::size_t i = 0; i < b; ++i) {
            const double x = batch_d[i] + eta * batch_delta[i] - mean;
            ss += x * x;
        }
        return std::sqrt(ss / static_cast<double>(b - 1) / static_cast<double>(b));
    }

    nlohmann::json to_json() const {
        return {{"delta_e", delta_e}, {"se_delta", se_delta}, {"d", d},
                {"se_d", se_d},       {"horizon", horizon},   {"seed", seed}};
    }
};

/// Selection rule: buffer of symbols, oldest first -> 1-based action.
using BufferPolicy = std::function<std::size_t(std::span<const Symbol>)>;
/// Length-only rule for bit buffers: l -> s.
using LengthPolicy = std::function<std::size_t(std::size_t)>;

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

enum class SimStream : std::uint64_t { Arrivals = 1, Speaking = 2, Bits = 3 };

inline std::mt19937_64 make_stream(std::uint64_t seed, SimStream s) {
    return std::mt19937_64(splitmix64(seed + static_cast<std::uint64_t>(s)));
}

namespace detail {

/// Per-batch accumulators over the post-burn-in slots.
class BatchMeans {
public:
    BatchMeans(const SimConfig& cfg) : cfg_(cfg), start_(cfg.effective_burn_in()) {
        const std::uint64_t span = cfg.horizon - start_;
        per_batch_ = span / cfg.batches;
        age_.assign(cfg.batches, 0.0);
        speaks_.assign(cfg.batches, 0.0);
        dist_.assign(cfg.batches, 0.0);
        raw_.assign(cfg.batches, 0.0);
    }

    /// Batch index of slot t (1-based), or -1 outside the measured range.
    long batch_of(std::uint64_t t) const {
        if (t <= start_) return -1;
        const std::uint64_t i = (t - start_ - 1) / per_batch_;
        return i < cfg_.batches ? static_cast<long>(i) : -1;
    }

    void speak(std::uint64_t t, double excess) {
        if (const long b = batch_of(t); b >= 0) {
            age_[b] += excess;
            speaks_[b] += 1.0;
        }
    }
    void distort(std::uint64_t t, double value) {
        if (const long b = batch_of(t); b >= 0) dist_[b] += value;
    }
    void age(std::uint64_t t, double value) {
        if (const long b = batch_of(t); b >= 0) raw_[b] += value;
    }

    SimResult finish() const {
        SimResult r;
        r.batches = cfg_.batches;
        r.horizon = cfg_.horizon;
        r.seed = cfg_.seed;
        const double B = static_cast<double>(cfg_.batches);
        const double slots = static_cast<double>(per_batch_);
        double age_sum = 0.0, speaks = 0.0, dist_sum = 0.0, raw_sum = 0.0;
        for (std::size_t b = 0; b < cfg_.batches; ++b) {
            age_sum += age_[b];
            speaks += speaks_[b];
            dist_sum += dist_[b];
            raw_sum += raw_[b];
            r.batch_delta.push_back(speaks_[b] > 0 ? age_[b] / speaks_[b] : 0.0);
            r.batch_d.push_back(dist_[b] / slots);
        }
        r.speaking_instants = static_cast<std::uint64_t>(speaks);
        r.delta_e = speaks > 0 ? age_sum / speaks : 0.0;
        r.d = dist_sum / (slots * B);
        r.raw_age = raw_sum / (slots * B);
        auto se = [&](auto value_of, double mean) {
            double ss = 0.0;
            for (std::size_t b = 0; b < cfg_.batches; ++b) {
                const double x = value_of(b) - mean;
                ss += x * x;
            }
            return std::sqrt(ss / (B - 1.0) / B);
        };
        r.se_delta = se([&](std::size_t b) { return r.batch_delta[b]; }, r.delta_e);
        r.se_d = se([&](std::size_t b) { return r.batch_d[b]; }, r.d);
        r.se_raw_age = se([&](std::size_t b) { return raw_[b] / slots; }, r.raw_age);
        return r;
    }

private:
    SimConfig cfg_;
    std::uint64_t start_;
    std::uint64_t per_batch_ = 1;
    std::vector<double> age_, speaks_, dist_, raw_;
};

inline void check_feasible(std::span<const Symbol> b, std::size_t s) {
    if (s >= 1 && s <= b.size() && (s == b.size() || b[s - 1] != 0)) return;
    std::ostringstream os;
    os << "policy returned infeasible action " << s << " at state [";
    for (std::size_t i = 0; i < b.size(); ++i) os << (i ? " " : "") << b[i];
    os << "]";
    throw std::runtime_error(os.str());
}

enum class SpeakMode { Direct, Erasure };

inline SimResult run_packets(const Model& m, const SimConfig& cfg, const BufferPolicy& policy, std::size_t window,
                             SpeakMode mode) {
    cfg.validate();
    if (mode == SpeakMode::Erasure && !m.z().is_geometric())
        throw std::invalid_argument("erasure mode needs geometric interspeaking times");
    auto arrivals = make_stream(cfg.seed, SimStream::Arrivals);
    auto speaking = make_stream(cfg.seed, SimStream::Speaking);
    std::discrete_distribution<Symbol> draw_v(m.v().probs().begin(), m.v().probs().end());
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::discrete_distribution<std::size_t> draw_z;
    if (!m.z().is_geometric()) draw_z = {m.z().pmf_table().begin(), m.z().pmf_table().end()};

    const double p = m.z().is_geometric() ? m.z().geometric_p() : 0.0;
    BatchMeans acc(cfg);
    std::vector<Symbol> buf;
    std::uint64_t last_delivered = 0;  // timestamp of the newest delivered packet
    std::uint64_t next_speak = 0;
    if (!m.z().is_geometric()) next_speak = draw_z(speaking) + 1;

    for (std::uint64_t t = 1; t <= cfg.horizon; ++t) {
        buf.push_back(draw_v(arrivals));
        if (window && buf.size() > window) {
            acc.distort(t, m.v().value(buf.front()));
            buf.erase(buf.begin());
        }
        acc.age(t, static_cast<double>(t - last_delivered));

        bool speaks;
        std::size_t s = 0;
        if (mode == SpeakMode::Erasure) {
            // commit before learning whether the slot is erased
            s = policy(buf);
            check_feasible(buf, s);
            speaks = unif(speaking) < p;
        } else if (m.z().is_geometric()) {
            speaks = unif(speaking) < p;
        } else {
            speaks = t == next_speak;
            if (speaks) next_speak = t + draw_z(speaking) + 1;
        }
        if (!speaks) continue;
        if (mode == SpeakMode::Direct) {
            s = policy(buf);
            check_feasible(buf, s);
        }
        const std::size_t l = buf.size();
        double skipped = 0.0;
        for (std::size_t k = 0; k + 1 < s; ++k) skipped += m.v().value(buf[k]);
        acc.distort(t, skipped);
        acc.speak(t, static_cast<double>(l - s));
        last_delivered = t - (l - s);
        buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(s));
    }
    return acc.finish();
}

}  // namespace detail

/// Direct model: the policy acts at speaking times.
inline SimResult simulate_policy(const Model& m, const SimConfig& cfg, const BufferPolicy& policy,
                                 std::size_t window = 0) {
    return detail::run_packets(m, cfg, policy, window, detail::SpeakMode::Direct);
}

/// Erasure channel with feedback after transmission: every slot the sender
/// commits to C_t = t + s(B_t) - l(B_t); the packet is delivered with
/// probability Pr(Z = 1).
inline SimResult simulate_erasure(const Model& m, const SimConfig& cfg, const BufferPolicy& policy,
                                  std::size_t window = 0) {
    return detail::run_packets(m, cfg, policy, window, detail::SpeakMode::Erasure);
}

// ---------------------------------------------------------------------------
// Policy adapters

/// Looks up a solved action table by trie index.
class TablePolicy {
public:
    TablePolicy(std::vector<std::int32_t> actions, std::size_t alphabet, std::size_t K)
        : actions_(std::move(actions)), n_(alphabet), K_(K) {
        offset_.assign(K_ + 2, 0);
        std::uint64_t w = 1;
        for (std::size_t l = 1; l < offset_.size(); ++l, w *= n_) offset_[l] = offset_[l - 1] + w;
        if (actions_.size() != offset_[K_ + 1]) throw std::invalid_argument("action table size does not match the tree");
    }

    explicit TablePolicy(const PolicySolution& sol) : TablePolicy(sol.actions, sol.alphabet, sol.K) {}

    std::size_t K() const { return K_; }

    std::size_t operator()(std::span<const Symbol> b) const {
        if (b.size() > K_) throw std::out_of_range("buffer longer than the policy's K");
        std::uint64_t c = 0;
        for (Symbol s : b) c = c * n_ + s;
        return static_cast<std::size_t>(actions_[offset_[b.size()] + c]);
    }

private:
    std::vector<std::int32_t> actions_;
    std::size_t n_, K_;
    std::vector<std::uint64_t> offset_;
};

inline BufferPolicy send_latest_policy() {
    return [](std::span<const Symbol> b) { return b.size(); };
}

inline BufferPolicy strategy_policy(Strategy s, std::size_t K) {
    return [s, K](std::span<const Symbol> b) { return strategy_action(s, K, b); };
}

// ---------------------------------------------------------------------------
// Bit buffers

/// Simulates N-bit transmissions driven by buffer length only. With a
/// dictionary, any step that would skip bits instead parses backward from the
/// newest bit it would send, and conveys the parsed word.
inline SimResult simulate_bit_policy(const SimConfig& cfg, const BinarySource& src, const LengthPolicy& policy,
                                     const TunstallDictionary* dict = nullptr) {
    cfg.validate();
    src.validate();
    auto bits_rng = make_stream(cfg.seed, SimStream::Bits);
    auto speaking = make_stream(cfg.seed, SimStream::Speaking);
    std::bernoulli_distribution draw_bit(src.q);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    detail::BatchMeans acc(cfg);
    std::vector<std::uint8_t> buf, parse;
    auto importance = [&](std::uint8_t b) { return b ? src.v : src.v_low; };

    for (std::uint64_t t = 1; t <= cfg.horizon; ++t) {
        buf.push_back(draw_bit(bits_rng) ? 1 : 0);
        if (!(unif(speaking) < src.p)) continue;
        const std::size_t l = buf.size();
        const std::size_t s = policy(l);
        if (s < 1 || s > l) throw std::runtime_error("length policy returned an infeasible action");
        std::size_t sent = std::min(s, src.N);
        if (dict && s > src.N) {
            parse.assign(buf.rend() - static_cast<std::ptrdiff_t>(s), buf.rend());
            sent = tunstall_parse_length(*dict, parse);
        }
        double skipped = 0.0;
        for (std::size_t k = 0; k + sent < s; ++k) skipped += importance(buf[k]);
        acc.distort(t, skipped);
        acc.speak(t, static_cast<double>(l - s));
        buf.erase(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(s));
    }
    return acc.finish();
}

inline LengthPolicy threshold_length_policy(std::size_t N, std::size_t tau) {
    return [N, tau](std::size_t l) { return threshold_action(N, tau, l); };
}

/// Threshold policy with Tunstall parsing: delta_e equals the plain policy's,
/// distortion is estimated by simulation.
inline SimResult tunstall_threshold_point(const BinarySource& src, std::size_t tau, const TunstallDictionary& dict,
                                          const SimConfig& cfg) {
    return simulate_bit_policy(cfg, src, threshold_length_policy(src.N, tau), &dict);
}

}  // namespace agedist
