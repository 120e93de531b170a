#pragma once

// Source and timing distributions for the packet-selection model.
//
// Importance values V are i.i.d. per time slot; the sender may speak at
// times separated by i.i.d. interspeaking times Z >= 1.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace agedist {

/// Index into ImportanceDist::values. Buffers and trie states are stored as symbols.
using Symbol = std::uint32_t;

inline constexpr double kProbTolerance = 1e-12;

/// Relative slack used when rounding buffer bounds up, so that an exact
/// integer ratio polluted by float noise does not add a spurious level.
inline constexpr double kCeilSlack = 1e-9;

class ImportanceDist {
public:
    ImportanceDist() = default;

    ImportanceDist(std::vector<double> values, std::vector<double> probs)
        : values_(std::move(values)), probs_(std::move(probs)) {
        if (values_.empty()) throw std::invalid_argument("importance distribution needs at least one value");
        if (values_.size() != probs_.size())
            throw std::invalid_argument("importance values and probs differ in length");
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!(values_[i] >= 0.0) || !std::isfinite(values_[i]))
                throw std::invalid_argument("importance values must be finite and nonnegative");
            if (i > 0 && !(values_[i] > values_[i - 1]))
                throw std::invalid_argument("importance values must be strictly increasing");
            if (!(probs_[i] > 0.0)) throw std::invalid_argument("importance probabilities must be positive");
        }
        const double total = std::accumulate(probs_.begin(), probs_.end(), 0.0);
        if (std::abs(total - 1.0) > kProbTolerance)
            throw std::invalid_argument("importance probabilities must sum to 1");
        mean_ = 0.0;
        for (std::size_t i = 0; i < values_.size(); ++i) mean_ += values_[i] * probs_[i];
    }

    std::size_t size() const { return values_.size(); }
    const std::vector<double>& values() const { return values_; }
    const std::vector<double>& probs() const { return probs_; }
    double value(Symbol s) const { return values_[s]; }
    double prob(Symbol s) const { return probs_[s]; }
    double v_min() const { return values_.front(); }
    double v_max() const { return values_.back(); }
    double mean() const { return mean_; }

private:
    std::vector<double> values_;
    std::vector<double> probs_;
    double mean_ = 0.0;
};

/// Interspeaking time Z on {1, 2, ...}: geometric with success probability p,
/// or an explicit PMF over 1..z_max.
class InterspeakDist {
public:
    enum class Kind { Geometric, FinitePmf };

    static constexpr std::size_t kMaxSupport = 64;

    static InterspeakDist geometric(double p) {
        if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("geometric parameter must lie in (0, 1]");
        InterspeakDist z;
        z.kind_ = Kind::Geometric;
        z.p_ = p;
        return z;
    }

    /// pmf[k-1] = Pr(Z = k).
    static InterspeakDist finite_pmf(std::vector<double> pmf) {
        if (pmf.empty()) throw std::invalid_argument("interspeaking pmf is empty");
        if (pmf.size() > kMaxSupport)
            throw std::invalid_argument("interspeaking pmf support exceeds " + std::to_string(kMaxSupport));
        for (double w : pmf)
            if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("interspeaking pmf has a negative entry");
        const double total = std::accumulate(pmf.begin(), pmf.end(), 0.0);
        if (std::abs(total - 1.0) > kProbTolerance) throw std::invalid_argument("interspeaking pmf must sum to 1");
        while (pmf.size() > 1 && pmf.back() == 0.0) pmf.pop_back();
        InterspeakDist z;
        z.kind_ = Kind::FinitePmf;
        z.pmf_ = std::move(pmf);
        return z;
    }

    Kind kind() const { return kind_; }
    bool is_geometric() const { return kind_ == Kind::Geometric; }
    double geometric_p() const { return p_; }
    const std::vector<double>& pmf_table() const { return pmf_; }

    /// Pr(Z = k); zero for k < 1.
    double pmf(long k) const {
        if (k < 1) return 0.0;
        if (is_geometric()) return std::pow(1.0 - p_, static_cast<double>(k - 1)) * p_;
        return static_cast<std::size_t>(k) <= pmf_.size() ? pmf_[k - 1] : 0.0;
    }

    /// Pr(Z >= k); one for k <= 1.
    double tail(long k) const {
        if (k <= 1) return 1.0;
        if (is_geometric()) return std::pow(1.0 - p_, static_cast<double>(k - 1));
        double s = 0.0;
        for (std::size_t j = static_cast<std::size_t>(k); j <= pmf_.size(); ++j) s += pmf_[j - 1];
        return s;
    }

    /// E[(Z - K)^+].
    double excess_mean(long K) const {
        if (K <= 0) return mean() - static_cast<double>(K);
        if (is_geometric()) return std::pow(1.0 - p_, static_cast<double>(K)) / p_;
        double s = 0.0;
        for (std::size_t z = static_cast<std::size_t>(K) + 1; z <= pmf_.size(); ++z)
            s += static_cast<double>(z - K) * pmf_[z - 1];
        return s;
    }

    double mean() const {
        if (is_geometric()) return 1.0 / p_;
        double s = 0.0;
        for (std::size_t z = 1; z <= pmf_.size(); ++z) s += static_cast<double>(z) * pmf_[z - 1];
        return s;
    }

    /// E[Z (Z + 1)] / 2.
    double nu() const {
        if (is_geometric()) return 1.0 / (p_ * p_);
        double s = 0.0;
        for (std::size_t z = 1; z <= pmf_.size(); ++z)
            s += 0.5 * static_cast<double>(z) * static_cast<double>(z + 1) * pmf_[z - 1];
        return s;
    }

private:
    Kind kind_ = Kind::Geometric;
    double p_ = 1.0;
    std::vector<double> pmf_;
};

/// Immutable after construction.
class Model {
public:
    Model(ImportanceDist v, InterspeakDist z) : v_(std::move(v)), z_(std::move(z)) {
        mu_ = z_.mean();
        nu_ = z_.nu();
    }

    const ImportanceDist& v() const { return v_; }
    const InterspeakDist& z() const { return z_; }
    double mu() const { return mu_; }
    double nu() const { return nu_; }
    std::size_t alphabet() const { return v_.size(); }

    double z_pmf(long k) const { return z_.pmf(k); }
    double z_tail(long k) const { return z_.tail(k); }
    double z_excess_mean(long K) const { return z_.excess_mean(K); }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["values"] = v_.values();
        j["probs"] = v_.probs();
        if (z_.is_geometric())
            j["z"] = {{"geometric", z_.geometric_p()}};
        else
            j["z"] = {{"pmf", z_.pmf_table()}};
        return j;
    }

    static Model from_json(const nlohmann::json& j) {
        if (!j.is_object() || !j.contains("values") || !j.contains("probs") || !j.contains("z"))
            throw std::invalid_argument("model config needs \"values\", \"probs\" and \"z\"");
        ImportanceDist v(j.at("values").get<std::vector<double>>(), j.at("probs").get<std::vector<double>>());
        const auto& zj = j.at("z");
        if (zj.contains("geometric")) return Model(std::move(v), InterspeakDist::geometric(zj.at("geometric").get<double>()));
        if (zj.contains("pmf")) return Model(std::move(v), InterspeakDist::finite_pmf(zj.at("pmf").get<std::vector<double>>()));
        throw std::invalid_argument("model \"z\" must be {\"geometric\": p} or {\"pmf\": [...]}");
    }

    static Model load(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open model file: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const nlohmann::json::exception& e) {
            throw std::runtime_error("malformed model file " + path + ": " + e.what());
        }
        return from_json(j);
    }

private:
    ImportanceDist v_;
    InterspeakDist z_;
    double mu_ = 1.0;
    double nu_ = 1.0;
};

/// Smallest distortion any selection process can reach: the sender forwards at
/// most a 1/mu fraction of packets, so it keeps the heaviest ones.
inline double d_min(const Model& m) {
    const auto& a = m.v().probs();
    const auto& v = m.v().values();
    const double rate = 1.0 / m.mu();
    const std::size_t n = a.size();
    // largest j with sum_{i >= j} a_i >= rate
    double upper = 0.0;
    std::size_t j = n;
    for (std::size_t i = n; i-- > 0;) {
        upper += a[i];
        if (upper >= rate) {
            j = i;
            break;
        }
    }
    if (j == n) return 0.0;
    double d = 0.0;
    for (std::size_t i = 0; i < j; ++i) d += a[i] * v[i];
    double tail = 0.0;
    for (std::size_t i = j; i < n; ++i) tail += a[i];
    d += (tail - rate) * v[j];
    return std::max(d, 0.0);
}

/// Weight above which sending the newest packet is optimal.
inline double eta_max(const Model& m) { return (m.v().v_max() - m.v().v_min()) / m.mu(); }

namespace detail {
inline std::size_t ceil_ratio(double x) {
    if (x <= 0.0) return 0;
    return static_cast<std::size_t>(std::ceil(x * (1.0 - kCeilSlack)));
}
}  // namespace detail

/// K_i(eta) = ceil((v_i - v_min) / (eta mu)); zero for the least important value.
inline std::size_t buffer_bound_i(const Model& m, double eta, Symbol i) {
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    return detail::ceil_ratio((m.v().value(i) - m.v().v_min()) / (eta * m.mu()));
}

/// K(eta), floored at 1.
inline std::size_t buffer_bound(const Model& m, double eta) {
    if (!(eta > 0.0)) throw std::invalid_argument("eta must be positive");
    return std::max<std::size_t>(1, detail::ceil_ratio((m.v().v_max() - m.v().v_min()) / (eta * m.mu())));
}

}  // namespace agedist
