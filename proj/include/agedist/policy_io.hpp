#pragma once

// Versioned JSON container for solved action tables so that simulations can
// replay solver output. Actions are run-length encoded per tree level.

#include <cstdint>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "agedist/model.hpp"
#include "agedist/solver.hpp"

namespace agedist {

inline constexpr int kPolicyFormatVersion = 1;

/// 64-bit FNV-1a over the canonical JSON dump of the model.
inline std::string model_hash(const Model& m) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : m.to_json().dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << h;
    return os.str();
}

struct StoredPolicy {
    std::string hash;
    double eta = 0.0;
    std::size_t K = 0;
    std::size_t alphabet = 0;
    double lambda = 0.0;
    std::vector<std::int32_t> actions;
};

inline nlohmann::json policy_to_json(const Model& m, const PolicySolution& sol) {
    nlohmann::json levels = nlohmann::json::array();
    std::uint64_t begin = 0, width = 1;
    for (std::size_t l = 0; l <= sol.K; ++l, width *= sol.alphabet) {
        nlohmann::json runs = nlohmann::json::array();
        for (std::uint64_t i = begin; i < begin + width;) {
            std::uint64_t j = i;
            while (j < begin + width && sol.actions[j] == sol.actions[i]) ++j;
            runs.push_back({sol.actions[i], j - i});
            i = j;
        }
        levels.push_back(runs);
        begin += width;
    }
    return {{"version", kPolicyFormatVersion},
            {"model_hash", model_hash(m)},
            {"model", m.to_json()},
            {"eta", sol.eta},
            {"K", sol.K},
            {"alphabet", sol.alphabet},
            {"lambda", sol.lambda},
            {"delta_e", sol.delta_e},
            {"d", sol.d},
            {"levels", levels}};
}

inline StoredPolicy policy_from_json(const nlohmann::json& j) {
    if (!j.is_object() || j.value("version", 0) != kPolicyFormatVersion)
        throw std::invalid_argument("unsupported policy file version");
    StoredPolicy p;
    p.hash = j.at("model_hash").get<std::string>();
    p.eta = j.at("eta").get<double>();
    p.K = j.at("K").get<std::size_t>();
    p.alphabet = j.at("alphabet").get<std::size_t>();
    p.lambda = j.at("lambda").get<double>();
    const auto& levels = j.at("levels");
    if (levels.size() != p.K + 1) throw std::invalid_argument("policy file has the wrong number of levels");
    std::uint64_t width = 1;
    for (std::size_t l = 0; l <= p.K; ++l, width *= p.alphabet) {
        std::uint64_t filled = 0;
        for (const auto& run : levels[l]) {
            const auto a = run.at(0).get<std::int32_t>();
            const auto n = run.at(1).get<std::uint64_t>();
            if (a < 0 || static_cast<std::size_t>(a) > l) throw std::invalid_argument("policy file has an out-of-range action");
            p.actions.insert(p.actions.end(), n, a);
            filled += n;
        }
        if (filled != width) throw std::invalid_argument("policy file level " + std::to_string(l) + " is incomplete");
    }
    return p;
}

inline void save_policy(const std::string& path, const Model& m, const PolicySolution& sol) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write policy file: " + path);
    out << policy_to_json(m, sol).dump(1) << '\n';
}

/// Loads a stored policy and checks it was solved for the same model.
inline StoredPolicy load_policy(const std::string& path, const Model& m) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open policy file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("malformed policy file " + path + ": " + e.what());
    }
    StoredPolicy p = policy_from_json(j);
    if (p.hash != model_hash(m)) throw std::invalid_argument("policy file was solved for a different model");
    return p;
}

}  // namespace agedist
