#pragma once

// Dense suffix trie over the truncated buffer states V^{<=K}.
//
// Nodes are stored breadth-first: all states of length l precede those of
// length l + 1. Inside a level a state is a base-|V| number whose most
// significant digit is the oldest entry, so
//   parent(b)  = b without its oldest entry      (code mod |V|^{l-1})
//   child(b,v) = v prepended as the oldest entry (v |V|^l + code)
//   b || V^k   = a contiguous block of |V|^k nodes one level k deeper.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <ostream>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "agedist/model.hpp"

namespace agedist {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = std::numeric_limits<NodeId>::max();

/// Importance symbols of the unsent packets, oldest first. Empty is the root.
struct BufferState {
    std::vector<Symbol> entries;

    std::size_t length() const { return entries.size(); }
    bool operator==(const BufferState&) const = default;
};

/// Maximum number of trie nodes, |V|^{K+1} <= 2^24.
inline constexpr std::uint64_t kMaxTreeWeight = std::uint64_t{1} << 24;

inline std::size_t max_tree_depth(std::size_t alphabet) {
    if (alphabet <= 1) return 1u << 20;
    std::size_t k = 0;
    std::uint64_t w = alphabet;  // |V|^{k+1}
    while (w * alphabet <= kMaxTreeWeight) {
        w *= alphabet;
        ++k;
    }
    return k;
}

class StateTree {
public:
    StateTree(const Model& model, std::size_t K) : n_(model.alphabet()), K_(K) {
        if (K < 1) throw std::invalid_argument("tree depth K must be at least 1");
        const std::size_t cap = max_tree_depth(n_);
        if (K > cap) {
            std::ostringstream os;
            os << "tree depth K = " << K << " exceeds the cap " << cap << " for |V| = " << n_ << " (would need about "
               << estimate_nodes(n_, K) << " nodes, limit " << kMaxTreeWeight << ")";
            throw std::length_error(os.str());
        }
        pow_.assign(K_ + 2, 1);
        for (std::size_t l = 1; l < pow_.size(); ++l) pow_[l] = pow_[l - 1] * n_;
        offset_.assign(K_ + 2, 0);
        for (std::size_t l = 1; l < offset_.size(); ++l) offset_[l] = offset_[l - 1] + pow_[l - 1];

        const std::size_t total = size();
        weight_.assign(total, 1.0);
        first_.assign(total, 0);
        for (std::size_t l = 1; l <= K_; ++l)
            for (std::uint64_t c = 0; c < pow_[l]; ++c) {
                const NodeId id = static_cast<NodeId>(offset_[l] + c);
                const Symbol head = static_cast<Symbol>(c / pow_[l - 1]);
                first_[id] = head;
                weight_[id] = model.v().prob(head) * weight_[parent(id)];
            }

        action.assign(total, 0);
        for (NodeId id = 0; id < total; ++id) action[id] = static_cast<std::int32_t>(depth(id));
        h.assign(total, 0.0);
        cost.assign(total, 0.0);
        temp.assign(total, 0.0);
        kappa.assign(total, 0.0);
        parentone.assign(total, kNoNode);
    }

    static std::uint64_t estimate_nodes(std::size_t n, std::size_t K) {
        long double total = 0, w = 1;
        for (std::size_t l = 0; l <= K; ++l) {
            total += w;
            w *= n;
        }
        return total > 1e19L ? std::numeric_limits<std::uint64_t>::max() : static_cast<std::uint64_t>(total);
    }

    std::size_t alphabet() const { return n_; }
    std::size_t K() const { return K_; }
    std::size_t size() const { return static_cast<std::size_t>(offset_[K_ + 1]); }
    NodeId root() const { return 0; }

    std::uint64_t level_offset(std::size_t l) const { return offset_[l]; }
    std::uint64_t level_size(std::size_t l) const { return pow_[l]; }

    std::size_t depth(NodeId id) const {
        const auto it = std::upper_bound(offset_.begin(), offset_.end(), static_cast<std::uint64_t>(id));
        return static_cast<std::size_t>(it - offset_.begin()) - 1;
    }

    std::uint64_t code(NodeId id) const { return id - offset_[depth(id)]; }

    NodeId node_at(std::size_t l, std::uint64_t c) const { return static_cast<NodeId>(offset_[l] + c); }

    NodeId parent(NodeId id) const {
        const std::size_t l = depth(id);
        if (l == 0) return kNoNode;
        return node_at(l - 1, (id - offset_[l]) % pow_[l - 1]);
    }

    NodeId child(NodeId id, Symbol v) const {
        const std::size_t l = depth(id);
        if (l >= K_) return kNoNode;
        return node_at(l + 1, v * pow_[l] + (id - offset_[l]));
    }

    /// Oldest entry b_1; undefined for the root.
    Symbol first(NodeId id) const { return first_[id]; }

    /// prod_k alpha(b_k): probability of seeing exactly these arrivals.
    double weight(NodeId id) const { return weight_[id]; }

    /// Suffix b_{>=j} (1-based), i.e. the ancestor j - 1 levels up.
    NodeId drop_oldest(NodeId id, std::size_t count) const {
        const std::size_t l = depth(id);
        if (count >= l) return 0;
        return node_at(l - count, (id - offset_[l]) % pow_[l - count]);
    }

    NodeId index_of(const BufferState& b) const {
        if (b.length() > K_) throw std::out_of_range("buffer state longer than tree depth");
        std::uint64_t c = 0;
        for (Symbol s : b.entries) {
            if (s >= n_) throw std::out_of_range("buffer entry outside the importance alphabet");
            c = c * n_ + s;
        }
        return node_at(b.length(), c);
    }

    BufferState state_of(NodeId id) const {
        if (id >= size()) throw std::out_of_range("node id outside the tree");
        const std::size_t l = depth(id);
        std::uint64_t c = id - offset_[l];
        BufferState b;
        b.entries.assign(l, 0);
        for (std::size_t k = l; k-- > 0;) {
            b.entries[k] = static_cast<Symbol>(c % n_);
            c /= n_;
        }
        return b;
    }

    /// Visits (node of b || r, Pr(r)) for every r in V^k.
    template <class Fn>
    void for_each_extension(NodeId b, std::size_t k, Fn&& fn) const {
        const std::size_t l = depth(b);
        if (l + k > K_) throw std::out_of_range("extension runs past the tree depth");
        const std::uint64_t base = offset_[l + k] + (b - offset_[l]) * pow_[k];
        const std::uint64_t wbase = offset_[k];
        for (std::uint64_t j = 0; j < pow_[k]; ++j)
            fn(static_cast<NodeId>(base + j), weight_[wbase + j]);
    }

    /// E[values(b || V^k)] over i.i.d. arrivals.
    double expectation_over_suffix(std::span<const double> values, NodeId b, std::size_t k) const {
        const std::size_t l = depth(b);
        if (l + k > K_) throw std::out_of_range("expectation runs past the tree depth");
        const double* vals = values.data() + offset_[l + k] + (b - offset_[l]) * pow_[k];
        const double* w = weight_.data() + offset_[k];
        double s = 0.0;
        for (std::uint64_t j = 0; j < pow_[k]; ++j) s += w[j] * vals[j];
        return s;
    }

    double expectation_over_suffix(NodeId b, std::size_t k) const { return expectation_over_suffix(h, b, k); }

    /// Grows the tree to depth K2 >= K, keeping per-node fields. New nodes chain
    /// to their parent's action (send-latest for fresh suffixes).
    void extend(const Model& model, std::size_t K2) {
        if (K2 < K_) throw std::invalid_argument("cannot shrink a state tree");
        if (K2 == K_) return;
        StateTree bigger(model, K2);
        const std::size_t old = size();
        std::copy_n(action.begin(), old, bigger.action.begin());
        std::copy_n(h.begin(), old, bigger.h.begin());
        std::copy_n(cost.begin(), old, bigger.cost.begin());
        std::copy_n(temp.begin(), old, bigger.temp.begin());
        std::copy_n(kappa.begin(), old, bigger.kappa.begin());
        std::copy_n(parentone.begin(), old, bigger.parentone.begin());
        for (NodeId id = static_cast<NodeId>(old); id < bigger.size(); ++id) {
            const NodeId par = bigger.parent(id);
            bigger.action[id] = bigger.action[par] + 1;
        }
        *this = std::move(bigger);
    }

    /// "state,action,h" lines; state entries are importance values separated by spaces.
    void dump(std::ostream& os, const Model& model) const {
        os << "state,action,h\n";
        for (NodeId id = 1; id < size(); ++id) {
            const auto b = state_of(id);
            for (std::size_t k = 0; k < b.entries.size(); ++k)
                os << (k ? " " : "") << model.v().value(b.entries[k]);
            os << ',' << action[id] << ',' << h[id] << '\n';
        }
    }

    // Per-node solver fields, written only by the owning solve.
    std::vector<std::int32_t> action;
    std::vector<double> h;
    std::vector<double> cost;
    std::vector<double> temp;
    std::vector<double> kappa;
    std::vector<NodeId> parentone;

private:
    std::size_t n_;
    std::size_t K_;
    std::vector<std::uint64_t> pow_;
    std::vector<std::uint64_t> offset_;
    std::vector<double> weight_;
    std::vector<Symbol> first_;
};

}  // namespace agedist
