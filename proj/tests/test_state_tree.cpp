#include <numeric>

#include <gtest/gtest.h>

#include "agedist/acceptance.hpp"
#include "agedist/state_tree.hpp"

using namespace agedist;

namespace {

Model ternary() {
    return Model(ImportanceDist({1.0, 3.0, 9.0}, {0.5, 0.3, 0.2}), InterspeakDist::geometric(0.4));
}

}  // namespace

TEST(StateTree, LayoutAndNavigation) {
    const Model m = ternary();
    const StateTree t(m, 3);
    EXPECT_EQ(t.size(), 1u + 3u + 9u + 27u);
    EXPECT_EQ(t.depth(t.root()), 0u);
    for (NodeId id = 0; id < t.size(); ++id) {
        const BufferState b = t.state_of(id);
        EXPECT_EQ(b.length(), t.depth(id));
        EXPECT_EQ(t.index_of(b), id);
        if (id == 0) continue;
        EXPECT_EQ(t.first(id), b.entries.front());
        // parent drops the oldest entry
        const BufferState p = t.state_of(t.parent(id));
        EXPECT_TRUE(std::equal(p.entries.begin(), p.entries.end(), b.entries.begin() + 1));
        for (std::size_t k = 0; k <= b.length(); ++k) {
            const BufferState s = t.state_of(t.drop_oldest(id, k));
            EXPECT_TRUE(std::equal(s.entries.begin(), s.entries.end(), b.entries.begin() + static_cast<long>(k)));
        }
        double w = 1.0;
        for (Symbol v : b.entries) w *= m.v().prob(v);
        EXPECT_NEAR(t.weight(id), w, 1e-15);
        if (t.depth(id) < t.K())
            for (Symbol v = 0; v < 3; ++v) {
                BufferState c = b;
                c.entries.insert(c.entries.begin(), v);  // child adds an older entry
                EXPECT_EQ(t.child(id, v), t.index_of(c));
            }
    }
}

TEST(StateTree, ExtensionsEnumerateSuffixes) {
    const Model m = ternary();
    StateTree t(m, 4);
    const NodeId b = t.index_of({{2, 0}});
    double total = 0.0;
    std::size_t count = 0;
    t.for_each_extension(b, 2, [&](NodeId x, double w) {
        const auto s = t.state_of(x);
        EXPECT_EQ(s.entries[0], 2u);
        EXPECT_EQ(s.entries[1], 0u);
        total += w;
        ++count;
    });
    EXPECT_EQ(count, 9u);
    EXPECT_NEAR(total, 1.0, 1e-15);
    std::iota(t.h.begin(), t.h.end(), 0.0);
    double expect = 0.0;
    t.for_each_extension(b, 1, [&](NodeId x, double w) { expect += w * t.h[x]; });
    EXPECT_NEAR(t.expectation_over_suffix(b, 1), expect, 1e-12);
    EXPECT_THROW(t.for_each_extension(b, 3, [](NodeId, double) {}), std::out_of_range);
}

TEST(StateTree, ExtendKeepsExistingNodes) {
    const Model m = ternary();
    StateTree t(m, 2);
    for (NodeId id = 1; id < t.size(); ++id) t.action[id] = 1;
    t.h[5] = 42.0;
    t.extend(m, 4);
    EXPECT_EQ(t.K(), 4u);
    EXPECT_EQ(t.h[5], 42.0);
    for (NodeId id = 1; id < t.size(); ++id) {
        if (t.depth(id) <= 2) {
            EXPECT_EQ(t.action[id], 1);
        } else {
            EXPECT_EQ(t.action[id], t.action[t.parent(id)] + 1);
        }
    }
    EXPECT_THROW(t.extend(m, 3), std::invalid_argument);
}

TEST(StateTree, DepthCapIsEnforced) {
    EXPECT_EQ(max_tree_depth(2), 23u);
    EXPECT_EQ(max_tree_depth(4), 11u);
    EXPECT_THROW(StateTree(settings::reference(), 24), std::length_error);
    EXPECT_THROW(StateTree(settings::reference(), 0), std::invalid_argument);
}
