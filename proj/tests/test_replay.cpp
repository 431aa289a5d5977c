#include "pearl/replay/task_buffer.hpp"

#include <gtest/gtest.h>

#include <random>
#include <set>

using namespace pearl;

namespace {

/// Episode of `len` steps whose rewards are base, base+1, ... so every stored
/// item is identifiable.
std::vector<Transition> episode(int base, std::size_t len) {
    std::vector<Transition> out;
    for (std::size_t i = 0; i < len; ++i) {
        Transition t;
        t.state = {double(base + int(i))};
        t.action = {0.0};
        t.next_state = {double(base + int(i) + 1)};
        t.reward = double(base + int(i));
        t.context_reward = t.reward;
        t.done = i + 1 == len;
        out.push_back(t);
    }
    return out;
}

}  // namespace

TEST(TaskBuffer, FifoEvictionKeepsNewest) {
    TaskBuffer b(5);
    b.add(episode(0, 4));
    b.add(episode(100, 4));
    EXPECT_EQ(b.size(), 5u);
    EXPECT_EQ(b.evicted(), 3u);
    EXPECT_EQ(b.at(0).reward, 3.0);
    EXPECT_EQ(b.at(1).reward, 100.0);
    EXPECT_EQ(b.at(4).reward, 103.0);
    EXPECT_THROW(TaskBuffer(0), std::invalid_argument);
}

TEST(TaskBuffer, RecentMarkerTracksFreshChunk) {
    TaskBuffer b(100);
    b.add(episode(0, 5), ChunkMode::fresh);
    EXPECT_EQ(b.recent_marker(), 0u);
    b.add(episode(10, 5), ChunkMode::fresh);
    EXPECT_EQ(b.recent_marker(), 5u);
    b.add(episode(20, 5), ChunkMode::append);
    EXPECT_EQ(b.recent_marker(), 5u);
    EXPECT_EQ(b.recent_size(), 10u);
}

TEST(TaskBuffer, RecentMarkerShiftsWithEviction) {
    TaskBuffer b(8);
    b.add(episode(0, 5), ChunkMode::fresh);
    b.add(episode(10, 5), ChunkMode::fresh);
    EXPECT_EQ(b.recent_marker(), 3u);
    EXPECT_EQ(b.at(b.recent_marker()).reward, 10.0);
    b.add(episode(20, 8), ChunkMode::append);
    EXPECT_EQ(b.recent_marker(), 0u);
}

TEST(TaskBuffer, CompleteEpisodesExcludePartiallyEvictedOnes) {
    TaskBuffer b(7);
    b.add(episode(0, 4));
    b.add(episode(10, 4));
    // first episode lost its head
    EXPECT_EQ(b.complete_episode_starts(), (std::vector<std::size_t>{3}));
    auto [s, e] = b.episode_range(3);
    EXPECT_EQ(s, 3u);
    EXPECT_EQ(e, 7u);
}

TEST(TaskBuffer, RawStateRoundTrip) {
    TaskBuffer a(6);
    a.add(episode(0, 4), ChunkMode::fresh);
    a.add(episode(10, 3), ChunkMode::fresh);
    TaskBuffer b(6);
    b.restore(a.raw());
    EXPECT_EQ(b.size(), a.size());
    EXPECT_EQ(b.recent_marker(), a.recent_marker());
    EXPECT_EQ(b.complete_episode_starts(), a.complete_episode_starts());
    a.add(episode(20, 2));
    b.add(episode(20, 2));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.at(i).reward, b.at(i).reward);
    TaskBuffer small(2);
    EXPECT_THROW(small.restore(a.raw()), std::invalid_argument);
}

TEST(Sampling, RlBatchIsUniformOverBuffer) {
    TaskBuffer b(1000);
    b.add(episode(0, 10));
    std::mt19937_64 rng(1);
    std::vector<int> counts(10, 0);
    for (const auto& t : sample_rl_batch(b, 100000, rng)) ++counts[std::size_t(t.reward)];
    for (int c : counts) EXPECT_NEAR(c, 10000, 500);
    TaskBuffer empty(3);
    EXPECT_THROW(sample_rl_batch(empty, 1, rng), std::invalid_argument);
}

TEST(Sampling, RecentStrategyDrawsOnlyFromRecentChunk) {
    TaskBuffer b(1000);
    b.add(episode(0, 50), ChunkMode::fresh);
    b.add(episode(1000, 20), ChunkMode::fresh);
    std::mt19937_64 rng(2);
    const ContextStrategy s{ContextStrategyKind::recent, 10};
    const ContextBatch c = sample_context(b, s, 500, nullptr, rng, 7);
    EXPECT_EQ(c.size(), 500u);
    EXPECT_EQ(c.task_id, 7);
    std::set<double> seen;
    for (const auto& t : c.transitions) {
        EXPECT_GE(t.reward, 1000.0);
        seen.insert(t.reward);
    }
    EXPECT_EQ(seen.size(), 20u);
}

TEST(Sampling, EntireBufferStrategyReachesOldData) {
    TaskBuffer b(1000);
    b.add(episode(0, 50), ChunkMode::fresh);
    b.add(episode(1000, 20), ChunkMode::fresh);
    std::mt19937_64 rng(3);
    const ContextBatch c = sample_context(b, {ContextStrategyKind::entire_buffer, 10}, 2000, nullptr, rng);
    int old = 0;
    for (const auto& t : c.transitions) old += t.reward < 1000.0;
    EXPECT_NEAR(old / 2000.0, 50.0 / 70.0, 0.05);
}

TEST(Sampling, SameAsRlBatchReturnsTheBatch) {
    TaskBuffer b(100);
    b.add(episode(0, 30));
    std::mt19937_64 rng(4);
    const auto rl = sample_rl_batch(b, 16, rng);
    const ContextStrategy s{ContextStrategyKind::same_as_rl_batch, 10};
    const ContextBatch c = sample_context(b, s, 99, &rl, rng);
    ASSERT_EQ(c.size(), rl.size());
    for (std::size_t i = 0; i < rl.size(); ++i) EXPECT_EQ(c.transitions[i].reward, rl[i].reward);
    EXPECT_THROW(sample_context(b, s, 4, nullptr, rng), std::invalid_argument);
    EXPECT_THROW(sample_context(b, {ContextStrategyKind::recent, 1}, 4, &rl, rng), std::invalid_argument);
}

TEST(Sampling, TrajectoriesAreContiguousDistinctAndOrdered) {
    TaskBuffer b(1000);
    for (int k = 0; k < 8; ++k) b.add(episode(100 * k, 5));
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        const ContextBatch c = sample_context_trajectories(b, 3, rng);
        ASSERT_EQ(c.size(), 15u);
        std::set<int> episodes;
        for (std::size_t e = 0; e < 3; ++e) {
            const double base = c.transitions[5 * e].reward;
            EXPECT_EQ(int(base) % 100, 0);
            episodes.insert(int(base));
            for (std::size_t i = 0; i < 5; ++i) EXPECT_EQ(c.transitions[5 * e + i].reward, base + double(i));
            EXPECT_TRUE(c.transitions[5 * e + 4].done);
        }
        EXPECT_EQ(episodes.size(), 3u);
    }
    EXPECT_THROW(sample_context_trajectories(b, 9, rng), std::invalid_argument);
}

TEST(Sampling, RecentTrajectoriesRespectMarkerAndCap) {
    TaskBuffer b(1000);
    b.add(episode(0, 5), ChunkMode::fresh);
    b.add(episode(100, 5), ChunkMode::fresh);
    b.add(episode(200, 5), ChunkMode::append);
    std::mt19937_64 rng(6);
    const ContextBatch c = sample_recent_trajectories(b, true, 5, rng);
    EXPECT_EQ(c.size(), 10u);
    for (const auto& t : c.transitions) EXPECT_GE(t.reward, 100.0);
    EXPECT_EQ(sample_recent_trajectories(b, false, 5, rng).size(), 15u);
}

TEST(Sampling, SeparateStreamsAreIndependentOfEachOther) {
    TaskBuffer b(1000);
    b.add(episode(0, 200), ChunkMode::fresh);
    std::mt19937_64 rl_a(10), ctx_a(20), rl_b(10), ctx_b(20);
    const auto r1 = sample_rl_batch(b, 32, rl_a);
    const auto c1 = sample_context(b, {ContextStrategyKind::recent, 1}, 32, nullptr, ctx_a);
    // Interleave extra context draws on the second pair: the RL stream must not notice.
    const auto c2 = sample_context(b, {ContextStrategyKind::recent, 1}, 32, nullptr, ctx_b);
    sample_context(b, {ContextStrategyKind::recent, 1}, 32, nullptr, ctx_b);
    const auto r2 = sample_rl_batch(b, 32, rl_b);
    for (std::size_t i = 0; i < 32; ++i) {
        EXPECT_EQ(r1[i].reward, r2[i].reward);
        EXPECT_EQ(c1.transitions[i].reward, c2.transitions[i].reward);
    }
}
