#include "pearl/envsuite/env.hpp"
#include "pearl/envsuite/task_io.hpp"
#include "pearl/envsuite/tasks.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <set>

using namespace pearl;

namespace {

TaskInstance point_task(FamilyId id, std::vector<double> goal, double radius = 0.2) {
    TaskFamily f = make_family(id, 20);
    f.goal_radius = radius;
    return TaskInstance{f, std::move(goal), 0, Split::train};
}

}  // namespace

TEST(SampleTasks, SemicircleGoalsLieOnUpperUnitArc) {
    const TaskSet set = sample_tasks(make_family(FamilyId::point2d_sparse_semicircle), 50, 20, 123);
    ASSERT_EQ(set.train.size(), 50u);
    ASSERT_EQ(set.test.size(), 20u);
    for (const auto* split : {&set.train, &set.test}) {
        for (const auto& t : *split) {
            EXPECT_LT(std::abs(std::hypot(t.task_param[0], t.task_param[1]) - 1.0), 1e-9);
            EXPECT_GE(t.task_param[1], 0.0);
        }
    }
}

TEST(SampleTasks, DeterministicGivenSeed) {
    for (auto id : {FamilyId::point2d_dense, FamilyId::point2d_sparse_semicircle, FamilyId::velocity1d,
                    FamilyId::goal2d}) {
        const TaskFamily f = make_family(id);
        const TaskSet a = sample_tasks(f, 7, 3, 99);
        const TaskSet b = sample_tasks(f, 7, 3, 99);
        EXPECT_EQ(serialize_task_set(a), serialize_task_set(b));
        const TaskSet c = sample_tasks(f, 7, 3, 100);
        EXPECT_NE(serialize_task_set(a), serialize_task_set(c));
    }
}

TEST(SampleTasks, VelocityTasksAreDistinctAndDisjoint) {
    const TaskSet set = sample_tasks(make_family(FamilyId::velocity1d), 100, 30, 4);
    std::set<double> all;
    for (const auto& t : set.train) all.insert(t.task_param[0]);
    for (const auto& t : set.test) all.insert(t.task_param[0]);
    EXPECT_EQ(all.size(), 130u);
    for (const auto& t : set.train) EXPECT_EQ(t.split, Split::train);
    for (const auto& t : set.test) EXPECT_EQ(t.split, Split::test);
}

TEST(SampleTasks, ParametersLieInTaskSpace) {
    for (auto id : {FamilyId::point2d_dense, FamilyId::point2d_sparse_semicircle, FamilyId::velocity1d,
                    FamilyId::goal2d}) {
        const TaskFamily f = make_family(id);
        const TaskSet set = sample_tasks(f, 40, 10, 8);
        for (const auto& t : set.train) EXPECT_TRUE(in_task_space(f, t.task_param)) << to_string(id);
        for (const auto& t : set.test) EXPECT_TRUE(in_task_space(f, t.task_param)) << to_string(id);
    }
    EXPECT_THROW(sample_tasks(make_family(FamilyId::goal2d), 0, 1, 1), std::invalid_argument);
    EXPECT_THROW(family_from_string("cheetah"), std::invalid_argument);
}

TEST(Env, ResetStartsAtOriginWithNoSteps) {
    const auto task = point_task(FamilyId::point2d_dense, {1, 0});
    const EnvState a = reset(task, 5);
    const EnvState b = reset(task, 5);
    EXPECT_EQ(a.current_state, (std::vector<double>{0, 0}));
    EXPECT_EQ(a.steps_taken, 0u);
    EXPECT_EQ(a.current_state, b.current_state);
    TaskInstance vel{make_family(FamilyId::velocity1d), {0.5}, 0, Split::train};
    EXPECT_EQ(reset(vel).current_state, (std::vector<double>{0}));
}

TEST(Env, PointDynamicsAndClipping) {
    const auto task = point_task(FamilyId::point2d_dense, {1, 0});
    auto [tr, next] = step(task, reset(task), {1.0, 0.0});
    EXPECT_DOUBLE_EQ(next.current_state[0], 0.1);
    EXPECT_DOUBLE_EQ(next.current_state[1], 0.0);
    EXPECT_EQ(next.steps_taken, 1u);
    EXPECT_FALSE(tr.done);
    auto [tr2, next2] = step(task, next, {5.0, -3.0});
    EXPECT_EQ(tr2.action, (std::vector<double>{1.0, -1.0}));
    EXPECT_DOUBLE_EQ(next2.current_state[0], 0.2);
    EXPECT_DOUBLE_EQ(next2.current_state[1], -0.1);
    EXPECT_THROW(step(task, next, {1.0}), std::invalid_argument);
}

TEST(Env, VelocityRewardPeaksAtTarget) {
    TaskInstance task{make_family(FamilyId::velocity1d), {0.5}, 0, Split::train};
    EnvState env{{0.4}, 0};
    auto [tr, next] = step(task, env, {1.0});
    EXPECT_NEAR(next.current_state[0], 0.5, 1e-15);
    EXPECT_NEAR(tr.reward, 0.0, 1e-15);
    EXPECT_THROW(reward_fn(task, {0.0}, {0.0}, {0.5}, RewardMode::sparse), std::invalid_argument);
}

TEST(Env, HorizonEndsEpisodeExactlyOnce) {
    const auto task = point_task(FamilyId::point2d_dense, {0, 1});
    EnvState env = reset(task);
    int dones = 0, steps = 0;
    while (env.steps_taken < task.family.horizon) {
        auto [tr, next] = step(task, env, {0.3, 0.3});
        dones += tr.done;
        ++steps;
        env = next;
    }
    EXPECT_EQ(steps, 20);
    EXPECT_EQ(dones, 1);
    EXPECT_THROW(step(task, env, {0.0, 0.0}), std::logic_error);
}

TEST(Reward, Examples) {
    const auto task = point_task(FamilyId::point2d_sparse_semicircle, {1, 0}, 0.2);
    EXPECT_EQ(reward_fn(task, {}, {}, {1, 0}, RewardMode::dense), 0.0);
    EXPECT_NEAR(reward_fn(task, {}, {}, {0.9, 0}, RewardMode::sparse), 0.1, 1e-12);
    EXPECT_EQ(reward_fn(task, {}, {}, {0, 0}, RewardMode::sparse), 0.0);
    TaskInstance indicator = task;
    indicator.family.sparse_indicator = true;
    EXPECT_EQ(reward_fn(indicator, {}, {}, {0.9, 0}, RewardMode::sparse), 1.0);
}

TEST(Reward, DenseMaximalOnlyAtGoalAndSparseNonnegative) {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    const auto task = point_task(FamilyId::point2d_sparse_semicircle, {0.6, 0.8}, 0.8);
    for (int i = 0; i < 2000; ++i) {
        std::vector<double> p{u(rng), u(rng)};
        const double d = std::hypot(p[0] - 0.6, p[1] - 0.8);
        const double dense = reward_fn(task, {}, {}, p, RewardMode::dense);
        EXPECT_LT(dense, 0.0);
        const double sparse = reward_fn(task, {}, {}, p, RewardMode::sparse);
        EXPECT_GE(sparse, 0.0);
        if (d > 0.8) {
            EXPECT_EQ(sparse, 0.0);
        }
    }
}

TEST(Env, SparseFamilyExposesSparseContextRewardAndDenseTrainingReward) {
    const auto task = point_task(FamilyId::point2d_sparse_semicircle, {1, 0}, 0.2);
    auto [tr, next] = step(task, reset(task), {1.0, 0.0});
    EXPECT_NEAR(tr.reward, -0.9, 1e-12);
    EXPECT_EQ(tr.context_reward, 0.0);
    const auto dense = point_task(FamilyId::point2d_dense, {1, 0});
    auto [tr2, next2] = step(dense, reset(dense), {1.0, 0.0});
    EXPECT_EQ(tr2.reward, tr2.context_reward);
}

TEST(TaskIo, RoundTripIsExact) {
    for (auto id : {FamilyId::point2d_dense, FamilyId::point2d_sparse_semicircle, FamilyId::velocity1d,
                    FamilyId::goal2d}) {
        TaskFamily f = make_family(id, 33);
        f.goal_radius = 0.8;
        const TaskSet set = sample_tasks(f, 5, 4, 77);
        const std::string text = serialize_task_set(set);
        const TaskSet back = parse_task_set(text);
        EXPECT_EQ(serialize_task_set(back), text);
        ASSERT_EQ(back.train.size(), 5u);
        EXPECT_EQ(back.train[3].task_param, set.train[3].task_param);
        EXPECT_EQ(back.test[1].task_id, set.test[1].task_id);
        EXPECT_EQ(back.family.horizon, 33u);
    }
}

TEST(TaskIo, RejectsMalformedInput) {
    EXPECT_THROW(parse_task_set("nonsense"), std::runtime_error);
    const std::string good = serialize_task_set(sample_tasks(make_family(FamilyId::goal2d), 2, 1, 1));
    std::string bad = good;
    bad.replace(bad.find("test"), 4, "tset");
    EXPECT_THROW(parse_task_set(bad), std::runtime_error);
}
