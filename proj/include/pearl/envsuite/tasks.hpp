#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace pearl {

struct Transition {
    std::vector<double> state;
    std::vector<double> action;
    double reward = 0.0;          ///< signal used by the RL losses
    double context_reward = 0.0;  ///< signal the agent observes at test time; fed to the encoder
    std::vector<double> next_state;
    bool done = false;

    bool operator==(const Transition&) const = default;
};

enum class FamilyId { point2d_dense, point2d_sparse_semicircle, velocity1d, goal2d };

enum class RewardMode { dense, sparse };

inline const char* to_string(FamilyId f) {
    switch (f) {
        case FamilyId::point2d_dense: return "point2d_dense";
        case FamilyId::point2d_sparse_semicircle: return "point2d_sparse_semicircle";
        case FamilyId::velocity1d: return "velocity1d";
        case FamilyId::goal2d: return "goal2d";
    }
    return "?";
}

inline FamilyId family_from_string(const std::string& s) {
    if (s == "point2d_dense") return FamilyId::point2d_dense;
    if (s == "point2d_sparse_semicircle") return FamilyId::point2d_sparse_semicircle;
    if (s == "velocity1d") return FamilyId::velocity1d;
    if (s == "goal2d") return FamilyId::goal2d;
    throw std::invalid_argument("unknown task family '" + s + "'");
}

struct TaskFamily {
    FamilyId id = FamilyId::point2d_dense;
    std::size_t state_dim = 2;
    std::size_t action_dim = 2;
    std::size_t horizon = 20;
    double action_gain = 0.1;
    double goal_radius = 0.2;        ///< sparse families only
    bool sparse_indicator = false;   ///< 1 inside the radius instead of (radius - distance)

    bool is_point() const { return id != FamilyId::velocity1d; }

    /// Human-readable description of where task parameters live.
    std::string task_param_space() const {
        switch (id) {
            case FamilyId::point2d_dense: return "goal on the upper unit semicircle";
            case FamilyId::point2d_sparse_semicircle: return "goal on the upper unit semicircle";
            case FamilyId::velocity1d: return "target velocity in [-1, 1]";
            case FamilyId::goal2d: return "goal in the unit disk";
        }
        return "";
    }

    void validate() const {
        if (horizon == 0 || state_dim == 0 || action_dim == 0) {
            throw std::invalid_argument("TaskFamily: horizon and dims must be >= 1");
        }
        if (!(goal_radius > 0.0)) throw std::invalid_argument("TaskFamily: goal_radius must be positive");
    }
};

inline TaskFamily make_family(FamilyId id, std::size_t horizon = 20) {
    TaskFamily f;
    f.id = id;
    f.horizon = horizon;
    if (id == FamilyId::velocity1d) {
        f.state_dim = 1;
        f.action_dim = 1;
    }
    f.validate();
    return f;
}

enum class Split { train, test };

inline const char* to_string(Split s) { return s == Split::train ? "train" : "test"; }

inline Split split_from_string(const std::string& s) {
    if (s == "train") return Split::train;
    if (s == "test") return Split::test;
    throw std::invalid_argument("unknown split '" + s + "'");
}

struct TaskInstance {
    TaskFamily family;
    std::vector<double> task_param;
    int task_id = 0;
    Split split = Split::train;
};

/// Whether `param` lies in the family's task parameter space.
inline bool in_task_space(const TaskFamily& f, const std::vector<double>& p, double tol = 1e-9) {
    switch (f.id) {
        case FamilyId::point2d_dense:
        case FamilyId::point2d_sparse_semicircle:
            return p.size() == 2 && std::abs(std::hypot(p[0], p[1]) - 1.0) < tol && p[1] >= 0.0;
        case FamilyId::velocity1d:
            return p.size() == 1 && p[0] >= -1.0 && p[0] <= 1.0;
        case FamilyId::goal2d:
            return p.size() == 2 && std::hypot(p[0], p[1]) <= 1.0 + tol;
    }
    return false;
}

namespace detail {

template <class Rng>
std::vector<double> draw_task_param(const TaskFamily& f, Rng& rng) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    switch (f.id) {
        // both point families draw goals on the upper semicircle
        case FamilyId::point2d_dense:
        case FamilyId::point2d_sparse_semicircle: {
            const double a = std::numbers::pi * unit(rng);
            return {std::cos(a), std::sin(a)};
        }
        case FamilyId::velocity1d: return {2.0 * unit(rng) - 1.0};
        case FamilyId::goal2d: {
            const double a = 2.0 * std::numbers::pi * unit(rng);
            const double r = std::sqrt(unit(rng));
            return {r * std::cos(a), r * std::sin(a)};
        }
    }
    throw std::invalid_argument("unknown task family");
}

}  // namespace detail

struct TaskSet {
    TaskFamily family;
    std::uint64_t seed = 0;
    std::vector<TaskInstance> train;
    std::vector<TaskInstance> test;
};

/// Draws n_train + n_test distinct task parameters from one seeded stream.
/// Task ids run 0..n_train-1 for train and continue for test.
inline TaskSet sample_tasks(const TaskFamily& family, std::size_t n_train, std::size_t n_test, std::uint64_t seed) {
    family.validate();
    if (n_train == 0 || n_test == 0) throw std::invalid_argument("sample_tasks: n_train and n_test must be >= 1");
    std::mt19937_64 rng(seed);
    TaskSet set{family, seed, {}, {}};
    std::vector<std::vector<double>> seen;
    const std::size_t total = n_train + n_test;
    while (seen.size() < total) {
        auto p = detail::draw_task_param(family, rng);
        if (std::find(seen.begin(), seen.end(), p) != seen.end()) continue;
        seen.push_back(std::move(p));
    }
    for (std::size_t i = 0; i < total; ++i) {
        TaskInstance t{family, seen[i], int(i), i < n_train ? Split::train : Split::test};
        (i < n_train ? set.train : set.test).push_back(std::move(t));
    }
    return set;
}

}  // namespace pearl
