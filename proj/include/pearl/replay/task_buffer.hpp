#pragma once

#include "pearl/context/encoder.hpp"
#include "pearl/envsuite/tasks.hpp"

#include <algorithm>
#include <cstddef>
#include <deque>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pearl {

enum class ChunkMode { append, fresh };

/// Per-task FIFO replay store.
///
/// Logical index 0 is the oldest surviving transition. The recent marker is
/// the logical index where the most recent collection phase began; episode
/// starts are tracked so whole trajectories can be sampled back in order.
/// Internally positions are absolute (counted since construction) and shifted
/// by the number of evicted items.
class TaskBuffer {
public:
    explicit TaskBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
        if (capacity_ == 0) throw std::invalid_argument("TaskBuffer: capacity must be >= 1");
    }

    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    bool empty() const { return data_.empty(); }
    std::size_t recent_marker() const { return recent_abs_ > evicted_ ? recent_abs_ - evicted_ : 0; }
    std::size_t recent_size() const { return data_.size() - recent_marker(); }
    std::size_t evicted() const { return evicted_; }

    const Transition& at(std::size_t i) const { return data_.at(i); }

    /// Appends transitions. Episode boundaries are taken from `done` flags;
    /// ChunkMode::fresh moves the recent marker to the start of this chunk.
    void add(const std::vector<Transition>& ts, ChunkMode mode = ChunkMode::append) {
        if (mode == ChunkMode::fresh) recent_abs_ = evicted_ + data_.size();
        for (const Transition& t : ts) push(t);
    }

    /// Logical starts of episodes that are fully stored and have ended.
    std::vector<std::size_t> complete_episode_starts() const {
        std::vector<std::size_t> out;
        for (std::size_t k = 0; k < starts_.size(); ++k) {
            if (starts_[k] < evicted_) continue;
            const std::size_t start = starts_[k] - evicted_;
            const std::size_t end = k + 1 < starts_.size() ? starts_[k + 1] - evicted_ : data_.size();
            if (end > start && data_[end - 1].done) out.push_back(start);
        }
        return out;
    }

    /// [start, end) of the episode beginning at logical index `start`.
    std::pair<std::size_t, std::size_t> episode_range(std::size_t start) const {
        auto it = std::upper_bound(starts_.begin(), starts_.end(), start + evicted_);
        const std::size_t end = it == starts_.end() ? data_.size() : *it - evicted_;
        return {start, end};
    }

    const std::deque<Transition>& data() const { return data_; }

    struct RawState {
        std::deque<Transition> data;
        std::size_t evicted = 0;
        std::size_t recent_abs = 0;
        std::deque<std::size_t> starts;
    };

    RawState raw() const { return {data_, evicted_, recent_abs_, starts_}; }

    void restore(RawState st) {
        if (st.data.size() > capacity_) throw std::invalid_argument("TaskBuffer: restored data exceeds capacity");
        data_ = std::move(st.data);
        evicted_ = st.evicted;
        recent_abs_ = st.recent_abs;
        starts_ = std::move(st.starts);
        open_episode_ = !data_.empty() && !data_.back().done;
    }

private:
    void push(const Transition& t) {
        if (!open_episode_) starts_.push_back(evicted_ + data_.size());
        data_.push_back(t);
        open_episode_ = !t.done;
        if (data_.size() > capacity_) {
            data_.pop_front();
            ++evicted_;
            while (!starts_.empty() && starts_.front() < evicted_) starts_.pop_front();
        }
    }

    std::size_t capacity_;
    std::deque<Transition> data_;
    std::size_t evicted_ = 0;
    std::size_t recent_abs_ = 0;
    std::deque<std::size_t> starts_;
    bool open_episode_ = false;
};

enum class ContextStrategyKind { recent, entire_buffer, same_as_rl_batch };

inline const char* to_string(ContextStrategyKind k) {
    switch (k) {
        case ContextStrategyKind::recent: return "recent";
        case ContextStrategyKind::entire_buffer: return "entire_buffer";
        case ContextStrategyKind::same_as_rl_batch: return "same_as_rl_batch";
    }
    return "?";
}

inline ContextStrategyKind context_strategy_from_string(const std::string& s) {
    if (s == "recent") return ContextStrategyKind::recent;
    if (s == "entire_buffer") return ContextStrategyKind::entire_buffer;
    if (s == "same_as_rl_batch") return ContextStrategyKind::same_as_rl_batch;
    throw std::invalid_argument("unknown context strategy '" + s + "'");
}

struct ContextStrategy {
    ContextStrategyKind kind = ContextStrategyKind::recent;
    std::size_t refresh_interval = 1000;  ///< optimizer steps between collection phases

    void validate() const {
        if (refresh_interval == 0) throw std::invalid_argument("ContextStrategy: refresh_interval must be >= 1");
    }
};

template <class Rng>
std::vector<std::size_t> sample_indices(std::size_t lo, std::size_t hi, std::size_t n, Rng& rng) {
    if (hi <= lo) throw std::invalid_argument("sample_indices: empty range");
    std::uniform_int_distribution<std::size_t> pick(lo, hi - 1);
    std::vector<std::size_t> out(n);
    for (auto& i : out) i = pick(rng);
    return out;
}

/// Uniform with replacement over the whole buffer.
template <class Rng>
std::vector<Transition> sample_rl_batch(const TaskBuffer& buffer, std::size_t batch_size, Rng& rng) {
    if (buffer.empty()) throw std::invalid_argument("sample_rl_batch: empty buffer");
    std::vector<Transition> out;
    out.reserve(batch_size);
    for (std::size_t i : sample_indices(0, buffer.size(), batch_size, rng)) out.push_back(buffer.at(i));
    return out;
}

/// Context sampler: the recent chunk, the whole buffer, or the RL batch itself.
template <class Rng>
ContextBatch sample_context(const TaskBuffer& buffer, const ContextStrategy& strategy, std::size_t context_size,
                            const std::vector<Transition>* rl_batch, Rng& rng, int task_id = 0) {
    if (buffer.empty()) throw std::invalid_argument("sample_context: empty buffer");
    const bool want_rl = strategy.kind == ContextStrategyKind::same_as_rl_batch;
    if (want_rl != (rl_batch != nullptr)) {
        throw std::invalid_argument("sample_context: rl_batch must be given exactly for same_as_rl_batch");
    }
    ContextBatch ctx;
    ctx.task_id = task_id;
    switch (strategy.kind) {
        case ContextStrategyKind::same_as_rl_batch: ctx.transitions = *rl_batch; break;
        case ContextStrategyKind::recent: {
            if (buffer.recent_size() == 0) throw std::invalid_argument("sample_context: empty recent chunk");
            for (std::size_t i : sample_indices(buffer.recent_marker(), buffer.size(), context_size, rng)) {
                ctx.transitions.push_back(buffer.at(i));
            }
            break;
        }
        case ContextStrategyKind::entire_buffer:
            for (std::size_t i : sample_indices(0, buffer.size(), context_size, rng)) {
                ctx.transitions.push_back(buffer.at(i));
            }
            break;
    }
    return ctx;
}

/// n_traj distinct complete episodes, each in time order, concatenated.
template <class Rng>
ContextBatch sample_context_trajectories(const TaskBuffer& buffer, std::size_t n_traj, Rng& rng, int task_id = 0) {
    std::vector<std::size_t> starts = buffer.complete_episode_starts();
    if (starts.size() < n_traj) {
        throw std::invalid_argument("sample_context_trajectories: only " + std::to_string(starts.size()) +
                                    " complete episodes, " + std::to_string(n_traj) + " requested");
    }
    // Partial Fisher-Yates for distinct picks.
    for (std::size_t i = 0; i < n_traj; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, starts.size() - 1);
        std::swap(starts[i], starts[pick(rng)]);
    }
    ContextBatch ctx;
    ctx.task_id = task_id;
    for (std::size_t k = 0; k < n_traj; ++k) {
        auto [b, e] = buffer.episode_range(starts[k]);
        for (std::size_t i = b; i < e; ++i) ctx.transitions.push_back(buffer.at(i));
    }
    return ctx;
}

/// Up to n_traj distinct complete episodes, restricted to the recent chunk
/// when `recent_only`; at least one episode must qualify.
template <class Rng>
ContextBatch sample_recent_trajectories(const TaskBuffer& buffer, bool recent_only, std::size_t n_traj, Rng& rng,
                                        int task_id = 0) {
    std::vector<std::size_t> starts = buffer.complete_episode_starts();
    if (recent_only) {
        std::erase_if(starts, [&](std::size_t s) { return s < buffer.recent_marker(); });
    }
    if (starts.empty()) throw std::invalid_argument("sample_recent_trajectories: no complete episodes");
    const std::size_t n = std::min(n_traj, starts.size());
    for (std::size_t i = 0; i < n; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, starts.size() - 1);
        std::swap(starts[i], starts[pick(rng)]);
    }
    ContextBatch ctx;
    ctx.task_id = task_id;
    for (std::size_t k = 0; k < n; ++k) {
        auto [b, e] = buffer.episode_range(starts[k]);
        for (std::size_t i = b; i < e; ++i) ctx.transitions.push_back(buffer.at(i));
    }
    return ctx;
}

}  // namespace pearl
