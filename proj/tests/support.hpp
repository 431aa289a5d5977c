#pragma once

#include "pearl/diffcore/param_store.hpp"
#include "pearl/envsuite/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace pearl::testing {

/// Central-difference gradient of `loss` over every value in `store`.
inline std::vector<double> numeric_grad(ParamStore& store, const std::function<double()>& loss, double h = 1e-5) {
    auto& v = store.values();
    std::vector<double> g(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double x = v[i];
        v[i] = x + h;
        const double up = loss();
        v[i] = x - h;
        const double down = loss();
        v[i] = x;
        g[i] = (up - down) / (2.0 * h);
    }
    return g;
}

/// ||a - b|| / max(||a||, ||b||); zero when both vanish.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& b) {
    double diff = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        diff += (a[i] - b[i]) * (a[i] - b[i]);
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    const double scale = std::sqrt(std::max(na, nb));
    return scale == 0.0 ? 0.0 : std::sqrt(diff) / scale;
}

inline bool all_zero(const std::vector<double>& g) {
    return std::all_of(g.begin(), g.end(), [](double x) { return x == 0.0; });
}

/// Adds N(0, sigma^2) noise to every parameter so that toy nets are far from
/// their near-zero initial output layers.
template <class Rng>
void jitter(ParamStore& store, Rng& rng, double sigma = 0.3) {
    std::normal_distribution<double> n(0.0, sigma);
    for (auto& v : store.values()) v += n(rng);
}

template <class Rng>
std::vector<Transition> random_transitions(std::size_t n, std::size_t s, std::size_t a, Rng& rng,
                                           bool last_done = true) {
    std::normal_distribution<double> nrm(0.0, 1.0);
    std::uniform_real_distribution<double> act(-0.9, 0.9);
    std::vector<Transition> out;
    for (std::size_t i = 0; i < n; ++i) {
        Transition t;
        for (std::size_t j = 0; j < s; ++j) t.state.push_back(nrm(rng));
        for (std::size_t j = 0; j < a; ++j) t.action.push_back(act(rng));
        for (std::size_t j = 0; j < s; ++j) t.next_state.push_back(nrm(rng));
        t.reward = nrm(rng);
        t.context_reward = nrm(rng);
        t.done = last_done && i + 1 == n;
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace pearl::testing
