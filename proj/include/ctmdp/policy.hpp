#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ctmdp/errors.hpp"

namespace ctmdp {

/// One action id per state (the cemetery/sink states are implicit).
struct DeterministicPolicy {
    std::vector<int> choice;
};

/// Probability weights over the admissible actions of each state, indexed by
/// action position; rows sum to one.
struct StationaryPolicy {
    std::vector<std::vector<double>> weights;

    void check(double tol = 1e-12) const {
        for (size_t x = 0; x < weights.size(); ++x) {
            double s = 0.0;
            for (double p : weights[x]) {
                if (p < -tol) throw DomainError("negative policy weight at state " + std::to_string(x));
                s += p;
            }
            if (std::abs(s - 1.0) > 1e-9)
                throw DomainError("policy weights at state " + std::to_string(x) +
                                  " sum to " + std::to_string(s));
        }
    }
};

/// Markov policy that is constant on time intervals; piece k applies on
/// [start_times[k], start_times[k+1]), the last piece onward.
struct PiecewisePolicy {
    std::vector<double> start_times; // start_times[0] == 0
    std::vector<StationaryPolicy> policies;
};

template <typename ModelLike>
StationaryPolicy to_stationary(const ModelLike& m, const DeterministicPolicy& f) {
    StationaryPolicy p;
    p.weights.resize(f.choice.size());
    for (size_t x = 0; x < f.choice.size(); ++x) {
        const int pos = m.action_pos(static_cast<int>(x), f.choice[x]);
        if (pos < 0)
            throw NoAdmissibleAction("policy picks inadmissible action " +
                                     std::to_string(f.choice[x]) + " at state " +
                                     std::to_string(x));
        p.weights[x].assign(m.num_actions(static_cast<int>(x)), 0.0);
        p.weights[x][pos] = 1.0;
    }
    return p;
}

template <typename ModelLike>
StationaryPolicy uniform_policy(const ModelLike& m, int n_states) {
    StationaryPolicy p;
    p.weights.resize(n_states);
    for (int x = 0; x < n_states; ++x) {
        const int na = m.num_actions(x);
        p.weights[x].assign(na, 1.0 / na);
    }
    return p;
}

} // namespace ctmdp
