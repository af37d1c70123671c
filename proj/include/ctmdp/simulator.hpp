#pragma once

#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "ctmdp/conditions.hpp"
#include "ctmdp/model.hpp"
#include "ctmdp/policy.hpp"

namespace ctmdp {

/// Piecewise-constant sample path: jump times, post-jump states and the
/// action drawn for each sojourn.
struct Trajectory {
    struct Jump {
        double time;
        int state;
        int action; // action id
    };
    std::vector<Jump> jumps;
    bool absorbed = false; // true when the last state has zero mixed rate
};

struct DiscountedCostEstimate {
    double mean = 0.0;
    double standard_error = 0.0;
    long long trajectories = 0;
    double tail_bound = 0.0;
};

// ---------------------------------------------------------------------------
// Deterministic per-trajectory random streams
// ---------------------------------------------------------------------------

namespace rng {

inline std::uint64_t splitmix64(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Stream derivation rule: the engine for trajectory k is seeded from
/// (master seed, k) only, so results do not depend on how trajectories are
/// partitioned across workers.
struct Stream {
    std::mt19937_64 engine;

    Stream(std::uint64_t master, std::uint64_t index)
        : engine(splitmix64(splitmix64(master) ^ splitmix64(index + 1))) {}

    double uniform() { return static_cast<double>(engine() >> 11) * 0x1.0p-53; }

    double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

    /// Index into `weights` proportional to the weights (their sum given).
    int categorical(const std::vector<double>& weights, double total) {
        double r = uniform() * total;
        for (size_t k = 0; k + 1 < weights.size(); ++k) {
            r -= weights[k];
            if (r < 0.0) return static_cast<int>(k);
        }
        return static_cast<int>(weights.size()) - 1;
    }
};

} // namespace rng

/// Deterministic pairwise summation; the result depends only on the element
/// order, never on worker count.
inline double pairwise_sum(const std::vector<double>& v, size_t lo, size_t hi) {
    if (hi - lo <= 8) {
        double s = 0.0;
        for (size_t i = lo; i < hi; ++i) s += v[i];
        return s;
    }
    const size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}
inline double pairwise_sum(const std::vector<double>& v) { return pairwise_sum(v, 0, v.size()); }

/// Worker count: `requested` if positive, otherwise the hardware count, in
/// both cases capped by the CTMDP_THREADS environment variable.
inline int worker_count(int requested = 0) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (n <= 0) n = 1;
    if (const char* cap = std::getenv("CTMDP_THREADS")) {
        const int c = std::atoi(cap);
        if (c > 0) n = std::min(n, c);
    }
    return n;
}

namespace detail {

/// Per-state mixed dynamics under a stationary policy: jump targets with
/// mixed rates, the mixed exit rate, and the mixed cost rate per index.
struct MixedDynamics {
    std::vector<std::vector<JumpEntry>> jumps; // mixed q_pi(y|x)
    std::vector<double> exit;                  // mixed q_{x,pi}
    std::vector<std::vector<double>> action_weights;
    std::vector<double> action_totals;

    MixedDynamics(const CtmdpModel& m, const StationaryPolicy& pol) {
        const int n = m.num_states();
        jumps.resize(n);
        exit.assign(n, 0.0);
        action_weights.resize(n);
        action_totals.assign(n, 1.0);
        for (int x = 0; x < n; ++x) {
            std::vector<double> dense(n, 0.0);
            for (int ai = 0; ai < m.num_actions(x); ++ai) {
                const double pw = pol.weights[x][ai];
                if (pw == 0.0) continue;
                for (const auto& [y, r] : m.jumps[x][ai]) dense[y] += pw * r;
                exit[x] += pw * m.exit_rate[x][ai];
            }
            for (int y = 0; y < n; ++y)
                if (dense[y] > 0.0) jumps[x].push_back({y, dense[y]});
            action_weights[x] = pol.weights[x];
        }
    }
};

/// States reachable from x0 through positive mixed rates.
inline std::vector<char> reachable_states(const MixedDynamics& dyn, int x0) {
    std::vector<char> seen(dyn.exit.size(), 0);
    std::vector<int> stack{x0};
    seen[x0] = 1;
    while (!stack.empty()) {
        const int x = stack.back();
        stack.pop_back();
        for (const auto& [y, r] : dyn.jumps[x])
            if (!seen[y]) {
                seen[y] = 1;
                stack.push_back(y);
            }
    }
    return seen;
}

inline Trajectory run_trajectory(const CtmdpModel& m, const MixedDynamics& dyn, int x0,
                                 double horizon, rng::Stream& stream) {
    Trajectory traj;
    double t = 0.0;
    int x = x0;
    for (;;) {
        const int ai = stream.categorical(dyn.action_weights[x], dyn.action_totals[x]);
        traj.jumps.push_back({t, x, m.action_sets[x][ai]});
        const double rate = dyn.exit[x];
        if (rate <= 0.0) {
            traj.absorbed = true;
            return traj;
        }
        const double sojourn = stream.exponential(rate);
        t += sojourn;
        if (t >= horizon) return traj;
        double total = 0.0;
        std::vector<double> ws(dyn.jumps[x].size());
        for (size_t k = 0; k < ws.size(); ++k) {
            ws[k] = dyn.jumps[x][k].second;
            total += ws[k];
        }
        x = dyn.jumps[x][stream.categorical(ws, total)].first;
    }
}

/// Discounted integral of a per-state cost rate along one trajectory, cut at
/// the horizon: sum_n rate(x_n) (e^{-alpha t_n} - e^{-alpha t_{n+1} ^ T}) / alpha.
inline double discounted_path_cost(const MixedDynamics& dyn,
                                   const std::vector<double>& state_rate, int x0, double horizon,
                                   double alpha, rng::Stream& stream) {
    double t = 0.0, acc = 0.0;
    int x = x0;
    for (;;) {
        stream.categorical(dyn.action_weights[x], dyn.action_totals[x]); // action draw
        const double rate = dyn.exit[x];
        double t_next;
        if (rate <= 0.0) {
            t_next = horizon;
        } else {
            t_next = t + stream.exponential(rate);
        }
        const double seg_end = std::min(t_next, horizon);
        acc += state_rate[x] * (std::exp(-alpha * t) - std::exp(-alpha * seg_end)) / alpha;
        if (rate <= 0.0 || t_next >= horizon) return acc;
        t = t_next;
        double total = 0.0;
        std::vector<double> ws(dyn.jumps[x].size());
        for (size_t k = 0; k < ws.size(); ++k) {
            ws[k] = dyn.jumps[x][k].second;
            total += ws[k];
        }
        x = dyn.jumps[x][stream.categorical(ws, total)].first;
    }
}

struct EstimateInputs {
    std::vector<double> state_rate; // mixed cost rate per state
    double bound_ratio;             // max |state_rate| / w over reachable states
};

inline DiscountedCostEstimate run_estimate(const CtmdpModel& m, const DriftCertificate& cert,
                                           const StationaryPolicy& pol, int x0,
                                           const EstimateInputs& in, long long n_traj,
                                           double horizon, std::uint64_t seed, int workers,
                                           std::vector<double>* samples_out = nullptr) {
    const MixedDynamics dyn(m, pol);
    const double residual = m.discount - cert.rho;

    if (horizon <= 0.0) {
        // Pick the horizon so the truncation bound is dwarfed by the noise:
        // tail <= 1e-4 * max(1, value scale proxy).
        const double scale = std::max(1.0, in.bound_ratio * cert.w[x0] / m.discount);
        const double target = 1e-4 * scale;
        const double top = in.bound_ratio * cert.w[x0] / residual;
        horizon = top > target ? std::log(top / target) / residual : 1.0;
        horizon = std::max(horizon, 1.0);
    }

    std::vector<double> sample(n_traj, 0.0);
    const int nw = worker_count(workers);
    auto body = [&](long long begin, long long end) {
        for (long long k = begin; k < end; ++k) {
            rng::Stream stream(seed, static_cast<std::uint64_t>(k));
            sample[k] = discounted_path_cost(dyn, in.state_rate, x0, horizon, m.discount, stream);
        }
    };
    if (nw <= 1 || n_traj < 2 * nw) {
        body(0, n_traj);
    } else {
        std::vector<std::thread> pool;
        const long long chunk = (n_traj + nw - 1) / nw;
        for (int w = 0; w < nw; ++w) {
            const long long b = w * chunk, e = std::min<long long>(n_traj, b + chunk);
            if (b >= e) break;
            pool.emplace_back(body, b, e);
        }
        for (auto& th : pool) th.join();
    }

    DiscountedCostEstimate est;
    est.trajectories = n_traj;
    est.mean = pairwise_sum(sample) / static_cast<double>(n_traj);
    std::vector<double> sq(n_traj);
    for (long long k = 0; k < n_traj; ++k) {
        const double dv = sample[k] - est.mean;
        sq[k] = dv * dv;
    }
    if (n_traj > 1)
        est.standard_error = std::sqrt(pairwise_sum(sq) /
                                       (static_cast<double>(n_traj) * (n_traj - 1.0)));
    est.tail_bound = in.bound_ratio * cert.w[x0] * std::exp(-residual * horizon) / residual;
    if (samples_out) *samples_out = std::move(sample);
    return est;
}

} // namespace detail

/// Samples the marked point process under a stationary policy: exponential
/// sojourns at the mixed rate, jumps from the mixed kernel, one action draw
/// per sojourn for attribution. Zero mixed rate means the state absorbs.
inline Trajectory simulate_trajectory(const CtmdpModel& m, const StationaryPolicy& pol, int x0,
                                      double horizon, std::uint64_t seed,
                                      std::uint64_t trajectory_index = 0) {
    pol.check();
    detail::MixedDynamics dyn(m, pol);
    rng::Stream stream(seed, trajectory_index);
    return detail::run_trajectory(m, dyn, x0, horizon, stream);
}

/// Monte-Carlo estimate of the discounted cost of index i under a stationary
/// policy, with the analytic truncation bound reported alongside the noise.
/// Throws InfiniteCost when the policy weights an infinite-cost action at a
/// state reachable from x0.
inline DiscountedCostEstimate estimate_discounted_cost(const CtmdpModel& m,
                                                       const DriftCertificate& cert,
                                                       const StationaryPolicy& pol, int x0,
                                                       int cost_index, long long n_traj,
                                                       double horizon = 0.0,
                                                       std::uint64_t seed = 1, int workers = 0,
                                                       std::vector<double>* samples_out = nullptr) {
    pol.check();
    if (cost_index < 0 || cost_index >= m.num_costs()) throw DomainError("bad cost index");
    detail::MixedDynamics dyn(m, pol);
    const auto seen = detail::reachable_states(dyn, x0);

    detail::EstimateInputs in;
    in.state_rate.assign(m.num_states(), 0.0);
    in.bound_ratio = 0.0;
    for (int x = 0; x < m.num_states(); ++x) {
        for (int ai = 0; ai < m.num_actions(x); ++ai) {
            const double pw = pol.weights[x][ai];
            if (pw == 0.0) continue;
            const double c = m.costs[cost_index][x][ai];
            if (std::isinf(c)) {
                if (seen[x])
                    throw InfiniteCost("policy weights an infinite-cost action at reachable "
                                       "state " + std::to_string(x));
                in.state_rate[x] = 0.0;
                break;
            }
            in.state_rate[x] += pw * c;
        }
        if (seen[x]) in.bound_ratio = std::max(in.bound_ratio, std::abs(in.state_rate[x]) / cert.w[x]);
    }
    return detail::run_estimate(m, cert, pol, x0, in, n_traj, horizon, seed, workers, samples_out);
}

/// Monte-Carlo estimate of the discounted drift-function integral
/// E[ int e^{-alpha t} w(xi_t) dt ]; the two-sided bound constant is one.
inline DiscountedCostEstimate estimate_w_integral(const CtmdpModel& m,
                                                  const DriftCertificate& cert,
                                                  const StationaryPolicy& pol, int x0,
                                                  long long n_traj, double horizon = 0.0,
                                                  std::uint64_t seed = 1, int workers = 0) {
    pol.check();
    detail::EstimateInputs in;
    in.state_rate = cert.w;
    in.bound_ratio = 1.0;
    return detail::run_estimate(m, cert, pol, x0, in, n_traj, horizon, seed, workers);
}

} // namespace ctmdp
