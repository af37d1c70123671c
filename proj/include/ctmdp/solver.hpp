#pragma once

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "ctmdp/policy.hpp"
#include "ctmdp/reduction.hpp"
#include "ctmdp/simplex.hpp"
#include "ctmdp/transform.hpp"

namespace ctmdp {

/// Value vector over the reduced state space S + {cemetery, sink}; the sink
/// is always zero, the cemetery carries its single-visit cost.
struct ValueFunction {
    std::vector<double> values;
};

/// Expected visit-action mass per (state, action position) over S + {cemetery}.
struct OccupationMeasure {
    std::vector<std::vector<double>> mu;
};

struct SolveReport {
    int iterations = 0;
    double final_delta = 0.0;
    double error_bound = 0.0; // beta * delta / (1 - beta)
    double survival = 0.0;    // beta
    std::string lp_status;
    double runtime_sec = 0.0;
};

namespace detail {

class StopWatch {
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();

  public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    }
};

} // namespace detail

/// Value iteration from zero on the nonnegative-cost reduced model.
///
/// Iterates are pointwise nondecreasing; the run stops once the geometric
/// bound beta * delta / (1 - beta) certifies sup-norm accuracy eps. Throws
/// NoAdmissibleAction if a state has every action flagged, DivergenceGuard if
/// a value exceeds `ceiling`.
inline std::pair<ValueFunction, SolveReport> value_iteration(const DtmdpModel& d,
                                                             double eps = 1e-9,
                                                             double ceiling = 1e12) {
    detail::StopWatch watch;
    const int n = d.num_states();
    SolveReport rep;
    rep.survival = survival_factor(d);
    const double beta = rep.survival;

    for (int x = 0; x < d.num_interior(); ++x)
        if (!d.has_admissible(x))
            throw NoAdmissibleAction("all actions flagged at state " + std::to_string(x));

    std::vector<double> v(n, 0.0), next(n, 0.0);
    for (;;) {
        ++rep.iterations;
        for (int x = 0; x < n; ++x) {
            double best = kInf;
            for (int ai = 0; ai < d.num_actions(x); ++ai) {
                if (d.forbidden(x, ai)) continue;
                double q = d.costs[0][x][ai];
                for (const auto& [y, p] : d.trans[x][ai]) q += p * v[y];
                if (q < best) best = q;
            }
            next[x] = best;
        }
        double delta = 0.0, top = 0.0;
        for (int x = 0; x < n; ++x) {
            delta = std::max(delta, std::abs(next[x] - v[x]));
            top = std::max(top, next[x]);
        }
        if (top > ceiling)
            throw DivergenceGuard("value exceeded the divergence ceiling; some state may have "
                                  "infinite value");
        v.swap(next);
        rep.final_delta = delta;
        rep.error_bound = beta < 1.0 ? beta * delta / (1.0 - beta) : kInf;
        if (rep.error_bound <= eps) break;
    }
    rep.runtime_sec = watch.seconds();
    return {ValueFunction{std::move(v)}, rep};
}

/// Per-state argmin of the one-step lookahead; ties go to the lowest action id.
inline DeterministicPolicy extract_greedy_policy(const DtmdpModel& d, const ValueFunction& vf) {
    DeterministicPolicy f;
    f.choice.resize(d.num_interior());
    for (int x = 0; x < d.num_interior(); ++x) {
        double best = kInf;
        int best_id = -1;
        for (int ai = 0; ai < d.num_actions(x); ++ai) {
            if (d.forbidden(x, ai)) continue;
            double q = d.costs[0][x][ai];
            for (const auto& [y, p] : d.trans[x][ai]) q += p * vf.values[y];
            if (q < best) {
                best = q;
                best_id = d.action_sets[x][ai];
            }
        }
        if (best_id < 0)
            throw NoAdmissibleAction("all actions flagged at state " + std::to_string(x));
        f.choice[x] = best_id;
    }
    return f;
}

namespace detail {

/// Dense solve of V = C_p + T_p V on the transient states S + {cemetery}
/// for mixed rows given per transient state.
inline ValueFunction evaluate_rows(const DtmdpModel& d,
                                   const std::vector<std::vector<JumpEntry>>& rows,
                                   const std::vector<double>& cost_rows) {
    const int nt = d.num_states() - 1; // transient block: everything but the sink
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(nt, nt);
    Eigen::VectorXd b(nt);
    for (int x = 0; x < nt; ++x) {
        b(x) = cost_rows[x];
        for (const auto& [y, p] : rows[x])
            if (y < nt) a(x, y) -= p;
    }
    Eigen::PartialPivLU<Eigen::MatrixXd> lu(a);
    const Eigen::VectorXd sol = lu.solve(b);
    const double scale = std::max(1.0, b.cwiseAbs().maxCoeff());
    if (!sol.allFinite() || (a * sol - b).cwiseAbs().maxCoeff() > 1e-8 * scale)
        throw SingularSystem("policy evaluation system is numerically singular");
    ValueFunction vf;
    vf.values.assign(d.num_states(), 0.0);
    for (int x = 0; x < nt; ++x) vf.values[x] = sol(x);
    return vf;
}

} // namespace detail

/// Expands a deterministic choice on S into stationary weights over the
/// interior states of the reduced model.
inline StationaryPolicy to_stationary_interior(const DtmdpModel& d, const DeterministicPolicy& f) {
    StationaryPolicy p;
    const int ns = d.num_interior();
    if (static_cast<int>(f.choice.size()) != ns)
        throw DomainError("policy length does not match the interior state count");
    p.weights.resize(ns);
    for (int x = 0; x < ns; ++x) {
        const int pos = d.action_pos(x, f.choice[x]);
        if (pos < 0)
            throw NoAdmissibleAction("policy picks inadmissible action at state " +
                                     std::to_string(x));
        p.weights[x].assign(d.num_actions(x), 0.0);
        p.weights[x][pos] = 1.0;
    }
    return p;
}

/// Exact policy evaluation by a direct linear solve (unique solution since
/// the transient spectral radius is at most the survival factor).
inline ValueFunction policy_evaluation(const DtmdpModel& d, const StationaryPolicy& pol) {
    pol.check();
    const int nt = d.num_states() - 1;
    std::vector<std::vector<JumpEntry>> rows(nt);
    std::vector<double> cost_rows(nt, 0.0);
    for (int x = 0; x < nt; ++x) {
        std::vector<double> dense(d.num_states(), 0.0);
        for (int ai = 0; ai < d.num_actions(x); ++ai) {
            const double pw = x < d.num_interior() ? pol.weights[x][ai] : 1.0;
            if (pw == 0.0) continue;
            if (d.forbidden(x, ai))
                throw InfiniteCost("policy puts weight on a flagged action at state " +
                                   std::to_string(x));
            for (const auto& [y, p] : d.trans[x][ai]) dense[y] += pw * p;
            cost_rows[x] += pw * d.costs[0][x][ai];
        }
        for (int y = 0; y < d.num_states(); ++y)
            if (dense[y] != 0.0) rows[x].push_back({y, dense[y]});
    }
    return detail::evaluate_rows(d, rows, cost_rows);
}

inline ValueFunction policy_evaluation(const DtmdpModel& d, const DeterministicPolicy& f) {
    return policy_evaluation(d, to_stationary_interior(d, f));
}

/// Exhaustive oracle: evaluates every deterministic stationary policy and
/// returns the pointwise minimum together with a single policy attaining it
/// at every state simultaneously.
inline std::pair<std::vector<double>, DeterministicPolicy>
enumerate_bruteforce(const DtmdpModel& d, long long cap = 1'000'000) {
    const int ns = d.num_interior();
    long long count = 1;
    std::vector<std::vector<int>> admissible(ns);
    for (int x = 0; x < ns; ++x) {
        for (int ai = 0; ai < d.num_actions(x); ++ai)
            if (!d.forbidden(x, ai)) admissible[x].push_back(ai);
        if (admissible[x].empty())
            throw NoAdmissibleAction("all actions flagged at state " + std::to_string(x));
        count *= static_cast<long long>(admissible[x].size());
        if (count > cap) throw CapExceeded("policy space exceeds the enumeration cap");
    }

    std::vector<int> cursor(ns, 0);
    std::vector<double> best(d.num_states(), kInf);
    std::vector<std::vector<double>> all_values;
    std::vector<std::vector<int>> all_cursors;
    for (;;) {
        DeterministicPolicy f;
        f.choice.resize(ns);
        for (int x = 0; x < ns; ++x) f.choice[x] = d.action_sets[x][admissible[x][cursor[x]]];
        const auto vf = policy_evaluation(d, f);
        for (int x = 0; x < d.num_states(); ++x) best[x] = std::min(best[x], vf.values[x]);
        all_values.push_back(vf.values);
        all_cursors.push_back(cursor);

        int pos = ns - 1;
        while (pos >= 0 && ++cursor[pos] == static_cast<int>(admissible[pos].size()))
            cursor[pos--] = 0;
        if (pos < 0) break;
    }

    // A finite total-cost model admits a simultaneous minimizer; pick the
    // lexicographically first policy matching the pointwise minimum.
    for (size_t k = 0; k < all_values.size(); ++k) {
        double gap = 0.0;
        for (int x = 0; x < d.num_states(); ++x)
            gap = std::max(gap, all_values[k][x] - best[x]);
        if (gap <= 1e-9) {
            DeterministicPolicy f;
            f.choice.resize(ns);
            for (int x = 0; x < ns; ++x)
                f.choice[x] = d.action_sets[x][admissible[x][all_cursors[k][x]]];
            return {best, f};
        }
    }
    throw SingularSystem("no single policy attains the pointwise minimum"); // unreachable
}

/// Occupation-measure linear program for the constrained problem at a fixed
/// initial state. `bounds_reduced` are the constraint levels already mapped
/// to the reduced scale, b_j = d_j / w(x0) - shift / (alpha - rho).
///
/// Minimizes the expected total cost subject to flow balance on S+{cemetery},
/// nonnegativity, and the cost bounds; the stationary policy is recovered by
/// conditioning the measure, defaulting to the lowest admissible action where
/// the measure vanishes. Throws Infeasible when no measure satisfies the
/// bounds, Unbounded never (costs are nonnegative) except on corrupt input.
inline std::tuple<StationaryPolicy, OccupationMeasure, SolveReport>
solve_constrained_lp(const DtmdpModel& d, const std::vector<double>& bounds_reduced, int x0) {
    detail::StopWatch watch;
    const int ns = d.num_interior();
    const int cem = d.cemetery();
    if (static_cast<int>(bounds_reduced.size()) != d.num_costs() - 1)
        throw DomainError("one reduced bound per constraint cost expected");
    if (x0 < 0 || x0 >= ns) throw DomainError("initial state out of range");

    // Variable layout: admissible (x, ai) pairs over S, then the cemetery.
    std::vector<std::pair<int, int>> vars;
    for (int x = 0; x < ns; ++x)
        for (int ai = 0; ai < d.num_actions(x); ++ai)
            if (!d.forbidden(x, ai)) vars.push_back({x, ai});
    vars.push_back({cem, 0});
    const size_t nv = vars.size();

    LpProblem lp;
    lp.objective.resize(nv);
    for (size_t j = 0; j < nv; ++j) lp.objective[j] = d.costs[0][vars[j].first][vars[j].second];

    // Flow balance at every transient state y: out-mass minus in-mass equals
    // the initial impulse.
    lp.eq.assign(ns + 1, std::vector<double>(nv, 0.0));
    lp.eq_rhs.assign(ns + 1, 0.0);
    lp.eq_rhs[x0] = 1.0;
    for (size_t j = 0; j < nv; ++j) {
        const auto [x, ai] = vars[j];
        lp.eq[x][j] += 1.0;
        for (const auto& [y, p] : d.trans[x][ai])
            if (y <= cem) lp.eq[y][j] -= p;
    }
    for (int i = 1; i < d.num_costs(); ++i) {
        std::vector<double> row(nv);
        for (size_t j = 0; j < nv; ++j) row[j] = d.costs[i][vars[j].first][vars[j].second];
        lp.ub.push_back(std::move(row));
        lp.ub_rhs.push_back(bounds_reduced[i - 1]);
    }

    const LpSolution sol = solve_lp(lp);
    SolveReport rep;
    rep.iterations = sol.iterations;
    rep.survival = survival_factor(d);
    rep.runtime_sec = watch.seconds();
    if (sol.status == LpSolution::Status::Infeasible) {
        throw Infeasible("no feasible occupation measure at the given bounds");
    }
    if (sol.status == LpSolution::Status::Unbounded)
        throw Unbounded("occupation-measure program unbounded; inputs are corrupt");
    rep.lp_status = "optimal";

    OccupationMeasure mu;
    mu.mu.resize(ns + 1);
    for (int x = 0; x < ns; ++x) mu.mu[x].assign(d.num_actions(x), 0.0);
    mu.mu[cem].assign(1, 0.0);
    for (size_t j = 0; j < nv; ++j)
        mu.mu[vars[j].first][vars[j].second] = std::max(0.0, sol.x[j]);

    StationaryPolicy pol;
    pol.weights.resize(ns);
    for (int x = 0; x < ns; ++x) {
        const double total =
            std::accumulate(mu.mu[x].begin(), mu.mu[x].end(), 0.0);
        pol.weights[x].assign(d.num_actions(x), 0.0);
        if (total > 1e-12) {
            for (int ai = 0; ai < d.num_actions(x); ++ai) pol.weights[x][ai] = mu.mu[x][ai] / total;
        } else {
            for (int ai = 0; ai < d.num_actions(x); ++ai)
                if (!d.forbidden(x, ai)) {
                    pol.weights[x][ai] = 1.0; // unobservable state, lowest admissible id
                    break;
                }
        }
    }
    rep.final_delta = sol.objective;
    return {pol, mu, rep};
}

/// Exact expected total of one cost index under a policy, from the initial state.
inline double policy_cost_value(const DtmdpModel& d, const StationaryPolicy& pol, int cost_index,
                                int x0) {
    DtmdpModel scratch = d;
    scratch.costs[0] = d.costs[cost_index];
    return policy_evaluation(scratch, pol).values[x0];
}

// ---------------------------------------------------------------------------
// Exact evaluation on the original model (resolvent oracles)
// ---------------------------------------------------------------------------

namespace detail {

inline Eigen::MatrixXd mixed_generator(const CtmdpModel& m, const StationaryPolicy& pol) {
    const int n = m.num_states();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(n, n);
    for (int x = 0; x < n; ++x)
        for (int ai = 0; ai < m.num_actions(x); ++ai) {
            const double pw = pol.weights[x][ai];
            if (pw == 0.0) continue;
            for (const auto& [y, r] : m.jumps[x][ai]) g(x, y) += pw * r;
            g(x, x) -= pw * m.exit_rate[x][ai];
        }
    return g;
}

} // namespace detail

/// Solves (alpha I - Q_pi) v = rhs for the mixed generator of a stationary
/// policy; the system is strictly diagonally dominant for alpha > 0.
inline std::vector<double> resolvent_solve(const CtmdpModel& m, const StationaryPolicy& pol,
                                           const std::vector<double>& rhs) {
    pol.check();
    const int n = m.num_states();
    Eigen::MatrixXd a =
        m.discount * Eigen::MatrixXd::Identity(n, n) - detail::mixed_generator(m, pol);
    Eigen::VectorXd b(n);
    for (int x = 0; x < n; ++x) b(x) = rhs[x];
    const Eigen::VectorXd sol = Eigen::PartialPivLU<Eigen::MatrixXd>(a).solve(b);
    if (!sol.allFinite()) throw SingularSystem("resolvent solve failed");
    return {sol.data(), sol.data() + n};
}

/// Exact discounted value of cost index i under a stationary policy on the
/// original model, (alpha I - Q_pi)^{-1} c_pi.
inline std::vector<double> ctmdp_policy_value(const CtmdpModel& m, const StationaryPolicy& pol,
                                              int cost_index = 0) {
    const int n = m.num_states();
    std::vector<double> mixed_cost(n, 0.0);
    for (int x = 0; x < n; ++x)
        for (int ai = 0; ai < m.num_actions(x); ++ai) {
            const double pw = pol.weights[x][ai];
            if (pw == 0.0) continue;
            const double c = m.costs[cost_index][x][ai];
            if (std::isinf(c))
                throw InfiniteCost("policy puts weight on an infinite-cost action at state " +
                                   std::to_string(x));
            mixed_cost[x] += pw * c;
        }
    return resolvent_solve(m, pol, mixed_cost);
}

inline std::vector<double> ctmdp_policy_value(const CtmdpModel& m, const DeterministicPolicy& f,
                                              int cost_index = 0) {
    return ctmdp_policy_value(m, to_stationary(m, f), cost_index);
}

} // namespace ctmdp
