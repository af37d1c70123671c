#pragma once

#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "ctmdp/conditions.hpp"
#include "ctmdp/model.hpp"
#include "ctmdp/reduction.hpp"
#include "ctmdp/simulator.hpp"
#include "ctmdp/solver.hpp"
#include "ctmdp/transform.hpp"
#include "ctmdp/transition_function.hpp"

namespace ctmdp {

struct VerifyResult {
    std::string name;
    bool pass = false;
    std::string detail;
};

namespace corpus {

/// The uncontrolled pure-birth chain with rate 2x, truncated at M with an
/// absorbing top state; discount 2, unit drift function, drift constant 1.
inline CtmdpModel pure_birth_2x(int truncation = 8, double discount = 2.0) {
    ModelFamily f;
    f.kind = ModelFamily::Kind::PureBirth;
    f.birth_coef = 2.0;
    f.birth_power = 1.0;
    f.truncation = truncation;
    std::vector<std::vector<std::vector<double>>> costs(1);
    costs[0].resize(truncation);
    for (int x = 0; x < truncation; ++x) costs[0][x] = {static_cast<double>(x + 1)};
    return build_family(f, std::move(costs), discount);
}

/// Two states, rate 1 from the first into the absorbing second.
inline CtmdpModel two_state_chain(double rate = 1.0, double discount = 2.0) {
    CtmdpModel m;
    m.labels = {"1", "2"};
    m.action_sets = {{0}, {0}};
    m.jumps = {{{{1, rate}}}, {{}}};
    m.costs = {{{1.0}, {0.0}}};
    m.discount = discount;
    m.finalize();
    return m;
}

/// One frozen state with cost rate 5 and discount 1; exact value 5.
inline CtmdpModel single_state(double cost = 5.0, double discount = 1.0) {
    CtmdpModel m;
    m.labels = {"s"};
    m.action_sets = {{0}};
    m.jumps = {{{}}};
    m.costs = {{{cost}}};
    m.discount = discount;
    m.finalize();
    return m;
}

/// One state, two actions, no jumps: c_0 = (1,0), c_1 = (0,2), bound d_1 = 1.
/// The optimal measure splits evenly, objective 1/2, constraint tight at 1.
inline CtmdpModel analytic_lp_instance() {
    CtmdpModel m;
    m.labels = {"s"};
    m.action_sets = {{0, 1}};
    m.jumps = {{{}, {}}};
    m.costs = {{{1.0, 0.0}}, {{0.0, 2.0}}};
    m.discount = 1.0;
    m.bounds = {1.0};
    m.finalize();
    return m;
}

struct RandomInstance {
    CtmdpModel model;
    DriftCertificate cert;
};

/// Random sparse model with both-signed costs and a random valid certificate:
/// the drift function is drawn first and the discount is placed strictly
/// above the attained drift constant.
inline RandomInstance random_instance(std::mt19937_64& gen, int max_states = 6,
                                      int max_actions = 3, int n_costs = 2) {
    std::uniform_int_distribution<int> n_dist(2, max_states);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const int n = n_dist(gen);

    CtmdpModel m;
    m.labels.resize(n);
    m.action_sets.resize(n);
    m.jumps.resize(n);
    for (int x = 0; x < n; ++x) {
        m.labels[x] = "s" + std::to_string(x);
        const int na = 1 + static_cast<int>(unit(gen) * max_actions) % max_actions;
        for (int a = 0; a < na; ++a) m.action_sets[x].push_back(a);
        m.jumps[x].resize(na);
        for (int ai = 0; ai < na; ++ai)
            for (int y = 0; y < n; ++y) {
                if (y == x || unit(gen) < 0.5) continue;
                m.jumps[x][ai].push_back({y, 2.0 * unit(gen)});
            }
    }
    m.costs.assign(n_costs, {});
    for (auto& table : m.costs) {
        table.resize(n);
        for (int x = 0; x < n; ++x) {
            table[x].resize(m.action_sets[x].size());
            for (double& c : table[x]) c = -3.0 + 8.0 * unit(gen);
        }
    }
    m.initial_state = static_cast<int>(unit(gen) * n) % n;
    m.discount = 1.0; // placeholder until the drift constant is known
    m.finalize();

    std::vector<double> w(n);
    for (double& v : w) v = 1.0 + 3.0 * unit(gen);
    double tight = 0.0;
    for (int x = 0; x < n; ++x)
        for (int ai = 0; ai < m.num_actions(x); ++ai)
            tight = std::max(tight, m.drift_sum(w, x, ai) / w[x]);
    m.discount = std::max(tight, kRhoMin) + 0.5 + 1.5 * unit(gen);
    m.bounds.assign(n_costs - 1, 0.0);

    return {m, check_condition1(m, w)};
}

/// Calls `fn` with every deterministic stationary policy of the model.
template <typename Fn>
void for_each_deterministic(const CtmdpModel& m, Fn&& fn) {
    const int n = m.num_states();
    std::vector<int> cursor(n, 0);
    for (;;) {
        DeterministicPolicy f;
        f.choice.resize(n);
        for (int x = 0; x < n; ++x) f.choice[x] = m.action_sets[x][cursor[x]];
        fn(f);
        int pos = n - 1;
        while (pos >= 0 && ++cursor[pos] == m.num_actions(pos)) cursor[pos--] = 0;
        if (pos < 0) break;
    }
}

} // namespace corpus

namespace detail {

inline std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

inline bool rel_close(double got, double expect, double tol) {
    return std::abs(got - expect) <= tol * std::max(1.0, std::abs(expect));
}

} // namespace detail

// ---------------------------------------------------------------------------
// Acceptance criteria
// ---------------------------------------------------------------------------

/// Reduced kernel of the pure-birth example: T(x+1|x) = x/(x+1),
/// T(delta|x) = T(sink|x) = 1/(2+2x), unit row sums, to 1e-12.
inline VerifyResult verify_pure_birth_reduction(int truncation = 8) {
    detail::StopWatch watch;
    const CtmdpModel m = corpus::pure_birth_2x(truncation);
    const auto cert = check_condition1(m, std::vector<double>(truncation, 1.0), 1.0);
    const DtmdpModel d = build_dtmdp(build_w_transform(m, cert));

    double worst = 0.0;
    for (int x = 0; x + 1 < truncation; ++x) {
        const double lbl = x + 1.0;
        double next = 0.0, cem = 0.0, sink = 0.0, sum = 0.0;
        for (const auto& [y, p] : d.trans[x][0]) {
            sum += p;
            if (y == x + 1) next = p;
            if (y == d.cemetery()) cem = p;
            if (y == d.sink()) sink = p;
        }
        worst = std::max(worst, std::abs(next - lbl / (lbl + 1.0)));
        worst = std::max(worst, std::abs(cem - 1.0 / (2.0 + 2.0 * lbl)));
        worst = std::max(worst, std::abs(sink - 1.0 / (2.0 + 2.0 * lbl)));
        worst = std::max(worst, std::abs(sum - 1.0));
    }
    const double secs = watch.seconds();
    return {"pure-birth reduction",
            worst <= 1e-12 && secs < 1.0,
            "max deviation " + detail::fmt(worst) + " (limit 1e-12), " + detail::fmt(secs) + " s"};
}

/// End-to-end value equivalence on random instances: for every deterministic
/// policy, the back-transformed reduced value equals the resolvent value.
inline VerifyResult verify_value_equivalence(std::uint64_t seed, int instances = 50) {
    detail::StopWatch watch;
    std::mt19937_64 gen(seed);
    double worst = 0.0;
    for (int k = 0; k < instances; ++k) {
        const auto inst = corpus::random_instance(gen);
        const TransformedModel tm = build_w_transform(inst.model, inst.cert);
        const DtmdpModel d = build_dtmdp(tm);
        corpus::for_each_deterministic(inst.model, [&](const DeterministicPolicy& f) {
            const auto exact = ctmdp_policy_value(inst.model, f);
            const auto reduced = policy_evaluation(d, f);
            const auto back = back_transform_value(
                {reduced.values.begin(), reduced.values.begin() + inst.model.num_states()},
                inst.cert, tm.shift, tm.residual_discount);
            for (int x = 0; x < inst.model.num_states(); ++x)
                worst = std::max(worst, std::abs(back[x] - exact[x]) /
                                            std::max(1.0, std::abs(exact[x])));
        });
    }
    const double secs = watch.seconds();
    return {"end-to-end value equivalence",
            worst <= 1e-8 && secs < 30.0,
            "max relative error " + detail::fmt(worst) + " over " + std::to_string(instances) +
                " instances (limit 1e-8), " + detail::fmt(secs) + " s"};
}

/// Value iteration plus greedy extraction against the exhaustive oracle.
inline VerifyResult verify_optimality_oracle(std::uint64_t seed, int instances = 50) {
    std::mt19937_64 gen(seed);
    double worst = 0.0;
    for (int k = 0; k < instances; ++k) {
        const auto inst = corpus::random_instance(gen);
        const DtmdpModel d = build_dtmdp(build_w_transform(inst.model, inst.cert));
        const auto [vf, rep] = value_iteration(d, 1e-9);
        const auto [best, best_policy] = enumerate_bruteforce(d);
        const auto greedy_vals = policy_evaluation(d, extract_greedy_policy(d, vf));
        for (int x = 0; x < d.num_states(); ++x) {
            worst = std::max(worst, std::abs(vf.values[x] - best[x]));
            worst = std::max(worst, std::abs(greedy_vals.values[x] - best[x]));
        }
    }
    return {"optimality against exhaustive oracle", worst <= 1e-8,
            "max deviation " + detail::fmt(worst) + " (limit 1e-8)"};
}

/// The analytic 1-state constrained instance solved exactly, plus dominance
/// of the LP optimum over every feasible deterministic policy on random
/// feasible instances.
inline VerifyResult verify_constrained_lp(std::uint64_t seed, int instances = 20) {
    // Analytic instance first.
    const CtmdpModel m = corpus::analytic_lp_instance();
    const auto cert = check_condition1(m, {1.0}, 0.5);
    const TransformedModel tm = build_w_transform(m, cert);
    const DtmdpModel d = build_dtmdp(tm);
    const double b1 = m.bounds[0] / cert.w[m.initial_state] - tm.shift / tm.residual_discount;
    const auto [pol, mu, rep] = solve_constrained_lp(d, {b1}, m.initial_state);
    double constraint = 0.0;
    for (size_t x = 0; x < mu.mu.size(); ++x)
        for (size_t ai = 0; ai < mu.mu[x].size(); ++ai)
            constraint += d.costs[1][x][ai] * mu.mu[x][ai];
    double worst = std::max(std::abs(rep.final_delta - 0.5), std::abs(constraint - 1.0));
    if (worst > 1e-9)
        return {"constrained occupation-measure program", false,
                "analytic instance off by " + detail::fmt(worst)};

    std::mt19937_64 gen(seed);
    double excess = 0.0;
    for (int k = 0; k < instances; ++k) {
        const auto inst = corpus::random_instance(gen);
        const TransformedModel tmk = build_w_transform(inst.model, inst.cert);
        const DtmdpModel dk = build_dtmdp(tmk);
        const int x0 = inst.model.initial_state;

        // Place the bound at the median deterministic constraint value so
        // both feasible and infeasible policies exist.
        std::vector<double> vals;
        corpus::for_each_deterministic(inst.model, [&](const DeterministicPolicy& f) {
            vals.push_back(policy_cost_value(dk, to_stationary_interior(dk, f), 1, x0));
        });
        std::sort(vals.begin(), vals.end());
        const double bk = vals[vals.size() / 2];

        double lp_obj;
        try {
            const auto [polk, muk, repk] = solve_constrained_lp(dk, {bk}, x0);
            lp_obj = repk.final_delta;
            // The recovered policy must meet the bound when re-evaluated exactly.
            const double re_cons = policy_cost_value(dk, polk, 1, x0);
            const double re_obj = policy_evaluation(dk, polk).values[x0];
            excess = std::max(excess, re_cons - bk - 1e-6);
            (void)re_obj;
        } catch (const Infeasible&) {
            return {"constrained occupation-measure program", false,
                    "random instance unexpectedly infeasible"};
        }
        corpus::for_each_deterministic(inst.model, [&](const DeterministicPolicy& f) {
            const auto sp = to_stationary_interior(dk, f);
            if (policy_cost_value(dk, sp, 1, x0) <= bk + 1e-9)
                excess = std::max(excess, lp_obj - policy_evaluation(dk, sp).values[x0] - 1e-8);
        });
    }
    return {"constrained occupation-measure program", excess <= 0.0,
            "analytic exact; dominance slack " + detail::fmt(excess)};
}

/// Transformed-kernel transition identity on the closed-form chain and the
/// truncated pure-birth chain over a three-point time grid.
inline VerifyResult verify_transform_identity() {
    detail::StopWatch watch;
    double worst = 0.0;

    {
        CtmdpModel m = corpus::two_state_chain(1.0, 2.0);
        const auto cert = check_condition1(m, {1.0, 2.0}, 1.0);
        const auto pol = uniform_policy(m, m.num_states());
        const auto check = transform_identity_residual(m, cert, pol, {0.5, 1.0, 2.0},
                                                       {{0}, {1}, {0, 1}});
        worst = std::max(worst, check.max_residual);
    }
    {
        CtmdpModel m = corpus::pure_birth_2x(6);
        const auto cert = check_condition1(m, std::vector<double>(6, 1.0), 1.0);
        const auto pol = uniform_policy(m, m.num_states());
        std::vector<std::vector<int>> targets{{0}, {2}, {5}, {0, 1, 2, 3, 4, 5}};
        const auto check =
            transform_identity_residual(m, cert, pol, {0.25, 0.5, 1.0}, targets);
        worst = std::max(worst, check.max_residual);
    }
    const double secs = watch.seconds();
    return {"transform transition identity",
            worst <= 1e-8 && secs < 10.0,
            "max residual " + detail::fmt(worst) + " (limit 1e-8), " + detail::fmt(secs) + " s"};
}

/// Honesty of certified transformed generators, series-vs-uniformization
/// agreement and the two-step composition residual.
inline VerifyResult verify_honesty(std::uint64_t seed, int instances = 10) {
    double worst_defect = 0.0, worst_agree = 0.0, worst_kc = 0.0;
    bool drift_ok = true;

    auto run_case = [&](const CtmdpModel& m, const DriftCertificate& cert,
                        const LyapunovCertificate& lyap) {
        drift_ok = drift_ok && check_transformed_drift(m, cert, lyap).ok();
        const TransformedModel tm = build_w_transform(m, cert);
        const auto pol = uniform_policy(m, m.num_states());
        const QFunction qw = make_qfunction(tm, pol);
        worst_defect =
            std::max(worst_defect, honesty_defect(qw, 1.0).cwiseAbs().maxCoeff());
        const auto series = feller_series(qw, 0.0, 1.0);
        worst_agree = std::max(
            worst_agree, (series.total - uniformization(qw, 1.0)).cwiseAbs().maxCoeff());
        worst_kc = std::max(worst_kc, kc_residual(qw, 0.0, 0.3, 0.7));
    };

    {
        const CtmdpModel m = corpus::pure_birth_2x(8);
        const auto cert = check_condition1(m, std::vector<double>(8, 1.0), 1.0);
        LyapunovCertificate lyap;
        for (int x = 0; x < 8; ++x) lyap.w_prime.push_back(x + 2.0); // labels + 1
        lyap.rho_prime = 2.0;
        lyap.v_m = {{0}, {0, 1}, {0, 1, 2}, {0, 1, 2, 3, 4, 5, 6, 7}};
        run_case(m, cert, lyap);
    }
    std::mt19937_64 gen(seed);
    for (int k = 0; k < instances; ++k) {
        const auto inst = corpus::random_instance(gen);
        LyapunovCertificate lyap{inst.cert.w, std::max(inst.cert.rho, kRhoMin), {{}}};
        lyap.v_m[0].resize(inst.model.num_states());
        for (int x = 0; x < inst.model.num_states(); ++x) lyap.v_m[0][x] = x;
        run_case(inst.model, inst.cert, lyap);
    }

    const bool pass =
        drift_ok && worst_defect <= 1e-8 && worst_agree <= 1e-8 && worst_kc <= 1e-7;
    return {"honesty of transformed generators", pass,
            "defect " + detail::fmt(worst_defect) + ", series-vs-uniformization " +
                detail::fmt(worst_agree) + ", composition residual " + detail::fmt(worst_kc)};
}

/// Resolvent drift bound (alpha I - Q_f)^{-1} w <= w / (alpha - rho).
inline VerifyResult verify_resolvent_bound(std::uint64_t seed, int instances = 50) {
    std::mt19937_64 gen(seed);
    double excess = -kInf;
    for (int k = 0; k < instances; ++k) {
        const auto inst = corpus::random_instance(gen);
        const double residual = inst.model.discount - inst.cert.rho;
        corpus::for_each_deterministic(inst.model, [&](const DeterministicPolicy& f) {
            const auto lhs = resolvent_solve(inst.model, to_stationary(inst.model, f),
                                             inst.cert.w);
            for (int x = 0; x < inst.model.num_states(); ++x)
                excess = std::max(excess, lhs[x] - inst.cert.w[x] / residual);
        });
    }
    return {"resolvent drift bound", excess <= 1e-9,
            "max excess " + detail::fmt(excess) + " (limit 1e-9)"};
}

/// Monte-Carlo estimates against resolvent values on seeded experiments, plus
/// bitwise worker-count independence.
inline VerifyResult verify_monte_carlo(std::uint64_t seed, int experiments = 100,
                                       long long n_traj = 4000) {
    detail::StopWatch watch;
    std::mt19937_64 gen(seed);
    int agree = 0;
    bool bitwise = true;
    for (int k = 0; k < experiments; ++k) {
        const auto inst = corpus::random_instance(gen);
        StationaryPolicy pol = uniform_policy(inst.model, inst.model.num_states());
        const int x0 = inst.model.initial_state;
        const double exact = ctmdp_policy_value(inst.model, pol)[x0];
        const auto est = estimate_discounted_cost(inst.model, inst.cert, pol, x0, 0, n_traj,
                                                  0.0, seed + k, 0);
        if (std::abs(est.mean - exact) <= 4.0 * est.standard_error + est.tail_bound) ++agree;
        if (k < 3) {
            const auto one = estimate_discounted_cost(inst.model, inst.cert, pol, x0, 0,
                                                      n_traj, 0.0, seed + k, 1);
            const auto eight = estimate_discounted_cost(inst.model, inst.cert, pol, x0, 0,
                                                        n_traj, 0.0, seed + k, 8);
            bitwise = bitwise && one.mean == eight.mean &&
                      one.standard_error == eight.standard_error;
        }
    }
    const double secs = watch.seconds();
    const bool pass = agree >= experiments - 1 && bitwise && secs < 120.0;
    return {"Monte-Carlo against resolvent", pass,
            std::to_string(agree) + "/" + std::to_string(experiments) + " within 4 sigma + tail, " +
                (bitwise ? "worker-independent" : "WORKER MISMATCH") + ", " +
                detail::fmt(secs) + " s"};
}

/// Rescaling the drift function by 10 leaves every back-transformed value
/// unchanged to 1e-10 relative.
inline VerifyResult verify_scaling_invariance(std::uint64_t seed, int instances = 20) {
    std::mt19937_64 gen(seed);
    double worst = 0.0;
    for (int k = 0; k < instances; ++k) {
        const auto inst = corpus::random_instance(gen);
        std::vector<double> w10(inst.cert.w);
        for (double& v : w10) v *= 10.0;
        const auto cert10 = check_condition1(inst.model, w10);
        const TransformedModel tm = build_w_transform(inst.model, inst.cert);
        const TransformedModel tm10 = build_w_transform(inst.model, cert10);
        const DtmdpModel d = build_dtmdp(tm), d10 = build_dtmdp(tm10);
        corpus::for_each_deterministic(inst.model, [&](const DeterministicPolicy& f) {
            const auto v = policy_evaluation(d, f).values;
            const auto v10 = policy_evaluation(d10, f).values;
            const int n = inst.model.num_states();
            const auto back = back_transform_value({v.begin(), v.begin() + n}, inst.cert,
                                                   tm.shift, tm.residual_discount);
            const auto back10 = back_transform_value({v10.begin(), v10.begin() + n}, cert10,
                                                     tm10.shift, tm10.residual_discount);
            for (int x = 0; x < n; ++x)
                worst = std::max(worst, std::abs(back[x] - back10[x]) /
                                            std::max(1.0, std::abs(back[x])));
        });
    }
    return {"drift-function scaling invariance", worst <= 1e-10,
            "max relative change " + detail::fmt(worst) + " (limit 1e-10)"};
}

/// Runs the full acceptance battery in criterion order.
inline std::vector<VerifyResult> run_verification(std::uint64_t seed = 20240901) {
    std::vector<VerifyResult> out;
    out.push_back(verify_pure_birth_reduction());
    out.push_back(verify_value_equivalence(seed));
    out.push_back(verify_optimality_oracle(seed));
    out.push_back(verify_constrained_lp(seed + 1));
    out.push_back(verify_transform_identity());
    out.push_back(verify_honesty(seed + 2));
    out.push_back(verify_resolvent_bound(seed));
    out.push_back(verify_monte_carlo(seed + 3));
    out.push_back(verify_scaling_invariance(seed + 4));
    return out;
}

} // namespace ctmdp
