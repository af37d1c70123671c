#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "ctmdp/simplex.hpp"
#include "ctmdp/solver.hpp"
#include "ctmdp/verify.hpp"

using namespace ctmdp;

namespace {

DtmdpModel reduce(const CtmdpModel& m, const DriftCertificate& cert) {
    return build_dtmdp(build_w_transform(m, cert));
}

/// One Bellman sweep, reimplemented here so monotonicity can be observed
/// independently of the production iteration loop.
std::vector<double> bellman_sweep(const DtmdpModel& d, const std::vector<double>& v) {
    std::vector<double> out(v.size());
    for (int x = 0; x < d.num_states(); ++x) {
        double best = kInf;
        for (int ai = 0; ai < d.num_actions(x); ++ai) {
            if (d.forbidden(x, ai)) continue;
            double q = d.costs[0][x][ai];
            for (const auto& [y, p] : d.trans[x][ai]) q += p * v[y];
            best = std::min(best, q);
        }
        out[x] = best;
    }
    return out;
}

} // namespace

TEST_CASE("value iteration") {
    SECTION("zero costs converge immediately") {
        CtmdpModel m = corpus::pure_birth_2x(4);
        for (auto& row : m.costs[0])
            for (double& v : row) v = 0.0;
        const auto cert = check_condition1(m, std::vector<double>(4, 1.0), 1.0);
        const auto [vf, rep] = value_iteration(reduce(m, cert));
        for (double v : vf.values) CHECK(v == 0.0);
        CHECK(rep.iterations <= 2);
    }
    SECTION("single frozen state earns its one-visit cost") {
        const CtmdpModel m = corpus::single_state(5.0, 1.0);
        const auto cert = check_condition1(m, {1.0}, 0.5);
        const auto tm = build_w_transform(m, cert);
        const auto [vf, rep] = value_iteration(build_dtmdp(tm));
        CHECK(vf.values[0] == Catch::Approx(5.0).margin(1e-9));
        const auto back = back_transform_value({vf.values[0]}, cert, tm.shift,
                                               tm.residual_discount);
        CHECK(back[0] == Catch::Approx(5.0).margin(1e-8));
    }
    SECTION("iterates from zero are pointwise nondecreasing") {
        std::mt19937_64 gen(41);
        const auto inst = corpus::random_instance(gen);
        const DtmdpModel d = reduce(inst.model, inst.cert);
        std::vector<double> v(d.num_states(), 0.0);
        for (int it = 0; it < 30; ++it) {
            const auto next = bellman_sweep(d, v);
            for (size_t x = 0; x < v.size(); ++x) CHECK(next[x] >= v[x] - 1e-15);
            v = next;
        }
    }
    SECTION("certified error bound holds against the exhaustive oracle") {
        std::mt19937_64 gen(43);
        for (int k = 0; k < 10; ++k) {
            const auto inst = corpus::random_instance(gen);
            const DtmdpModel d = reduce(inst.model, inst.cert);
            const auto [vf, rep] = value_iteration(d, 1e-6);
            const auto [best, policy] = enumerate_bruteforce(d);
            for (int x = 0; x < d.num_states(); ++x)
                CHECK(std::abs(vf.values[x] - best[x]) <= rep.error_bound + 1e-12);
        }
    }
}

TEST_CASE("greedy extraction") {
    SECTION("single action per state is returned unchanged") {
        const CtmdpModel m = corpus::pure_birth_2x(4);
        const auto cert = check_condition1(m, std::vector<double>(4, 1.0), 1.0);
        const DtmdpModel d = reduce(m, cert);
        const auto [vf, rep] = value_iteration(d);
        const auto f = extract_greedy_policy(d, vf);
        CHECK(f.choice == std::vector<int>{0, 0, 0, 0});
    }
    SECTION("exact ties go to the lower action id") {
        CtmdpModel m;
        m.labels = {"s"};
        m.action_sets = {{0, 1}};
        m.jumps = {{{}, {}}};
        m.costs = {{{3.0, 3.0}}};
        m.discount = 1.0;
        m.finalize();
        const auto cert = check_condition1(m, {1.0}, 0.5);
        const DtmdpModel d = reduce(m, cert);
        const auto [vf, rep] = value_iteration(d);
        CHECK(extract_greedy_policy(d, vf).choice == std::vector<int>{0});
    }
    SECTION("greedy value matches the exhaustive optimum") {
        std::mt19937_64 gen(47);
        for (int k = 0; k < 10; ++k) {
            const auto inst = corpus::random_instance(gen);
            const DtmdpModel d = reduce(inst.model, inst.cert);
            const auto [vf, rep] = value_iteration(d, 1e-10);
            const auto greedy = extract_greedy_policy(d, vf);
            const auto [best, policy] = enumerate_bruteforce(d);
            const auto gv = policy_evaluation(d, greedy);
            for (int x = 0; x < d.num_states(); ++x)
                CHECK(gv.values[x] == Catch::Approx(best[x]).margin(1e-8));
        }
    }
}

TEST_CASE("policy evaluation") {
    SECTION("zero costs evaluate to zero") {
        CtmdpModel m = corpus::pure_birth_2x(4);
        for (auto& row : m.costs[0])
            for (double& v : row) v = 0.0;
        const auto cert = check_condition1(m, std::vector<double>(4, 1.0), 1.0);
        const auto vf = policy_evaluation(reduce(m, cert), DeterministicPolicy{{0, 0, 0, 0}});
        for (double v : vf.values) CHECK(v == Catch::Approx(0.0).margin(1e-15));
    }
    SECTION("agrees with value iteration on a single-policy model") {
        const CtmdpModel m = corpus::pure_birth_2x(4);
        const auto cert = check_condition1(m, std::vector<double>(4, 1.0), 1.0);
        const DtmdpModel d = reduce(m, cert);
        const auto [vf, rep] = value_iteration(d, 1e-10);
        const auto pv = policy_evaluation(d, DeterministicPolicy{{0, 0, 0, 0}});
        for (int x = 0; x < d.num_states(); ++x)
            CHECK(pv.values[x] == Catch::Approx(vf.values[x]).margin(1e-8));
    }
    SECTION("even mixture on the two-action instance") {
        const CtmdpModel m = corpus::analytic_lp_instance();
        const auto cert = check_condition1(m, {1.0}, 0.5);
        const DtmdpModel d = reduce(m, cert);
        StationaryPolicy half{{{0.5, 0.5}}};
        CHECK(policy_evaluation(d, half).values[0] == Catch::Approx(0.5));
        CHECK(policy_cost_value(d, half, 1, 0) == Catch::Approx(1.0));
    }
}

TEST_CASE("exhaustive enumeration") {
    SECTION("counts the full product space") {
        std::mt19937_64 gen(53);
        const auto inst = corpus::random_instance(gen);
        const DtmdpModel d = reduce(inst.model, inst.cert);
        long long count = 1;
        for (int x = 0; x < d.num_interior(); ++x) count *= d.num_actions(x);
        if (count > 2) CHECK_THROWS_AS(enumerate_bruteforce(d, count - 1), CapExceeded);
        CHECK_NOTHROW(enumerate_bruteforce(d, count));
    }
    SECTION("matches value iteration on a five-state three-action instance") {
        std::mt19937_64 gen(59);
        CtmdpModel m;
        const int n = 5;
        m.labels.resize(n);
        m.action_sets.assign(n, {0, 1, 2});
        m.jumps.resize(n);
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (int x = 0; x < n; ++x) {
            m.labels[x] = "s" + std::to_string(x);
            m.jumps[x].resize(3);
            for (int ai = 0; ai < 3; ++ai)
                for (int y = 0; y < n; ++y)
                    if (y != x && u(gen) < 0.6) m.jumps[x][ai].push_back({y, u(gen)});
        }
        m.costs.assign(1, std::vector<std::vector<double>>(n, {0.0, 0.0, 0.0}));
        for (auto& row : m.costs[0])
            for (double& c : row) c = -1.0 + 3.0 * u(gen);
        m.discount = 1.5;
        m.finalize();
        const auto cert = check_condition1(m, std::vector<double>(n, 1.0));
        const DtmdpModel d = reduce(m, cert);
        const auto [best, policy] = enumerate_bruteforce(d); // 243 policies
        const auto [vf, rep] = value_iteration(d, 1e-10);
        for (int x = 0; x < d.num_states(); ++x)
            CHECK(vf.values[x] == Catch::Approx(best[x]).margin(1e-8));
        const auto pv = policy_evaluation(d, policy);
        for (int x = 0; x < d.num_states(); ++x)
            CHECK(pv.values[x] == Catch::Approx(best[x]).margin(1e-9));
    }
}

TEST_CASE("divergence guard trips on a runaway ceiling") {
    const CtmdpModel m = corpus::single_state(5.0, 1.0);
    const auto cert = check_condition1(m, {1.0}, 0.5);
    CHECK_THROWS_AS(value_iteration(reduce(m, cert), 1e-9, 1.0), DivergenceGuard);
}

TEST_CASE("actions flagged by infinite costs") {
    CtmdpModel m;
    m.labels = {"s"};
    m.action_sets = {{0, 1}};
    m.jumps = {{{}, {}}};
    m.costs = {{{kInf, 4.0}}};
    m.discount = 1.0;
    m.finalize();
    const auto cert = check_condition1(m, {1.0}, 0.5);
    const DtmdpModel d = reduce(m, cert);

    const auto [vf, rep] = value_iteration(d);
    CHECK(vf.values[0] == Catch::Approx(4.0).margin(1e-9)); // argmin skipped the flag
    CHECK(extract_greedy_policy(d, vf).choice == std::vector<int>{1});
    CHECK_THROWS_AS(policy_evaluation(d, DeterministicPolicy{{0}}), InfiniteCost);

    CtmdpModel all_bad = m;
    all_bad.costs[0][0][1] = kInf;
    const auto cert2 = check_condition1(all_bad, {1.0}, 0.5);
    CHECK_THROWS_AS(value_iteration(reduce(all_bad, cert2)), NoAdmissibleAction);
}

TEST_CASE("constrained occupation-measure program") {
    SECTION("analytic two-point mixture") {
        const CtmdpModel m = corpus::analytic_lp_instance();
        const auto cert = check_condition1(m, {1.0}, 0.5);
        const TransformedModel tm = build_w_transform(m, cert);
        const DtmdpModel d = build_dtmdp(tm);
        const double b1 = m.bounds[0] / cert.w[0] - tm.shift / tm.residual_discount;
        const auto [pol, mu, rep] = solve_constrained_lp(d, {b1}, 0);
        CHECK(rep.final_delta == Catch::Approx(0.5).margin(1e-9));
        CHECK(pol.weights[0][0] == Catch::Approx(0.5).margin(1e-9));
        CHECK(pol.weights[0][1] == Catch::Approx(0.5).margin(1e-9));
        double constraint = 0.0;
        for (size_t x = 0; x < mu.mu.size(); ++x)
            for (size_t ai = 0; ai < mu.mu[x].size(); ++ai)
                constraint += d.costs[1][x][ai] * mu.mu[x][ai];
        CHECK(constraint == Catch::Approx(1.0).margin(1e-9));
    }
    SECTION("slack bounds recover the unconstrained optimum") {
        const CtmdpModel m = corpus::analytic_lp_instance();
        const auto cert = check_condition1(m, {1.0}, 0.5);
        const DtmdpModel d = reduce(m, cert);
        const auto [pol, mu, rep] = solve_constrained_lp(d, {1e9}, 0);
        const auto [vf, vrep] = value_iteration(d, 1e-10);
        CHECK(rep.final_delta == Catch::Approx(vf.values[0]).margin(1e-8));
        CHECK(pol.weights[0][1] == Catch::Approx(1.0).margin(1e-9)); // deterministic optimum
    }
    SECTION("unattainable bound is infeasible") {
        const CtmdpModel m = corpus::analytic_lp_instance();
        const auto cert = check_condition1(m, {1.0}, 0.5);
        const DtmdpModel d = reduce(m, cert);
        CHECK_THROWS_AS(solve_constrained_lp(d, {-1.0}, 0), Infeasible);
    }
    SECTION("measure satisfies flow balance") {
        std::mt19937_64 gen(61);
        const auto inst = corpus::random_instance(gen);
        const DtmdpModel d = reduce(inst.model, inst.cert);
        const int x0 = inst.model.initial_state;
        const auto [pol, mu, rep] = solve_constrained_lp(d, {1e9}, x0);
        for (int y = 0; y <= d.cemetery(); ++y) {
            double out = 0.0;
            for (size_t ai = 0; ai < mu.mu[y].size(); ++ai) out += mu.mu[y][ai];
            double in = y == x0 ? 1.0 : 0.0;
            for (int x = 0; x <= d.cemetery(); ++x)
                for (size_t ai = 0; ai < mu.mu[x].size(); ++ai) {
                    for (const auto& [t, p] : d.trans[x][ai])
                        if (t == y) in += p * mu.mu[x][ai];
                }
            CHECK(out == Catch::Approx(in).margin(1e-8));
        }
    }
}

TEST_CASE("simplex core") {
    SECTION("bounded maximization via negation") {
        // min -x subject to x <= 5
        LpProblem p;
        p.objective = {-1.0};
        p.ub = {{1.0}};
        p.ub_rhs = {5.0};
        const auto sol = solve_lp(p);
        REQUIRE(sol.status == LpSolution::Status::Optimal);
        CHECK(sol.x[0] == Catch::Approx(5.0));
        CHECK(sol.objective == Catch::Approx(-5.0));
    }
    SECTION("equality plus inequality") {
        // min x + y  s.t.  x + y + z = 2, x - y <= 0, all >= 0
        LpProblem p;
        p.objective = {1.0, 1.0, 0.0};
        p.eq = {{1.0, 1.0, 1.0}};
        p.eq_rhs = {2.0};
        p.ub = {{1.0, -1.0, 0.0}};
        p.ub_rhs = {0.0};
        const auto sol = solve_lp(p);
        REQUIRE(sol.status == LpSolution::Status::Optimal);
        CHECK(sol.objective == Catch::Approx(0.0).margin(1e-12));
        CHECK(sol.x[2] == Catch::Approx(2.0));
    }
    SECTION("infeasible system detected") {
        LpProblem p;
        p.objective = {1.0};
        p.eq = {{1.0}};
        p.eq_rhs = {2.0};
        p.ub = {{1.0}};
        p.ub_rhs = {1.0};
        CHECK(solve_lp(p).status == LpSolution::Status::Infeasible);
    }
    SECTION("unbounded ray detected") {
        LpProblem p;
        p.objective = {-1.0};
        p.ub = {{-1.0}};
        p.ub_rhs = {0.0};
        CHECK(solve_lp(p).status == LpSolution::Status::Unbounded);
    }
    SECTION("negative right-hand sides are handled") {
        // min x  s.t.  -x <= -3  (i.e. x >= 3)
        LpProblem p;
        p.objective = {1.0};
        p.ub = {{-1.0}};
        p.ub_rhs = {-3.0};
        const auto sol = solve_lp(p);
        REQUIRE(sol.status == LpSolution::Status::Optimal);
        CHECK(sol.x[0] == Catch::Approx(3.0));
    }
}

TEST_CASE("resolvent drift bound on random instances") {
    std::mt19937_64 gen(67);
    for (int k = 0; k < 10; ++k) {
        const auto inst = corpus::random_instance(gen);
        const double residual = inst.model.discount - inst.cert.rho;
        corpus::for_each_deterministic(inst.model, [&](const DeterministicPolicy& f) {
            const auto vals =
                resolvent_solve(inst.model, to_stationary(inst.model, f), inst.cert.w);
            for (int x = 0; x < inst.model.num_states(); ++x)
                CHECK(vals[x] <= inst.cert.w[x] / residual + 1e-9);
        });
    }
}
