#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>
#include <cmath>
#include <random>

#include "ctmdp/model_io.hpp"
#include "ctmdp/solver.hpp"
#include "ctmdp/transform.hpp"
#include "ctmdp/transition_function.hpp"
#include "ctmdp/verify.hpp"

using namespace ctmdp;

namespace {

/// Test-side oracle: the (alpha-rho)-discounted value of the shifted costs on
/// the transformed continuous-time model under a deterministic policy, by a
/// direct resolvent solve on S + {cemetery}.
std::vector<double> transformed_resolvent_value(const TransformedModel& tm,
                                                const DeterministicPolicy& f) {
    const int n = tm.num_states();
    Eigen::MatrixXd a = tm.residual_discount * Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd b(n);
    for (int x = 0; x < n; ++x) {
        const int ai = x == tm.cemetery() ? 0 : tm.action_pos(x, f.choice[x]);
        REQUIRE(ai >= 0);
        for (const auto& [y, r] : tm.jumps[x][ai]) a(x, y) -= r;
        a(x, x) += tm.exit_rate[x][ai];
        b(x) = tm.shifted_costs[0][x][ai];
    }
    const Eigen::VectorXd sol = Eigen::PartialPivLU<Eigen::MatrixXd>(a).solve(b);
    return {sol.data(), sol.data() + n};
}

} // namespace

TEST_CASE("transform of the empty kernel") {
    CtmdpModel m = corpus::single_state(5.0, 1.0);
    const auto cert = check_condition1(m, {1.0}, 0.5);
    const auto tm = build_w_transform(m, cert);
    REQUIRE(tm.num_states() == 2);
    REQUIRE(tm.jumps[0][0].size() == 1);
    CHECK(tm.jumps[0][0][0].first == tm.cemetery());
    CHECK(tm.jumps[0][0][0].second == Catch::Approx(0.5));
    CHECK(tm.exit_rate[0][0] == Catch::Approx(0.5));
    CHECK(tm.shift == 0.0);
    CHECK(tm.shifted_costs[0][0][0] == 5.0);
    CHECK(tm.exit_rate[tm.cemetery()][0] == 0.0);
}

TEST_CASE("transform of the pure-birth chain") {
    const int n = 5;
    const CtmdpModel m = corpus::pure_birth_2x(n);
    const auto cert = check_condition1(m, std::vector<double>(n, 1.0), 1.0);
    const auto tm = build_w_transform(m, cert);
    for (int x = 0; x + 1 < n; ++x) {
        const double label = x + 1.0;
        double to_next = 0.0, to_cem = 0.0;
        for (const auto& [y, r] : tm.jumps[x][0]) {
            if (y == x + 1) to_next = r;
            if (y == tm.cemetery()) to_cem = r;
        }
        CHECK(to_next == Catch::Approx(2.0 * label));
        CHECK(to_cem == Catch::Approx(1.0));
        CHECK(tm.exit_rate[x][0] == Catch::Approx(2.0 * label + 1.0));
    }
}

TEST_CASE("constant negative cost shifts to zero") {
    CtmdpModel m = corpus::single_state(-2.0, 1.0);
    const auto cert = check_condition1(m, {1.0}, 0.5);
    const auto tm = build_w_transform(m, cert);
    CHECK(tm.shift == Catch::Approx(-2.0));
    CHECK(tm.shifted_costs[0][0][0] == Catch::Approx(0.0));
    CHECK(tm.shifted_costs[0][tm.cemetery()][0] == Catch::Approx(2.0));
}

TEST_CASE("cemetery mass nonnegativity mirrors the drift inequality") {
    CtmdpModel m = corpus::two_state_chain(3.0, 10.0);
    // Attained drift ratio at the first state is w(2)*3 - 3*w(1) = 3; claim
    // rho below it without validation and the transform must refuse.
    DriftCertificate bogus{{1.0, 2.0}, 0.5, 1.0};
    CHECK_THROWS_AS(build_w_transform(m, bogus), NegativeDeltaMass);
}

TEST_CASE("transformed rows sum to zero exactly") {
    std::mt19937_64 gen(11);
    for (int k = 0; k < 10; ++k) {
        const auto inst = corpus::random_instance(gen);
        const auto tm = build_w_transform(inst.model, inst.cert);
        for (int x = 0; x < tm.num_states(); ++x)
            for (int ai = 0; ai < tm.num_actions(x); ++ai) {
                double total = 0.0;
                for (const auto& [y, r] : tm.jumps[x][ai]) {
                    total += r;
                    CHECK(r >= 0.0);
                }
                CHECK(total - tm.exit_rate[x][ai] == 0.0);
            }
    }
}

TEST_CASE("shifted costs are nonnegative") {
    std::mt19937_64 gen(13);
    for (int k = 0; k < 10; ++k) {
        const auto inst = corpus::random_instance(gen);
        const auto tm = build_w_transform(inst.model, inst.cert);
        for (const auto& table : tm.shifted_costs)
            for (const auto& row : table)
                for (double v : row) CHECK(v >= 0.0);
    }
}

TEST_CASE("back transformation") {
    SECTION("single frozen state recovers cost over discount") {
        const CtmdpModel m = corpus::single_state(5.0, 1.0);
        const auto cert = check_condition1(m, {1.0}, 0.5);
        const auto tm = build_w_transform(m, cert);
        const auto back = back_transform_value({5.0}, cert, tm.shift, tm.residual_discount);
        CHECK(back[0] == Catch::Approx(5.0));
    }
    SECTION("zero reduced values with shift equal to minus the residual") {
        DriftCertificate cert{{1.0, 3.0}, 0.5, 1.0};
        const auto back = back_transform_value({0.0, 0.0}, cert, -0.5, 0.5);
        CHECK(back[0] == Catch::Approx(-1.0));
        CHECK(back[1] == Catch::Approx(-3.0));
    }
}

TEST_CASE("value equivalence through the transformed model") {
    // The w-scaled, shift-corrected resolvent value of the transformed model
    // equals the original discounted value, policy by policy.
    std::mt19937_64 gen(17);
    for (int k = 0; k < 15; ++k) {
        const auto inst = corpus::random_instance(gen);
        const auto tm = build_w_transform(inst.model, inst.cert);
        corpus::for_each_deterministic(inst.model, [&](const DeterministicPolicy& f) {
            const auto exact = ctmdp_policy_value(inst.model, f);
            std::vector<double> transformed = transformed_resolvent_value(tm, f);
            transformed.resize(inst.model.num_states());
            const auto back =
                back_transform_value(transformed, inst.cert, tm.shift, tm.residual_discount);
            for (int x = 0; x < inst.model.num_states(); ++x)
                CHECK(back[x] ==
                      Catch::Approx(exact[x]).margin(1e-8 * std::max(1.0, std::abs(exact[x]))));
        });
    }
}

TEST_CASE("scaling the drift function leaves the transform invariant where it should") {
    std::mt19937_64 gen(19);
    const auto inst = corpus::random_instance(gen);
    std::vector<double> w10(inst.cert.w);
    for (double& v : w10) v *= 10.0;
    const auto cert10 = check_condition1(inst.model, w10);
    const auto tm = build_w_transform(inst.model, inst.cert);
    const auto tm10 = build_w_transform(inst.model, cert10);

    CHECK(cert10.rho == Catch::Approx(inst.cert.rho).margin(1e-12));
    CHECK(tm10.shift == Catch::Approx(tm.shift / 10.0));
    for (int x = 0; x < tm.num_states(); ++x)
        for (int ai = 0; ai < tm.num_actions(x); ++ai) {
            REQUIRE(tm10.jumps[x][ai].size() == tm.jumps[x][ai].size());
            for (size_t e = 0; e < tm.jumps[x][ai].size(); ++e) {
                CHECK(tm10.jumps[x][ai][e].first == tm.jumps[x][ai][e].first);
                CHECK(tm10.jumps[x][ai][e].second ==
                      Catch::Approx(tm.jumps[x][ai][e].second).margin(1e-12));
            }
        }
    for (int x = 0; x < inst.model.num_states(); ++x)
        for (int ai = 0; ai < inst.model.num_actions(x); ++ai)
            CHECK(tm10.costs_w[0][x][ai] == Catch::Approx(tm.costs_w[0][x][ai] / 10.0));
}

TEST_CASE("transformed model serializes through the model schema") {
    const int n = 4;
    const CtmdpModel m = corpus::pure_birth_2x(n);
    const auto cert = check_condition1(m, std::vector<double>(n, 1.0), 1.0);
    const auto tm = build_w_transform(m, cert);
    const ojson j = save_transformed(tm);
    const LoadedModel round = load_model_json(j);
    CHECK(round.model.num_states() == n + 1);
    CHECK(round.delta_state.value() == "delta");
    CHECK(round.shift.value() == tm.shift);
    CHECK(round.model.discount == Catch::Approx(tm.residual_discount));
    CHECK(validate_model(round.model).ok());
}

TEST_CASE("transition identity at time zero is exact") {
    const CtmdpModel m = corpus::two_state_chain(1.0, 2.0);
    const auto cert = check_condition1(m, {1.0, 2.0}, 1.0);
    const auto check = transform_identity_residual(m, cert, uniform_policy(m, 2), {0.0},
                                                   {{0}, {1}, {0, 1}});
    CHECK(check.max_residual <= 1e-14);
}

TEST_CASE("transition identity on the closed-form chain") {
    // p(0,1,t,{2}) = 1 - e^{-t}; with w = (1,2), rho = 1 the transformed side
    // is 2 e^{-t} (1 - e^{-t}).
    const CtmdpModel m = corpus::two_state_chain(1.0, 2.0);
    const auto cert = check_condition1(m, {1.0, 2.0}, 1.0);
    const auto pol = uniform_policy(m, 2);
    const auto check =
        transform_identity_residual(m, cert, pol, {0.5, 1.0, 2.0}, {{1}});
    CHECK(check.max_residual <= 1e-8);
    for (const auto& e : check.entries) {
        if (e.state != 0) continue;
        const double closed_orig = 1.0 - std::exp(-e.time);
        const double closed_trans = 2.0 * std::exp(-e.time) * (1.0 - std::exp(-e.time));
        CHECK(e.rhs == Catch::Approx(std::exp(-e.time) * 2.0 * closed_orig / 1.0).margin(1e-10));
        CHECK(e.lhs == Catch::Approx(closed_trans).margin(1e-10));
    }
}

TEST_CASE("transition identity degenerates under a unit drift function") {
    const int n = 6;
    const CtmdpModel m = corpus::pure_birth_2x(n);
    const auto cert = check_condition1(m, std::vector<double>(n, 1.0), 1.0);
    std::vector<std::vector<int>> targets{{0}, {3}, {0, 1, 2, 3, 4, 5}};
    const auto check = transform_identity_residual(m, cert, uniform_policy(m, n),
                                                   {0.25, 0.75, 1.5}, targets);
    CHECK(check.max_residual <= 1e-8);
}

TEST_CASE("transition identity under a piecewise-constant Markov policy") {
    // Two actions with different rates; the policy switches mid-flight.
    CtmdpModel m;
    m.labels = {"1", "2"};
    m.action_sets = {{0, 1}, {0}};
    m.jumps = {{{{1, 1.0}}, {{1, 4.0}}}, {{}}};
    m.costs = {{{0.0, 0.0}, {0.0}}};
    m.discount = 6.0;
    m.finalize();
    const auto cert = check_condition1(m, {1.0, 2.0}, 4.0);

    PiecewisePolicy pol;
    pol.start_times = {0.0, 0.4};
    StationaryPolicy first{{{1.0, 0.0}, {1.0}}};
    StationaryPolicy second{{{0.0, 1.0}, {1.0}}};
    pol.policies = {first, second};

    const auto check =
        transform_identity_residual(m, cert, pol, {0.2, 0.4, 0.9}, {{0}, {1}, {0, 1}});
    CHECK(check.max_residual <= 1e-8);
}
