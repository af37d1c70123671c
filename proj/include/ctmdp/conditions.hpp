#pragma once

#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "ctmdp/model.hpp"

namespace ctmdp {

// Floors so certificates always carry strictly positive constants, and the
// absolute tolerance used on every drift inequality.
inline constexpr double kRhoMin = 1e-6;
inline constexpr double kLMin = 1e-6;
inline constexpr double kDriftTol = 1e-9;

/// Drift certificate: w >= 1 with sum_y w(y) q(dy|x,a) <= rho * w(x) and
/// c_i^-(x,a) <= L * w(x), for some 0 < rho < alpha and L > 0.
struct DriftCertificate {
    std::vector<double> w; // per state, >= 1
    double rho = 0.0;      // in (0, alpha)
    double L = 0.0;        // > 0
};

/// Lyapunov data backing non-explosion of the transformed process:
/// w' > 0 with drift constant rho', plus an exhausting sequence of subsets.
struct LyapunovCertificate {
    std::vector<double> w_prime;      // per state, > 0
    double rho_prime = 0.0;           // > 0
    std::vector<std::vector<int>> v_m; // nondecreasing subsets, union = S
};

/// Growth-condition data: q-bar_x <= L~' w~'(x), drift of w~' with constant
/// rho~', and the link (q-bar_x + 1) w(x) <= L~ w~'(x).
struct Condition5Certificate {
    std::vector<double> w_tilde_prime; // per state, > 0
    double l_tilde_prime = 0.0;
    double rho_tilde_prime = 0.0;
    double l_tilde = 0.0;
};

/// Outcome of a certificate check. Violations are report entries, never
/// exceptions; `attained` carries the tightest constants found and
/// `profile` the per-m ratio trend where applicable.
struct CheckReport {
    std::vector<Violation> violations;
    std::map<std::string, double> attained;
    std::vector<double> profile;
    bool ok() const { return violations.empty(); }
};

/// Verifies the drift condition for a given w and returns the certificate.
///
/// Without `requested_rho` the tightest constants are computed (floored at
/// kRhoMin/kLMin); with it, the supplied rho is validated instead so worked
/// constants can be reproduced exactly. Throws DriftViolation when the
/// attained (or requested) rho does not satisfy rho < alpha, DomainError
/// when some w(x) < 1.
inline DriftCertificate check_condition1(const CtmdpModel& m, const std::vector<double>& w,
                                         std::optional<double> requested_rho = {}) {
    const int n = m.num_states();
    if (static_cast<int>(w.size()) != n) throw DomainError("w has wrong length");
    for (int x = 0; x < n; ++x)
        if (!(w[x] >= 1.0) || std::isinf(w[x]))
            throw DomainError("w(x) must be finite and >= 1 at state " + std::to_string(x));

    double rho_attained = 0.0;
    for (int x = 0; x < n; ++x)
        for (int ai = 0; ai < m.num_actions(x); ++ai)
            rho_attained = std::max(rho_attained, m.drift_sum(w, x, ai) / w[x]);

    double rho = std::max(rho_attained, kRhoMin);
    if (requested_rho) {
        if (rho_attained > *requested_rho + kDriftTol)
            throw DriftViolation("requested rho " + std::to_string(*requested_rho) +
                                 " violated: attained " + std::to_string(rho_attained));
        if (!(*requested_rho > 0.0))
            throw DriftViolation("rho must be strictly positive");
        rho = *requested_rho;
    }
    if (rho >= m.discount)
        throw DriftViolation("drift constant rho = " + std::to_string(rho) +
                             " is not below alpha = " + std::to_string(m.discount));

    double L = 0.0;
    for (const auto& table : m.costs)
        for (int x = 0; x < n; ++x)
            for (double v : table[x])
                if (std::isfinite(v) && v < 0.0) L = std::max(L, -v / w[x]);
    return {w, rho, std::max(L, kLMin)};
}

namespace detail {

inline void check_positive_vector(const std::vector<double>& v, int n, const char* name,
                                  CheckReport& rep) {
    if (static_cast<int>(v.size()) != n) {
        rep.violations.push_back({std::string(name) + " has wrong length", -1, -1});
        return;
    }
    for (int x = 0; x < n; ++x)
        if (!(v[x] > 0.0) || std::isinf(v[x]))
            rep.violations.push_back({std::string(name) + " not positive and finite", x, -1});
}

} // namespace detail

/// Verifies the Lyapunov certificate numerically.
///
/// On a finite model the limits in the condition degenerate, so the report
/// records the finite surrogates: the exhaustion of S by the supplied V_m,
/// the per-m rate bound sup_{x in V_m} q-bar_x, and the requirement that
/// m -> min_{x not in V_m} w'(x)/w(x) is nondecreasing (profile).
inline CheckReport check_condition2(const CtmdpModel& m, const DriftCertificate& cert,
                                    const LyapunovCertificate& lyap) {
    CheckReport rep;
    const int n = m.num_states();
    detail::check_positive_vector(lyap.w_prime, n, "w'", rep);
    if (!rep.ok()) return rep;
    if (!(lyap.rho_prime > 0.0))
        rep.violations.push_back({"rho' must be strictly positive", -1, -1});

    // (c) drift of w' with the supplied constant; also record the tightest.
    double attained = 0.0;
    for (int x = 0; x < n; ++x)
        for (int ai = 0; ai < m.num_actions(x); ++ai) {
            const double lhs = m.drift_sum(lyap.w_prime, x, ai);
            const double rhs = lyap.rho_prime * lyap.w_prime[x];
            attained = std::max(attained, lhs / lyap.w_prime[x]);
            if (lhs > rhs + kDriftTol)
                rep.violations.push_back(
                    {"w' drift exceeds rho' w'", x, m.action_sets[x][ai]});
        }
    rep.attained["rho_prime"] = attained;

    // (a) exhaustion and monotonicity of the subsets.
    std::vector<char> seen(n, 0);
    std::vector<char> prev(n, 0);
    for (size_t k = 0; k < lyap.v_m.size(); ++k) {
        std::vector<char> cur(n, 0);
        for (int x : lyap.v_m[k]) {
            if (x < 0 || x >= n) {
                rep.violations.push_back({"V_m member outside the state space", x, -1});
                continue;
            }
            cur[x] = 1;
            seen[x] = 1;
        }
        for (int x = 0; x < n; ++x)
            if (prev[x] && !cur[x]) {
                rep.violations.push_back({"V_m sequence not nondecreasing", x, -1});
                break;
            }
        prev = cur;

        // (b) rate bound on V_m (always finite here; recorded numerically).
        double qbar = 0.0;
        for (int x = 0; x < n; ++x)
            if (cur[x]) qbar = std::max(qbar, m.max_exit_rate(x));
        rep.attained["qbar_V" + std::to_string(k + 1)] = qbar;

        // (d) surrogate ratio profile over the complement.
        double ratio = kInf;
        for (int x = 0; x < n; ++x)
            if (!cur[x]) ratio = std::min(ratio, lyap.w_prime[x] / cert.w[x]);
        rep.profile.push_back(ratio);
    }
    for (int x = 0; x < n; ++x)
        if (!seen[x]) {
            rep.violations.push_back({"V_m do not exhaust the state space", x, -1});
            break;
        }
    for (size_t k = 1; k < rep.profile.size(); ++k)
        if (rep.profile[k] < rep.profile[k - 1] - kDriftTol) {
            rep.violations.push_back(
                {"ratio profile min w'/w over the complement is not nondecreasing",
                 static_cast<int>(k), -1});
            break;
        }
    return rep;
}

/// Verifies the growth condition and records the tightest constants.
inline CheckReport check_condition5(const CtmdpModel& m, const DriftCertificate& cert,
                                    const Condition5Certificate& c5) {
    CheckReport rep;
    const int n = m.num_states();
    detail::check_positive_vector(c5.w_tilde_prime, n, "w~'", rep);
    if (!rep.ok()) return rep;

    double lp = 0.0, rp = 0.0, lt = 0.0;
    for (int x = 0; x < n; ++x) {
        const double g = c5.w_tilde_prime[x];
        const double qbar = m.max_exit_rate(x);
        lp = std::max(lp, qbar / g);
        lt = std::max(lt, (qbar + 1.0) * cert.w[x] / g);
        if (qbar > c5.l_tilde_prime * g + kDriftTol)
            rep.violations.push_back({"q-bar exceeds L~' w~'", x, -1});
        if ((qbar + 1.0) * cert.w[x] > c5.l_tilde * g + kDriftTol)
            rep.violations.push_back({"(q-bar+1) w exceeds L~ w~'", x, -1});
        for (int ai = 0; ai < m.num_actions(x); ++ai) {
            const double lhs = m.drift_sum(c5.w_tilde_prime, x, ai);
            rp = std::max(rp, lhs / g);
            if (lhs > c5.rho_tilde_prime * g + kDriftTol)
                rep.violations.push_back({"w~' drift exceeds rho~' w~'", x, m.action_sets[x][ai]});
        }
    }
    rep.attained["l_tilde_prime"] = lp;
    rep.attained["rho_tilde_prime"] = rp;
    rep.attained["l_tilde"] = lt;
    return rep;
}

/// Fills the tightest constants for a supplied w~' (floored to stay positive).
inline Condition5Certificate make_condition5(const CtmdpModel& m, const DriftCertificate& cert,
                                             const std::vector<double>& w_tilde_prime) {
    Condition5Certificate c5{w_tilde_prime, kLMin, kRhoMin, kLMin};
    auto rep = check_condition5(m, cert, c5);
    if (rep.attained.count("l_tilde_prime")) {
        c5.l_tilde_prime = std::max(rep.attained["l_tilde_prime"], kLMin);
        c5.rho_tilde_prime = std::max(rep.attained["rho_tilde_prime"], kRhoMin);
        c5.l_tilde = std::max(rep.attained["l_tilde"], kLMin);
    }
    return c5;
}

/// Derives the Lyapunov certificate implied by the growth condition:
/// w' = w~' + 1, rho' = rho~', V_m = {x : (w~'(x)+1)/w(x) <= m}.
inline LyapunovCertificate condition5_to_condition2(const Condition5Certificate& c5,
                                                    const DriftCertificate& cert) {
    const int n = static_cast<int>(c5.w_tilde_prime.size());
    if (static_cast<int>(cert.w.size()) != n)
        throw DomainError("certificate state counts disagree");
    LyapunovCertificate lyap;
    lyap.w_prime.resize(n);
    double max_ratio = 0.0;
    for (int x = 0; x < n; ++x) {
        if (!(c5.w_tilde_prime[x] > 0.0)) throw DomainError("w~' must be positive");
        lyap.w_prime[x] = c5.w_tilde_prime[x] + 1.0;
        max_ratio = std::max(max_ratio, lyap.w_prime[x] / cert.w[x]);
    }
    lyap.rho_prime = c5.rho_tilde_prime;
    const int m_max = static_cast<int>(std::ceil(max_ratio - kDriftTol));
    for (int level = 1; level <= m_max; ++level) {
        std::vector<int> vm;
        for (int x = 0; x < n; ++x)
            if (lyap.w_prime[x] / cert.w[x] <= static_cast<double>(level) + kDriftTol)
                vm.push_back(x);
        lyap.v_m.push_back(std::move(vm));
    }
    return lyap;
}

/// Certified non-explosion test for the transformed generator: verifies
/// sum_y (w'(y)/w(y)) q^w(dy|x,a) <= (rho' - rho) w'(x)/w(x) at every (x,a),
/// which is the finite-model content of the Lyapunov criterion applied to
/// the transformed process with test function w'/w.
inline CheckReport check_transformed_drift(const CtmdpModel& m, const DriftCertificate& cert,
                                           const LyapunovCertificate& lyap) {
    CheckReport rep;
    const int n = m.num_states();
    detail::check_positive_vector(lyap.w_prime, n, "w'", rep);
    if (!rep.ok()) return rep;

    double attained = -kInf;
    for (int x = 0; x < n; ++x) {
        const double ratio_x = lyap.w_prime[x] / cert.w[x];
        for (int ai = 0; ai < m.num_actions(x); ++ai) {
            // sum over S of (w'/w) against the transformed kernel equals
            // [sum_{y != x} w'(y) q(y|x,a) - (rho + q_x(a)) w'(x)] / w(x).
            double lhs = -(cert.rho + m.exit_rate[x][ai]) * lyap.w_prime[x];
            for (const auto& [y, r] : m.jumps[x][ai]) lhs += r * lyap.w_prime[y];
            lhs /= cert.w[x];
            const double rhs = (lyap.rho_prime - cert.rho) * ratio_x;
            attained = std::max(attained, lhs - rhs);
            if (lhs > rhs + kDriftTol)
                rep.violations.push_back(
                    {"transformed drift exceeds (rho'-rho) w'/w", x, m.action_sets[x][ai]});
        }
    }
    rep.attained["max_excess"] = attained;
    return rep;
}

} // namespace ctmdp
