#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ctmdp/model.hpp"
#include "ctmdp/policy.hpp"
#include "ctmdp/transform.hpp"

namespace ctmdp {

/// Generator snapshot over one time interval: off-diagonal rates (zero
/// diagonal) plus the per-state exit rate. A conservative row has
/// exit(x) == jump.row(x).sum(); any positive gap is mass flowing out of the
/// retained state space (the leaky truncation device).
struct RatePiece {
    Eigen::MatrixXd jump; // jump(x, y) = rate x -> y, y != x
    Eigen::VectorXd exit; // >= row sum of jump
};

/// Piecewise-constant-in-time rate function on a finite space. Piece k is
/// active on [start_times[k], start_times[k+1]), the last piece onward;
/// start_times[0] must be 0. A single piece is a homogeneous generator.
struct QFunction {
    std::vector<double> start_times;
    std::vector<RatePiece> pieces;

    int dim() const { return pieces.empty() ? 0 : static_cast<int>(pieces[0].exit.size()); }
    bool homogeneous() const { return pieces.size() == 1; }

    double bound() const {
        double b = 0.0;
        for (const auto& p : pieces) b = std::max(b, p.exit.maxCoeff());
        return b;
    }

    const RatePiece& piece_at(double t) const {
        size_t k = pieces.size() - 1;
        while (k > 0 && t < start_times[k]) --k;
        return pieces[k];
    }

    bool conservative(double tol = 1e-12) const {
        for (const auto& p : pieces)
            if (((p.exit - p.jump.rowwise().sum()).array().abs() > tol).any()) return false;
        return true;
    }
};

/// Jump-count decomposition of a transition function over [s,t]: layer n is
/// the sub-stochastic matrix of paths with exactly n jumps, `total` their
/// sum, `defect` one minus the row sums of the total.
struct FellerSeriesResult {
    std::vector<Eigen::MatrixXd> layers;
    Eigen::MatrixXd total;
    Eigen::VectorXd defect;
    int layers_used = 0; // highest layer index whose mass exceeded 1e-14
};

namespace detail {

// Exact jump-count layers over a single interval with a constant generator,
// via the power series in the duration h. Layer matrices obey
//   d A_{k+1}/dh = -D A_{k+1} + J A_k,   A_0(h) = diag(exp(-exit h)),
// so the series coefficients follow E_{k,m+1} = (J E_{k-1,m} - D E_{k,m}) h/(m+1).
// Terms decay like (bound*h)^m / m!; h is kept <= 0.1/bound by the caller.
inline std::vector<Eigen::MatrixXd> panel_layers(const RatePiece& p, double h, int max_layers,
                                                 int max_terms) {
    const int n = static_cast<int>(p.exit.size());
    const auto& J = p.jump;
    const Eigen::VectorXd& exit = p.exit;

    std::vector<Eigen::MatrixXd> layers(1, Eigen::MatrixXd::Identity(n, n));
    std::vector<Eigen::MatrixXd> term(1, Eigen::MatrixXd::Identity(n, n));
    for (int m = 0; m < max_terms; ++m) {
        const double c = h / (m + 1);
        std::vector<Eigen::MatrixXd> next(std::min<size_t>(term.size() + 1, max_layers + 1));
        double biggest = 0.0;
        for (int k = 0; k < static_cast<int>(next.size()); ++k) {
            Eigen::MatrixXd e = Eigen::MatrixXd::Zero(n, n);
            if (k < static_cast<int>(term.size())) e -= exit.asDiagonal() * term[k];
            if (k > 0 && k - 1 < static_cast<int>(term.size())) e += J * term[k - 1];
            e *= c;
            biggest = std::max(biggest, e.cwiseAbs().maxCoeff());
            next[k] = std::move(e);
        }
        for (size_t k = 0; k < next.size(); ++k) {
            if (k < layers.size())
                layers[k] += next[k];
            else
                layers.push_back(next[k]);
        }
        term = std::move(next);
        if (!(biggest >= 0.0)) throw QuadratureError("non-finite term in the layer series");
        if (biggest < 1e-18) break;
    }
    return layers;
}

inline void scrub_layer(Eigen::MatrixXd& m) {
    if (!m.allFinite()) throw QuadratureError("non-finite entry in a series layer");
    if (m.minCoeff() < -1e-8)
        throw QuadratureError("layer entry below the negativity guard");
    m = m.cwiseMax(0.0);
}

} // namespace detail

/// Computes the minimal transition function on [s,t] decomposed by jump
/// count, truncated at n_max jumps.
///
/// The interval is cut at the generator's breakpoints and then into panels of
/// width at most 0.1/bound; each panel's layers are evaluated by the exact
/// constant-generator series and panels compose by convolving jump counts.
inline FellerSeriesResult feller_series(const QFunction& q, double s, double t, int n_max = 64,
                                        int max_terms = 48) {
    if (t < s) throw DomainError("feller_series requires s <= t");
    if (n_max < 0) throw DomainError("n_max must be nonnegative");
    const int n = q.dim();
    if (n == 0) throw DomainError("empty rate function");

    // Panel boundaries: [s,t] refined by piece starts.
    std::vector<double> cuts{s};
    for (double b : q.start_times)
        if (b > s && b < t) cuts.push_back(b);
    cuts.push_back(t);
    std::sort(cuts.begin(), cuts.end());

    std::vector<Eigen::MatrixXd> acc(1, Eigen::MatrixXd::Identity(n, n));
    const double bound = q.bound();
    for (size_t c = 0; c + 1 < cuts.size(); ++c) {
        const double len = cuts[c + 1] - cuts[c];
        if (len <= 0.0) continue;
        const RatePiece& piece = q.piece_at(0.5 * (cuts[c] + cuts[c + 1]));
        const int n_panels = std::max(1, static_cast<int>(std::ceil(len * bound / 0.1)));
        const double h = len / n_panels;
        auto panel = detail::panel_layers(piece, h, n_max, max_terms);
        for (int rep = 0; rep < n_panels; ++rep) {
            const int out_len =
                std::min<int>(static_cast<int>(acc.size() + panel.size()) - 1, n_max + 1);
            std::vector<Eigen::MatrixXd> next(out_len, Eigen::MatrixXd::Zero(n, n));
            for (int a = 0; a < static_cast<int>(acc.size()); ++a) {
                if (acc[a].cwiseAbs().maxCoeff() < 1e-300) continue;
                const int l_hi = std::min<int>(static_cast<int>(panel.size()), out_len - a);
                for (int l = 0; l < l_hi; ++l) next[a + l] += acc[a] * panel[l];
            }
            acc = std::move(next);
        }
    }

    FellerSeriesResult res;
    res.layers = std::move(acc);
    res.total = Eigen::MatrixXd::Zero(n, n);
    for (size_t k = 0; k < res.layers.size(); ++k) {
        detail::scrub_layer(res.layers[k]);
        res.total += res.layers[k];
        if (res.layers[k].maxCoeff() > 1e-14) res.layers_used = static_cast<int>(k);
    }
    res.defect = Eigen::VectorXd::Ones(n) - res.total.rowwise().sum();
    return res;
}

/// Independent oracle for homogeneous generators: exp(t Q) as the Poisson
/// mixture of powers of the uniformized chain, truncated when the Poisson
/// tail drops below 1e-14. Rows sum to one for conservative generators.
inline Eigen::MatrixXd uniformization(const QFunction& q, double t) {
    if (!q.homogeneous()) throw DomainError("uniformization requires a homogeneous generator");
    if (t < 0) throw DomainError("negative time");
    const int n = q.dim();
    const RatePiece& p = q.pieces[0];
    const double lam = p.exit.maxCoeff();
    if (lam * t == 0.0) return Eigen::MatrixXd::Identity(n, n);

    Eigen::MatrixXd step = p.jump / lam;
    step += (Eigen::VectorXd::Ones(n) - p.exit / lam).asDiagonal();

    const double a = lam * t;
    double weight = std::exp(-a);
    double cumulative = weight;
    Eigen::MatrixXd power = Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd out = weight * power;
    const int k_cap = static_cast<int>(a + 40.0 * std::sqrt(a + 1.0)) + 64;
    for (int k = 1; k <= k_cap && 1.0 - cumulative > 1e-14; ++k) {
        power = power * step;
        weight *= a / k;
        cumulative += weight;
        out += weight * power;
    }
    return out;
}

/// Per-state mass missing from the truncated series at time t: near zero for
/// honest processes, persistent for leaky truncations of explosive families.
inline Eigen::VectorXd honesty_defect(const QFunction& q, double t, int n_max = 64) {
    return feller_series(q, 0.0, t, n_max).defect;
}

/// Max-norm residual of the two-step composition identity
/// p(s,t) p(t,u) = p(s,u) computed from series totals.
inline double kc_residual(const QFunction& q, double s, double t, double u, int n_max = 64) {
    if (!(s <= t && t <= u)) throw DomainError("kc_residual requires s <= t <= u");
    const Eigen::MatrixXd first = feller_series(q, s, t, n_max).total;
    const Eigen::MatrixXd second = feller_series(q, t, u, n_max).total;
    const Eigen::MatrixXd direct = feller_series(q, s, u, n_max).total;
    return (first * second - direct).cwiseAbs().maxCoeff();
}

// ---------------------------------------------------------------------------
// Generator builders
// ---------------------------------------------------------------------------

/// Mixed generator q_pi(dy|x) = sum_a q(dy|x,a) pi(a|x) under a stationary policy.
inline RatePiece mixed_rate_piece(const CtmdpModel& m, const StationaryPolicy& pol) {
    const int n = m.num_states();
    RatePiece p{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
    for (int x = 0; x < n; ++x)
        for (int ai = 0; ai < m.num_actions(x); ++ai) {
            const double pw = pol.weights[x][ai];
            if (pw == 0.0) continue;
            for (const auto& [y, r] : m.jumps[x][ai]) p.jump(x, y) += pw * r;
            p.exit(x) += pw * m.exit_rate[x][ai];
        }
    return p;
}

inline QFunction make_qfunction(const CtmdpModel& m, const StationaryPolicy& pol) {
    return {{0.0}, {mixed_rate_piece(m, pol)}};
}

/// Mixed transformed generator on S + {cemetery} under a stationary policy
/// (the cemetery row is zero).
inline RatePiece mixed_rate_piece(const TransformedModel& tm, const StationaryPolicy& pol) {
    const int n = tm.num_states();
    RatePiece p{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
    for (int x = 0; x < n - 1; ++x)
        for (int ai = 0; ai < tm.num_actions(x); ++ai) {
            const double pw = pol.weights[x][ai];
            if (pw == 0.0) continue;
            for (const auto& [y, r] : tm.jumps[x][ai]) p.jump(x, y) += pw * r;
            p.exit(x) += pw * tm.exit_rate[x][ai];
        }
    return p;
}

inline QFunction make_qfunction(const TransformedModel& tm, const StationaryPolicy& pol) {
    return {{0.0}, {mixed_rate_piece(tm, pol)}};
}

inline QFunction make_qfunction(const CtmdpModel& m, const PiecewisePolicy& pol) {
    QFunction q;
    q.start_times = pol.start_times;
    for (const auto& piece : pol.policies) q.pieces.push_back(mixed_rate_piece(m, piece));
    return q;
}

inline QFunction make_qfunction(const TransformedModel& tm, const PiecewisePolicy& pol) {
    QFunction q;
    q.start_times = pol.start_times;
    for (const auto& piece : pol.policies) q.pieces.push_back(mixed_rate_piece(tm, piece));
    return q;
}

/// Uncontrolled truncation of a countable family as a generator. Absorbing
/// keeps the conservative model truncation; leaky lets the top state's
/// outgoing birth rate escape the retained space so the defect measures the
/// mass crossing the truncation boundary.
inline QFunction make_family_qfunction(const ModelFamily& f, bool leaky) {
    if (f.truncation < 2) throw FamilyError("truncation level must be at least 2");
    const int n = f.truncation;
    RatePiece p{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
    for (int x = 0; x < n; ++x) {
        const int label = x + 1;
        const double birth = family_birth_rate(f, label);
        const double death =
            f.kind == ModelFamily::Kind::BirthDeath ? family_death_rate(f, label) : 0.0;
        if (x + 1 < n) {
            p.jump(x, x + 1) = birth;
            p.exit(x) += birth;
        } else if (leaky) {
            p.exit(x) += birth; // escapes the truncation
        }
        if (x > 0 && death > 0.0 && !(x == n - 1 && !leaky &&
                                      f.boundary == ModelFamily::Boundary::Absorbing)) {
            p.jump(x, x - 1) = death;
            p.exit(x) += death;
        }
    }
    return {{0.0}, {p}};
}

// ---------------------------------------------------------------------------
// Transformed-kernel transition identity
// ---------------------------------------------------------------------------

/// Residuals of the identity relating the transformed and original transition
/// functions under a fixed Markov policy:
///   p_w(s,x,t,G) = e^{-rho (t-s)} / w(x) * sum_{y in G} w(y) p(s,x,t,y).
struct IdentityCheck {
    struct Entry {
        int state;
        double time;
        int target_set;
        double lhs, rhs;
    };
    std::vector<Entry> entries;
    double max_residual = 0.0;
};

namespace detail {

inline IdentityCheck identity_residual_impl(const QFunction& original,
                                            const QFunction& transformed,
                                            const DriftCertificate& cert,
                                            const std::vector<double>& times,
                                            const std::vector<std::vector<int>>& targets,
                                            int n_max) {
    IdentityCheck out;
    const int n = original.dim();
    for (double t : times) {
        const Eigen::MatrixXd p = feller_series(original, 0.0, t, n_max).total;
        const Eigen::MatrixXd pw = feller_series(transformed, 0.0, t, n_max).total;
        for (int x = 0; x < n; ++x)
            for (size_t g = 0; g < targets.size(); ++g) {
                double lhs = 0.0, weighted = 0.0;
                for (int y : targets[g]) {
                    lhs += pw(x, y);
                    weighted += cert.w[y] * p(x, y);
                }
                const double rhs = std::exp(-cert.rho * t) / cert.w[x] * weighted;
                out.entries.push_back({x, t, static_cast<int>(g), lhs, rhs});
                out.max_residual = std::max(out.max_residual, std::abs(lhs - rhs));
            }
    }
    return out;
}

} // namespace detail

inline IdentityCheck transform_identity_residual(const CtmdpModel& m,
                                                 const DriftCertificate& cert,
                                                 const StationaryPolicy& pol,
                                                 const std::vector<double>& times,
                                                 const std::vector<std::vector<int>>& targets,
                                                 int n_max = 64) {
    pol.check();
    const TransformedModel tm = build_w_transform(m, cert);
    return detail::identity_residual_impl(make_qfunction(m, pol), make_qfunction(tm, pol), cert,
                                          times, targets, n_max);
}

inline IdentityCheck transform_identity_residual(const CtmdpModel& m,
                                                 const DriftCertificate& cert,
                                                 const PiecewisePolicy& pol,
                                                 const std::vector<double>& times,
                                                 const std::vector<std::vector<int>>& targets,
                                                 int n_max = 64) {
    const TransformedModel tm = build_w_transform(m, cert);
    return detail::identity_residual_impl(make_qfunction(m, pol), make_qfunction(tm, pol), cert,
                                          times, targets, n_max);
}

} // namespace ctmdp
