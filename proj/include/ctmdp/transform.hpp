#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ctmdp/conditions.hpp"
#include "ctmdp/model.hpp"

namespace ctmdp {

/// The drift-weighted model on S + {cemetery}: jumps reweighted by
/// w(target)/w(source), killing into the cemetery at the rate balancing the
/// drift, costs divided by w and shifted to nonnegativity, discount reduced
/// to alpha - rho. The cemetery is an explicit extra state (index |S|) with
/// the single action id 0 and no outgoing rates.
struct TransformedModel {
    std::vector<std::string> labels;            // S then "delta"
    std::vector<std::vector<int>> action_sets;  // cemetery has {0}
    std::vector<std::vector<std::vector<JumpEntry>>> jumps; // off-diagonal on S_delta
    std::vector<std::vector<double>> exit_rate;             // rho + q_x(a); 0 at cemetery
    std::vector<std::vector<std::vector<double>>> costs_w;      // c_i / w, 0 at cemetery
    std::vector<std::vector<std::vector<double>>> shifted_costs; // costs_w - shift, >= 0
    double shift = 0.0;             // common lower bound of costs_w, <= 0
    double residual_discount = 0.0; // alpha - rho > 0
    double rho = 0.0;
    double source_discount = 0.0;   // alpha
    std::vector<double> weights;    // w on S
    int initial_state = 0;
    std::vector<double> bounds;     // original d_j, carried through unchanged

    int num_states() const { return static_cast<int>(labels.size()); } // |S| + 1
    int cemetery() const { return num_states() - 1; }
    int num_costs() const { return static_cast<int>(costs_w.size()); }
    int num_actions(int x) const { return static_cast<int>(action_sets[x].size()); }

    int action_pos(int x, int a) const {
        const auto& set = action_sets[x];
        auto it = std::lower_bound(set.begin(), set.end(), a);
        return (it != set.end() && *it == a) ? static_cast<int>(it - set.begin()) : -1;
    }

    bool forbidden(int x, int ai) const {
        for (const auto& table : shifted_costs)
            if (std::isinf(table[x][ai])) return true;
        return false;
    }
};

/// Builds the drift-weighted model from a certified model.
///
/// The cemetery mass at (x,a) is rho - sum_y w(y) q(dy|x,a) / w(x), which the
/// certificate guarantees nonnegative; values below -kDriftTol signal a
/// certificate inconsistent with the model (NegativeDeltaMass), tiny negative
/// float residue is clamped to zero. The shift is the tightest common lower
/// bound min(0, min costs_w) over all cost indices and pairs in the graph.
inline TransformedModel build_w_transform(const CtmdpModel& m, const DriftCertificate& cert) {
    const int n = m.num_states();
    if (static_cast<int>(cert.w.size()) != n) throw DomainError("certificate has wrong length");
    TransformedModel tm;
    tm.labels = m.labels;
    tm.labels.push_back("delta");
    tm.action_sets = m.action_sets;
    tm.action_sets.push_back({0});
    tm.rho = cert.rho;
    tm.source_discount = m.discount;
    tm.residual_discount = m.discount - cert.rho;
    if (!(tm.residual_discount > 0.0)) throw DriftViolation("certificate has rho >= alpha");
    tm.weights = cert.w;
    tm.initial_state = m.initial_state;
    tm.bounds = m.bounds;

    const int cem = n;
    tm.jumps.assign(n + 1, {});
    tm.exit_rate.assign(n + 1, {});
    tm.jumps[cem] = {{}};
    tm.exit_rate[cem] = {0.0};

    for (int x = 0; x < n; ++x) {
        const int na = m.num_actions(x);
        tm.jumps[x].resize(na);
        tm.exit_rate[x].assign(na, 0.0);
        for (int ai = 0; ai < na; ++ai) {
            auto& row = tm.jumps[x][ai];
            for (const auto& [y, r] : m.jumps[x][ai])
                row.push_back({y, cert.w[y] * r / cert.w[x]});
            double delta_mass = cert.rho - m.drift_sum(cert.w, x, ai) / cert.w[x];
            if (delta_mass < -kDriftTol)
                throw NegativeDeltaMass("drift violated at state " + std::to_string(x) +
                                        ", action " + std::to_string(m.action_sets[x][ai]));
            delta_mass = std::max(delta_mass, 0.0);
            if (delta_mass > 0.0) row.push_back({cem, delta_mass});
            double total = 0.0;
            for (const auto& [y, r] : row) total += r;
            tm.exit_rate[x][ai] = total; // equals rho + q_x(a) up to the clamp
        }
    }

    // Costs divided by w; tightest common shift across all indices.
    const int nc = m.num_costs();
    tm.costs_w.assign(nc, {});
    tm.shift = 0.0;
    for (int i = 0; i < nc; ++i) {
        tm.costs_w[i].resize(n + 1);
        for (int x = 0; x < n; ++x) {
            tm.costs_w[i][x].resize(m.num_actions(x));
            for (int ai = 0; ai < m.num_actions(x); ++ai) {
                const double v = m.costs[i][x][ai] / cert.w[x];
                tm.costs_w[i][x][ai] = v;
                if (std::isfinite(v)) tm.shift = std::min(tm.shift, v);
            }
        }
        tm.costs_w[i][cem] = {0.0};
    }
    tm.shifted_costs = tm.costs_w;
    for (auto& table : tm.shifted_costs)
        for (auto& row : table)
            for (double& v : row)
                v -= tm.shift; // +inf stays +inf
    return tm;
}

/// Maps a value vector of the reduced problem back to the original scale:
/// V(x) = w(x) * (v(x) + shift / residual_discount) for x in S.
inline std::vector<double> back_transform_value(const std::vector<double>& reduced_values,
                                                const DriftCertificate& cert, double shift,
                                                double residual_discount) {
    if (!(residual_discount > 0.0)) throw DomainError("residual discount must be positive");
    const size_t n = cert.w.size();
    std::vector<double> out(n);
    for (size_t x = 0; x < n; ++x)
        out[x] = cert.w[x] * (reduced_values[x] + shift / residual_discount);
    return out;
}

} // namespace ctmdp
