#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ctmdp/transform.hpp"

namespace ctmdp {

/// Total-cost discrete-time MDP on S + {cemetery, sink} obtained from the
/// drift-weighted model. The kernel embeds discounting (absorption into the
/// sink at probability (alpha-rho)/(alpha+q_x(a))), killing (the cemetery
/// column) and the reweighted jumps; costs are nonnegative. Alongside the
/// kernel it stores alpha, rho, the original exit rates and the weights, so
/// values map back to the original scale without re-reading the source model.
struct DtmdpModel {
    std::vector<std::string> labels;           // S, "delta", "sink"
    std::vector<std::vector<int>> action_sets; // cemetery and sink have {0}
    std::vector<std::vector<std::vector<JumpEntry>>> trans; // probability rows
    std::vector<std::vector<std::vector<double>>> costs;    // nonnegative, +inf flags kept
    double alpha = 0.0;
    double rho = 0.0;
    double shift = 0.0;                     // the cost shift used upstream
    std::vector<double> weights;            // w on S
    std::vector<std::vector<double>> exit_rate; // original q_x(a) on S
    int initial_state = 0;

    int num_states() const { return static_cast<int>(labels.size()); } // |S| + 2
    int num_interior() const { return num_states() - 2; }              // |S|
    int cemetery() const { return num_states() - 2; }
    int sink() const { return num_states() - 1; }
    int num_costs() const { return static_cast<int>(costs.size()); }
    int num_actions(int x) const { return static_cast<int>(action_sets[x].size()); }

    int action_pos(int x, int a) const {
        const auto& set = action_sets[x];
        auto it = std::lower_bound(set.begin(), set.end(), a);
        return (it != set.end() && *it == a) ? static_cast<int>(it - set.begin()) : -1;
    }

    bool forbidden(int x, int ai) const {
        for (const auto& table : costs)
            if (std::isinf(table[x][ai])) return true;
        return false;
    }
    bool has_admissible(int x) const {
        for (int ai = 0; ai < num_actions(x); ++ai)
            if (!forbidden(x, ai)) return true;
        return false;
    }
};

/// Executes the reduction to the total-cost DTMDP.
///
/// For x in S: T(y|x,a) = w(y) q(y|x,a) / ((alpha+q_x(a)) w(x)) off the
/// diagonal, the cemetery gets the drift slack over alpha+q_x(a), the sink
/// gets (alpha-rho)/(alpha+q_x(a)); cemetery and sink jump to the sink with
/// probability one. Costs are the shifted weighted rates over alpha+q_x(a);
/// the cemetery's single visit carries -shift/(alpha-rho), the sink is free.
/// Rows deviating from sum one by more than 1e-9 raise RowSumError, smaller
/// float residue is renormalized away.
inline DtmdpModel build_dtmdp(const TransformedModel& tm) {
    const int ns = tm.num_states() - 1; // |S|
    const int cem = ns, sink = ns + 1;
    DtmdpModel d;
    d.labels = tm.labels; // includes "delta"
    d.labels.push_back("sink");
    d.action_sets = tm.action_sets;
    d.action_sets.push_back({0});
    d.alpha = tm.source_discount;
    d.rho = tm.rho;
    d.shift = tm.shift;
    d.weights = tm.weights;
    d.initial_state = tm.initial_state;

    d.trans.assign(ns + 2, {});
    d.costs.assign(tm.num_costs(), {});
    d.exit_rate.assign(ns, {});
    for (auto& table : d.costs) table.resize(ns + 2);

    for (int x = 0; x < ns; ++x) {
        const int na = tm.num_actions(x);
        d.trans[x].resize(na);
        d.exit_rate[x].assign(na, 0.0);
        for (auto& table : d.costs) table[x].resize(na);
        for (int ai = 0; ai < na; ++ai) {
            // Transformed exit rate is rho + q_x(a); recover the original.
            const double qx = tm.exit_rate[x][ai] - tm.rho;
            d.exit_rate[x][ai] = qx;
            const double denom = d.alpha + qx; // = residual + transformed exit
            auto& row = d.trans[x][ai];
            double sum = 0.0;
            for (const auto& [y, r] : tm.jumps[x][ai]) {
                const double p = r / denom; // weighted jump or cemetery mass
                row.push_back({y, p});
                sum += p;
            }
            const double p_sink = (d.alpha - d.rho) / denom;
            row.push_back({sink, p_sink});
            sum += p_sink;
            if (std::abs(sum - 1.0) > 1e-9)
                throw RowSumError("kernel row at state " + std::to_string(x) + ", action " +
                                  std::to_string(tm.action_sets[x][ai]) +
                                  " sums to " + std::to_string(sum));
            for (auto& [y, p] : row) p /= sum;
            for (int i = 0; i < d.num_costs(); ++i)
                d.costs[i][x][ai] = tm.shifted_costs[i][x][ai] / denom; // +inf stays +inf
        }
    }
    // Cemetery: one visit charging the shifted weight of its infinite sojourn.
    d.trans[cem] = {{{sink, 1.0}}};
    d.trans[sink] = {{{sink, 1.0}}};
    for (int i = 0; i < d.num_costs(); ++i) {
        d.costs[i][cem] = {-tm.shift / tm.residual_discount};
        d.costs[i][sink] = {0.0};
    }
    return d;
}

/// Geometric factor for value-iteration error bounds: the largest
/// continuation mass left outside the sink, beta = max (q_x(a)+rho)/(q_x(a)+alpha) < 1.
inline double survival_factor(const DtmdpModel& d) {
    double beta = 0.0;
    for (int x = 0; x < d.num_interior(); ++x)
        for (int ai = 0; ai < d.num_actions(x); ++ai) {
            const double qx = d.exit_rate[x][ai];
            beta = std::max(beta, (qx + d.rho) / (qx + d.alpha));
        }
    return beta;
}

} // namespace ctmdp
