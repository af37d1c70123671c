#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ctmdp/errors.hpp"

namespace ctmdp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// One off-diagonal jump target: (destination state, rate per unit time).
using JumpEntry = std::pair<int, double>;

/// Continuous-time Markov decision process on a finite state space.
///
/// States are dense indices 0..n-1; labels are presentation-only. The rate
/// kernel stores off-diagonal entries per (state, action position); the
/// diagonal is the derived exit rate, never stored, so rows sum to zero
/// exactly. Cost tables may contain +inf, which flags a forbidden action.
/// Immutable after construction; safe to share across threads.
struct CtmdpModel {
    std::vector<std::string> labels;            // per state
    std::vector<std::vector<int>> action_sets;  // admissible action ids, sorted ascending
    std::vector<std::vector<std::vector<JumpEntry>>> jumps; // [x][ai] -> {(y, rate)}, y != x
    std::vector<std::vector<std::vector<double>>> costs;    // [i][x][ai], values in (-inf, +inf]
    double discount = 0.0;            // the rate alpha > 0
    std::vector<double> bounds;       // constraint levels d_1..d_N
    int initial_state = 0;

    // Derived by finalize():
    std::vector<std::vector<double>> exit_rate; // [x][ai] = sum of off-diagonal rates

    int num_states() const { return static_cast<int>(labels.size()); }
    int num_costs() const { return static_cast<int>(costs.size()); } // N+1
    int num_actions(int x) const { return static_cast<int>(action_sets[x].size()); }

    /// Position of action id `a` in A(x), or -1 if not admissible.
    int action_pos(int x, int a) const {
        const auto& set = action_sets[x];
        auto it = std::lower_bound(set.begin(), set.end(), a);
        return (it != set.end() && *it == a) ? static_cast<int>(it - set.begin()) : -1;
    }

    int state_of_label(const std::string& label) const {
        for (int x = 0; x < num_states(); ++x)
            if (labels[x] == label) return x;
        return -1;
    }

    /// An action is forbidden when any of its cost entries is +inf.
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

    /// Signed drift sum  sum_y g(y) q(dy|x,a)  including the diagonal term.
    double drift_sum(const std::vector<double>& g, int x, int ai) const {
        double s = -exit_rate[x][ai] * g[x];
        for (const auto& [y, r] : jumps[x][ai]) s += r * g[y];
        return s;
    }

    double max_exit_rate(int x) const {
        double m = 0.0;
        for (double e : exit_rate[x]) m = std::max(m, e);
        return m;
    }

    /// Sorts jump rows, merges duplicate targets and derives exit rates.
    void finalize() {
        const int n = num_states();
        exit_rate.assign(n, {});
        for (int x = 0; x < n; ++x) {
            exit_rate[x].assign(jumps[x].size(), 0.0);
            for (size_t ai = 0; ai < jumps[x].size(); ++ai) {
                auto& row = jumps[x][ai];
                std::sort(row.begin(), row.end());
                double total = 0.0;
                for (const auto& [y, r] : row) total += r;
                exit_rate[x][static_cast<int>(ai)] = total;
            }
        }
    }
};

/// One validation finding; an empty report means the model is valid.
struct Violation {
    std::string what;
    int state = -1;
    int action = -1; // action id, -1 when not applicable
};

struct ValidationReport {
    std::vector<Violation> violations;
    bool ok() const { return violations.empty(); }
    std::string summary() const {
        std::string s;
        for (const auto& v : violations) {
            s += v.what;
            if (v.state >= 0) s += " [state " + std::to_string(v.state) + "]";
            if (v.action >= 0) s += " [action " + std::to_string(v.action) + "]";
            s += "\n";
        }
        return s;
    }
};

/// Checks every structural invariant and reports all violations found.
inline ValidationReport validate_model(const CtmdpModel& m) {
    ValidationReport rep;
    auto add = [&](std::string what, int x = -1, int a = -1) {
        rep.violations.push_back({std::move(what), x, a});
    };
    const int n = m.num_states();
    if (n == 0) add("model has no states");
    if (!(m.discount > 0.0) || std::isinf(m.discount)) add("alpha must be positive and finite");
    if (m.initial_state < 0 || m.initial_state >= n) add("initial state out of range");
    for (double d : m.bounds)
        if (!std::isfinite(d)) add("constraint bound not finite");

    // unique labels
    {
        std::vector<std::string> ls(m.labels);
        std::sort(ls.begin(), ls.end());
        if (std::adjacent_find(ls.begin(), ls.end()) != ls.end()) add("duplicate state label");
    }

    if (static_cast<int>(m.action_sets.size()) != n || static_cast<int>(m.jumps.size()) != n)
        add("per-state tables sized inconsistently with the state list");
    if (m.costs.empty()) add("at least one cost table (c_0) required");
    if (!m.bounds.empty() && static_cast<int>(m.bounds.size()) != m.num_costs() - 1)
        add("bounds must have one entry per constraint cost table");

    for (int x = 0; x < n && x < static_cast<int>(m.action_sets.size()); ++x) {
        if (m.action_sets[x].empty()) add("empty action set", x);
        if (!std::is_sorted(m.action_sets[x].begin(), m.action_sets[x].end()) ||
            std::adjacent_find(m.action_sets[x].begin(), m.action_sets[x].end()) !=
                m.action_sets[x].end())
            add("action set not strictly increasing", x);
        if (x < static_cast<int>(m.jumps.size()) &&
            m.jumps[x].size() != m.action_sets[x].size())
            add("rate rows do not match the action set", x);
        for (size_t ai = 0; ai < m.jumps[x].size(); ++ai) {
            const int a = ai < m.action_sets[x].size() ? m.action_sets[x][ai] : -1;
            for (const auto& [y, r] : m.jumps[x][ai]) {
                if (y == x) add("diagonal entry supplied", x, a);
                if (y < 0 || y >= n) add("rate target outside the state space", x, a);
                if (!(r >= 0.0) || std::isinf(r)) add("off-diagonal rate negative or not finite", x, a);
            }
        }
    }
    for (const auto& table : m.costs) {
        if (static_cast<int>(table.size()) != n) {
            add("cost table sized inconsistently with the state list");
            continue;
        }
        for (int x = 0; x < n; ++x) {
            if (table[x].size() != m.action_sets[x].size())
                add("cost entry outside graph K", x);
            for (double v : table[x])
                if (std::isnan(v) || v == -kInf) add("cost value must lie in (-inf, +inf]", x);
        }
    }
    return rep;
}

inline void require_valid(const CtmdpModel& m) {
    auto rep = validate_model(m);
    if (!rep.ok()) throw ValidationError("invalid model:\n" + rep.summary());
}

// ---------------------------------------------------------------------------
// Parametric model families
// ---------------------------------------------------------------------------

/// Truncated countable-state families with power-law rates rate(x) = coef * x^power,
/// evaluated at the 1-based state label.
struct ModelFamily {
    enum class Kind { PureBirth, BirthDeath, Explicit };
    enum class Boundary { Absorbing, Reflecting };

    Kind kind = Kind::PureBirth;
    double birth_coef = 0.0, birth_power = 0.0;
    double death_coef = 0.0, death_power = 0.0;
    int truncation = 2;                      // level M >= 2
    Boundary boundary = Boundary::Absorbing; // top-state handling
};

inline double family_birth_rate(const ModelFamily& f, int label) {
    return f.birth_coef * std::pow(static_cast<double>(label), f.birth_power);
}
inline double family_death_rate(const ModelFamily& f, int label) {
    return f.death_coef * std::pow(static_cast<double>(label), f.death_power);
}

/// Instantiates a family as a finite model with states labeled "1".."M".
///
/// Absorbing boundary zeroes every rate out of the top state (and, for
/// birth-death, out of state 1 downward); reflecting drops only the
/// out-of-range transitions and keeps the rest of the row.
inline CtmdpModel build_family(const ModelFamily& f,
                               std::vector<std::vector<std::vector<double>>> costs,
                               double discount,
                               std::vector<double> bounds = {},
                               int initial_state = 0) {
    if (f.truncation < 2) throw FamilyError("truncation level must be at least 2");
    if (f.kind == ModelFamily::Kind::Explicit)
        throw FamilyError("explicit kind carries no generator; supply rates directly");
    if (f.birth_coef < 0 || f.death_coef < 0) throw FamilyError("negative rate coefficient");

    const int n = f.truncation;
    CtmdpModel m;
    m.labels.resize(n);
    m.action_sets.assign(n, {0});
    m.jumps.assign(n, std::vector<std::vector<JumpEntry>>(1));
    for (int x = 0; x < n; ++x) {
        const int label = x + 1;
        m.labels[x] = std::to_string(label);
        const bool top = (x == n - 1);
        const bool bottom = (x == 0);
        const bool absorbing_top = top && f.boundary == ModelFamily::Boundary::Absorbing;
        if (!top) {
            double b = family_birth_rate(f, label);
            if (b > 0) m.jumps[x][0].push_back({x + 1, b});
        }
        if (f.kind == ModelFamily::Kind::BirthDeath && !bottom && !absorbing_top) {
            double d = family_death_rate(f, label);
            if (d > 0) m.jumps[x][0].push_back({x - 1, d});
        }
    }
    if (costs.empty()) costs.assign(1, std::vector<std::vector<double>>(n, {0.0}));
    for (auto& table : costs)
        if (static_cast<int>(table.size()) != n)
            throw FamilyError("cost table does not match the truncated state count");
    m.costs = std::move(costs);
    m.discount = discount;
    m.bounds = std::move(bounds);
    m.initial_state = initial_state;
    m.finalize();
    require_valid(m);
    return m;
}

} // namespace ctmdp
