#pragma once

#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ctmdp/conditions.hpp"
#include "ctmdp/model.hpp"
#include "ctmdp/policy.hpp"
#include "ctmdp/reduction.hpp"
#include "ctmdp/simulator.hpp"
#include "ctmdp/transform.hpp"

namespace ctmdp {

using ojson = nlohmann::ordered_json;

/// Model file plus the optional blocks that may ride along with it.
struct LoadedModel {
    CtmdpModel model;
    std::optional<ojson> certificate;    // embedded certificate block, if any
    std::optional<std::string> delta_state; // present on serialized transformed models
    std::optional<double> shift;
    std::optional<ModelFamily> family;   // kept when rates came from a family block
};

/// Certificate blocks as they appear in files; vectors align with the state order.
struct CertificateBundle {
    std::optional<std::vector<double>> w;
    std::optional<double> rho;
    std::optional<double> L;
    std::optional<std::vector<double>> w_prime;
    std::optional<double> rho_prime;
    std::optional<std::vector<std::vector<int>>> v_m;
    std::optional<std::vector<double>> w_tilde_prime;
    std::optional<double> l_tilde_prime, rho_tilde_prime, l_tilde;
};

namespace detail {

inline std::string label_of(const ojson& j) {
    if (j.is_string()) return j.get<std::string>();
    if (j.is_number_integer()) return std::to_string(j.get<long long>());
    throw SchemaError("state label must be a string or integer");
}

inline double cost_value(const ojson& j) {
    if (j.is_number()) return j.get<double>();
    if (j.is_string() && (j.get<std::string>() == "inf" || j.get<std::string>() == "+inf"))
        return kInf;
    throw SchemaError("cost value must be a number or \"inf\"");
}

inline void reject_unknown_keys(const ojson& j, const std::set<std::string>& allowed,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw SchemaError("unknown key \"" + it.key() + "\" in " + where);
}

inline ModelFamily parse_family(const ojson& j) {
    reject_unknown_keys(j,
                        {"kind", "M", "boundary", "birth_coef", "birth_power", "death_coef",
                         "death_power"},
                        "family block");
    ModelFamily f;
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "pure_birth")
        f.kind = ModelFamily::Kind::PureBirth;
    else if (kind == "birth_death")
        f.kind = ModelFamily::Kind::BirthDeath;
    else
        throw SchemaError("unknown family kind \"" + kind + "\"");
    f.truncation = j.at("M").get<int>();
    if (j.contains("boundary")) {
        const std::string b = j.at("boundary").get<std::string>();
        if (b == "absorbing")
            f.boundary = ModelFamily::Boundary::Absorbing;
        else if (b == "reflecting")
            f.boundary = ModelFamily::Boundary::Reflecting;
        else
            throw SchemaError("unknown boundary policy \"" + b + "\"");
    }
    f.birth_coef = j.value("birth_coef", 0.0);
    f.birth_power = j.value("birth_power", 0.0);
    f.death_coef = j.value("death_coef", 0.0);
    f.death_power = j.value("death_power", 0.0);
    return f;
}

} // namespace detail

/// Parses a model object. Unknown keys are rejected; rates and costs refer to
/// states by label; a "family" block may replace "rates". The returned model
/// has passed validate_model unless `validated` is false.
inline LoadedModel load_model_json(const ojson& j, bool validated = true) {
    detail::reject_unknown_keys(j,
                                {"states", "actions", "rates", "costs", "alpha", "bounds",
                                 "initial", "family", "certificate", "delta_state", "shift"},
                                "model file");
    for (const char* key : {"states", "actions", "costs", "alpha"})
        if (!j.contains(key)) throw SchemaError(std::string("missing key \"") + key + "\"");
    if (j.contains("rates") == j.contains("family"))
        throw SchemaError("exactly one of \"rates\" and \"family\" required");

    LoadedModel out;
    CtmdpModel& m = out.model;
    for (const auto& s : j.at("states")) m.labels.push_back(detail::label_of(s));
    const int n = m.num_states();
    auto state_of = [&](const ojson& lbl) {
        const int x = m.state_of_label(detail::label_of(lbl));
        if (x < 0) throw SchemaError("unknown state label \"" + detail::label_of(lbl) + "\"");
        return x;
    };

    if (static_cast<int>(j.at("actions").size()) != n)
        throw SchemaError("\"actions\" must list one action set per state");
    for (const auto& set : j.at("actions")) {
        std::vector<int> ids;
        for (const auto& a : set) ids.push_back(a.get<int>());
        m.action_sets.push_back(std::move(ids));
    }
    m.jumps.resize(n);
    for (int x = 0; x < n; ++x) m.jumps[x].resize(m.action_sets[x].size());

    if (j.contains("family")) {
        const ModelFamily f = detail::parse_family(j.at("family"));
        if (f.truncation != n)
            throw SchemaError("family truncation level must match the state count");
        for (int x = 0; x < n; ++x)
            if (m.action_sets[x].size() != 1)
                throw SchemaError("family models are uncontrolled; one action per state");
        CtmdpModel fam = build_family(f, {}, 1.0);
        m.jumps = fam.jumps; // labels/actions taken from the file
        out.family = f;
    } else {
        std::set<std::tuple<int, int, int>> seen;
        for (const auto& e : j.at("rates")) {
            if (!e.is_array() || e.size() != 4)
                throw SchemaError("rate entry must be [state, action, state, rate]");
            const int x = state_of(e[0]);
            const int a = e[1].get<int>();
            const int y = state_of(e[2]);
            const double r = e[3].get<double>();
            if (r < 0.0) throw SchemaError("negative off-diagonal rate");
            if (!seen.insert({x, a, y}).second) throw SchemaError("duplicate rate entry");
            const int ai = m.action_pos(x, a);
            if (ai < 0)
                throw ValidationError("rate entry outside graph K at state " + m.labels[x]);
            m.jumps[x][ai].push_back({y, r});
        }
    }

    for (const auto& table : j.at("costs")) {
        std::vector<std::vector<double>> t(n);
        for (int x = 0; x < n; ++x) t[x].assign(m.action_sets[x].size(), 0.0);
        std::set<std::pair<int, int>> seen;
        for (const auto& e : table) {
            if (!e.is_array() || e.size() != 3)
                throw SchemaError("cost entry must be [state, action, value]");
            const int x = state_of(e[0]);
            const int a = e[1].get<int>();
            if (!seen.insert({x, a}).second) throw SchemaError("duplicate cost entry");
            const int ai = m.action_pos(x, a);
            if (ai < 0)
                throw ValidationError("cost entry outside graph K at state " + m.labels[x]);
            t[x][ai] = detail::cost_value(e[2]);
        }
        m.costs.push_back(std::move(t));
    }

    m.discount = j.at("alpha").get<double>();
    if (j.contains("bounds")) m.bounds = j.at("bounds").get<std::vector<double>>();
    m.initial_state = j.contains("initial") ? state_of(j.at("initial")) : 0;
    if (j.contains("certificate")) out.certificate = j.at("certificate");
    if (j.contains("delta_state")) out.delta_state = detail::label_of(j.at("delta_state"));
    if (j.contains("shift")) out.shift = j.at("shift").get<double>();

    m.finalize();
    if (validated) require_valid(m);
    return out;
}

inline LoadedModel load_model(const std::string& path, bool validated = true) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open model file " + path);
    ojson j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed JSON in " + path + ": " + e.what());
    }
    if (!j.is_object()) throw ParseError("model file must hold a JSON object");
    return load_model_json(j, validated);
}

// ---------------------------------------------------------------------------
// Writers (stable key order throughout)
// ---------------------------------------------------------------------------

inline ojson cost_entry_json(double v) {
    if (std::isinf(v)) return ojson("inf");
    return ojson(v);
}

inline ojson save_model(const CtmdpModel& m) {
    ojson j;
    j["states"] = m.labels;
    j["actions"] = m.action_sets;
    ojson rates = ojson::array();
    for (int x = 0; x < m.num_states(); ++x)
        for (int ai = 0; ai < m.num_actions(x); ++ai)
            for (const auto& [y, r] : m.jumps[x][ai])
                rates.push_back(ojson::array({m.labels[x], m.action_sets[x][ai], m.labels[y], r}));
    j["rates"] = std::move(rates);
    ojson costs = ojson::array();
    for (const auto& table : m.costs) {
        ojson t = ojson::array();
        for (int x = 0; x < m.num_states(); ++x)
            for (int ai = 0; ai < m.num_actions(x); ++ai)
                t.push_back(
                    ojson::array({m.labels[x], m.action_sets[x][ai], cost_entry_json(table[x][ai])}));
        costs.push_back(std::move(t));
    }
    j["costs"] = std::move(costs);
    j["alpha"] = m.discount;
    j["bounds"] = m.bounds;
    j["initial"] = m.labels[m.initial_state];
    return j;
}

/// Serializes the drift-weighted model in the plain model schema (so it
/// round-trips through load_model) plus the transform-specific fields.
inline ojson save_transformed(const TransformedModel& tm) {
    ojson j;
    j["states"] = tm.labels;
    j["actions"] = tm.action_sets;
    ojson rates = ojson::array();
    for (int x = 0; x < tm.num_states(); ++x)
        for (int ai = 0; ai < tm.num_actions(x); ++ai)
            for (const auto& [y, r] : tm.jumps[x][ai])
                rates.push_back(
                    ojson::array({tm.labels[x], tm.action_sets[x][ai], tm.labels[y], r}));
    j["rates"] = std::move(rates);
    ojson costs = ojson::array();
    for (const auto& table : tm.shifted_costs) {
        ojson t = ojson::array();
        for (int x = 0; x < tm.num_states(); ++x)
            for (int ai = 0; ai < tm.num_actions(x); ++ai)
                t.push_back(ojson::array(
                    {tm.labels[x], tm.action_sets[x][ai], cost_entry_json(table[x][ai])}));
        costs.push_back(std::move(t));
    }
    j["costs"] = std::move(costs);
    j["alpha"] = tm.residual_discount;
    j["bounds"] = tm.bounds;
    j["initial"] = tm.labels[tm.initial_state];
    j["delta_state"] = tm.labels[tm.cemetery()];
    j["shift"] = tm.shift;
    return j;
}

inline ojson save_dtmdp(const DtmdpModel& d) {
    ojson j;
    j["states"] = d.labels;
    j["actions"] = d.action_sets;
    ojson kernel = ojson::array();
    for (int x = 0; x < d.num_states(); ++x)
        for (int ai = 0; ai < d.num_actions(x); ++ai)
            for (const auto& [y, p] : d.trans[x][ai])
                kernel.push_back(
                    ojson::array({d.labels[x], d.action_sets[x][ai], d.labels[y], p}));
    j["kernel"] = std::move(kernel);
    ojson costs = ojson::array();
    for (const auto& table : d.costs) {
        ojson t = ojson::array();
        for (int x = 0; x < d.num_states(); ++x)
            for (int ai = 0; ai < d.num_actions(x); ++ai)
                t.push_back(ojson::array(
                    {d.labels[x], d.action_sets[x][ai], cost_entry_json(table[x][ai])}));
        costs.push_back(std::move(t));
    }
    j["costs"] = std::move(costs);
    j["absorbing"] = ojson::array({d.labels[d.sink()]});
    j["alpha"] = d.alpha;
    j["rho"] = d.rho;
    j["shift"] = d.shift;
    j["w"] = d.weights;
    ojson exits = ojson::array();
    for (int x = 0; x < d.num_interior(); ++x)
        for (int ai = 0; ai < d.num_actions(x); ++ai)
            exits.push_back(ojson::array({d.labels[x], d.action_sets[x][ai], d.exit_rate[x][ai]}));
    j["exit_rates"] = std::move(exits);
    j["initial"] = d.labels[d.initial_state];
    return j;
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

inline CertificateBundle load_certificate_json(const ojson& j) {
    detail::reject_unknown_keys(j,
                                {"w", "rho", "L", "w_prime", "rho_prime", "v_m",
                                 "w_tilde_prime", "l_tilde_prime", "rho_tilde_prime", "l_tilde"},
                                "certificate block");
    CertificateBundle b;
    if (j.contains("w")) b.w = j.at("w").get<std::vector<double>>();
    if (j.contains("rho")) b.rho = j.at("rho").get<double>();
    if (j.contains("L")) b.L = j.at("L").get<double>();
    if (j.contains("w_prime")) b.w_prime = j.at("w_prime").get<std::vector<double>>();
    if (j.contains("rho_prime")) b.rho_prime = j.at("rho_prime").get<double>();
    if (j.contains("v_m")) b.v_m = j.at("v_m").get<std::vector<std::vector<int>>>();
    if (j.contains("w_tilde_prime"))
        b.w_tilde_prime = j.at("w_tilde_prime").get<std::vector<double>>();
    if (j.contains("l_tilde_prime")) b.l_tilde_prime = j.at("l_tilde_prime").get<double>();
    if (j.contains("rho_tilde_prime")) b.rho_tilde_prime = j.at("rho_tilde_prime").get<double>();
    if (j.contains("l_tilde")) b.l_tilde = j.at("l_tilde").get<double>();
    return b;
}

inline CertificateBundle load_certificate(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open certificate file " + path);
    ojson j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ParseError("malformed JSON in " + path + ": " + e.what());
    }
    return load_certificate_json(j);
}

inline ojson save_certificate(const DriftCertificate& c) {
    ojson j;
    j["w"] = c.w;
    j["rho"] = c.rho;
    j["L"] = c.L;
    return j;
}

// ---------------------------------------------------------------------------
// Policies and results
// ---------------------------------------------------------------------------

/// Policy file: {"policy": [...]} with one action id per state, or one weight
/// list per state for a randomized policy.
inline ojson save_policy(const CtmdpModel& m, const StationaryPolicy& p) {
    (void)m;
    ojson j;
    j["policy"] = p.weights;
    return j;
}

inline ojson save_policy(const DeterministicPolicy& p) {
    ojson j;
    j["policy"] = p.choice;
    return j;
}

/// Reads either policy form against a model with `n` states; deterministic
/// entries are action ids, randomized entries weight vectors by position.
template <typename ModelLike>
StationaryPolicy load_policy_json(const ojson& j, const ModelLike& m, int n) {
    if (!j.is_object() || !j.contains("policy"))
        throw SchemaError("policy file must hold {\"policy\": [...]}");
    const ojson& p = j.at("policy");
    if (static_cast<int>(p.size()) != n)
        throw SchemaError("policy length does not match the state count");
    StationaryPolicy out;
    out.weights.resize(n);
    for (int x = 0; x < n; ++x) {
        if (p[x].is_number_integer()) {
            const int pos = m.action_pos(x, p[x].get<int>());
            if (pos < 0) throw SchemaError("policy picks an action outside graph K");
            out.weights[x].assign(m.num_actions(x), 0.0);
            out.weights[x][pos] = 1.0;
        } else if (p[x].is_array()) {
            out.weights[x] = p[x].get<std::vector<double>>();
            if (static_cast<int>(out.weights[x].size()) != m.num_actions(x))
                throw SchemaError("policy weights do not match the action set");
        } else {
            throw SchemaError("policy entry must be an action id or a weight list");
        }
    }
    out.check();
    return out;
}

inline ojson save_estimate(const DiscountedCostEstimate& est, std::uint64_t seed) {
    ojson j;
    j["mean"] = est.mean;
    j["stderr"] = est.standard_error;
    j["tail_bound"] = est.tail_bound;
    j["n"] = est.trajectories;
    j["seed"] = seed;
    return j;
}

inline void write_json(const ojson& j, const std::string& path) {
    if (path.empty() || path == "-") {
        std::cout << j.dump(2) << "\n";
        return;
    }
    std::ofstream out(path);
    if (!out) throw ParseError("cannot open output file " + path);
    out << j.dump(2) << "\n";
}

} // namespace ctmdp
