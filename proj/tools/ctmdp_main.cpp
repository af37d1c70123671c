// Command-line front end for the discounted CTMDP toolkit: validation,
// certification, drift transformation, reduction to the total-cost DTMDP,
// solving, simulation and the cross-module verification battery.

#include <CLI11.hpp>

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ctmdp/model_io.hpp"
#include "ctmdp/solver.hpp"
#include "ctmdp/transition_function.hpp"
#include "ctmdp/verify.hpp"

namespace {

using namespace ctmdp;

struct Options {
    std::string model_path, cert_path, policy_path, out_path = "-";
    double eps = 1e-9;
    std::uint64_t seed = 1;
    long long ntraj = 10000;
    double horizon = 0.0; // 0 = pick from the tail-bound rule
    int nmax = 64;
    int cost_index = 0;
    int workers = 0;
    int truncation = 0; // 0 = keep the file's level
    bool leaky = false;
    std::string times = "0.25,0.5,1.0";
    std::string dump_path;
};

std::vector<double> parse_times(const std::string& spec) {
    std::vector<double> out;
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stod(tok));
    if (out.empty()) throw DomainError("empty time grid");
    return out;
}

/// Certificate resolution: --cert file wins, then the model's embedded block,
/// then the constant drift function w = 1 (valid for every conservative
/// model) with a tightened rate.
DriftCertificate resolve_certificate(const LoadedModel& lm, const Options& opt,
                                     CertificateBundle* bundle_out = nullptr) {
    CertificateBundle bundle;
    if (!opt.cert_path.empty())
        bundle = load_certificate(opt.cert_path);
    else if (lm.certificate)
        bundle = load_certificate_json(*lm.certificate);
    if (bundle_out) *bundle_out = bundle;
    const std::vector<double> w =
        bundle.w ? *bundle.w : std::vector<double>(lm.model.num_states(), 1.0);
    return check_condition1(lm.model, w, bundle.rho);
}

int cmd_validate(const Options& opt) {
    const LoadedModel lm = load_model(opt.model_path, false);
    const ValidationReport rep = validate_model(lm.model);
    ojson j;
    j["valid"] = rep.ok();
    ojson violations = ojson::array();
    for (const auto& v : rep.violations) {
        ojson e;
        e["what"] = v.what;
        if (v.state >= 0) e["state"] = v.state;
        if (v.action >= 0) e["action"] = v.action;
        violations.push_back(e);
    }
    j["violations"] = violations;
    write_json(j, opt.out_path);
    return rep.ok() ? 0 : 2;
}

int cmd_certify(const Options& opt) {
    const LoadedModel lm = load_model(opt.model_path);
    CertificateBundle bundle;
    const DriftCertificate cert = resolve_certificate(lm, opt, &bundle);
    ojson j = save_certificate(cert);
    bool ok = true;

    std::optional<LyapunovCertificate> lyap;
    if (bundle.w_tilde_prime) {
        Condition5Certificate c5 = make_condition5(lm.model, cert, *bundle.w_tilde_prime);
        if (bundle.l_tilde_prime) c5.l_tilde_prime = *bundle.l_tilde_prime;
        if (bundle.rho_tilde_prime) c5.rho_tilde_prime = *bundle.rho_tilde_prime;
        if (bundle.l_tilde) c5.l_tilde = *bundle.l_tilde;
        const CheckReport rep = check_condition5(lm.model, cert, c5);
        ok = ok && rep.ok();
        j["condition5"] = {{"ok", rep.ok()},
                           {"l_tilde_prime", c5.l_tilde_prime},
                           {"rho_tilde_prime", c5.rho_tilde_prime},
                           {"l_tilde", c5.l_tilde}};
        lyap = condition5_to_condition2(c5, cert);
    }
    if (bundle.w_prime) {
        lyap = LyapunovCertificate{*bundle.w_prime,
                                   bundle.rho_prime ? *bundle.rho_prime : 0.0,
                                   bundle.v_m ? *bundle.v_m
                                              : std::vector<std::vector<int>>{}};
        if (!bundle.rho_prime) {
            // Tighten the Lyapunov rate when not supplied.
            double rp = kRhoMin;
            for (int x = 0; x < lm.model.num_states(); ++x)
                for (int ai = 0; ai < lm.model.num_actions(x); ++ai)
                    rp = std::max(rp, lm.model.drift_sum(*bundle.w_prime, x, ai) /
                                          (*bundle.w_prime)[x]);
            lyap->rho_prime = rp;
        }
        if (!bundle.v_m) {
            std::vector<int> all(lm.model.num_states());
            for (int x = 0; x < lm.model.num_states(); ++x) all[x] = x;
            lyap->v_m = {all};
        }
    }
    if (lyap) {
        const CheckReport c2 = check_condition2(lm.model, cert, *lyap);
        const CheckReport td = check_transformed_drift(lm.model, cert, *lyap);
        ok = ok && c2.ok() && td.ok();
        j["condition2"] = {{"ok", c2.ok()},
                           {"rho_prime", lyap->rho_prime},
                           {"ratio_profile", c2.profile}};
        j["transformed_drift"] = {{"ok", td.ok()}};
    }
    j["ok"] = ok;
    write_json(j, opt.out_path);
    return ok ? 0 : 2;
}

int cmd_transform(const Options& opt) {
    const LoadedModel lm = load_model(opt.model_path);
    const DriftCertificate cert = resolve_certificate(lm, opt);
    write_json(save_transformed(build_w_transform(lm.model, cert)), opt.out_path);
    return 0;
}

int cmd_reduce(const Options& opt) {
    const LoadedModel lm = load_model(opt.model_path);
    const DriftCertificate cert = resolve_certificate(lm, opt);
    write_json(save_dtmdp(build_dtmdp(build_w_transform(lm.model, cert))), opt.out_path);
    return 0;
}

// Measured runtime stays out of the JSON so identical inputs produce
// byte-identical outputs.
ojson report_json(const SolveReport& rep) {
    ojson j;
    j["iterations"] = rep.iterations;
    j["final_delta"] = rep.final_delta;
    j["error_bound"] = rep.error_bound;
    j["survival"] = rep.survival;
    if (!rep.lp_status.empty()) j["lp_status"] = rep.lp_status;
    return j;
}

int cmd_solve(const Options& opt) {
    const LoadedModel lm = load_model(opt.model_path);
    const DriftCertificate cert = resolve_certificate(lm, opt);
    const TransformedModel tm = build_w_transform(lm.model, cert);
    const DtmdpModel d = build_dtmdp(tm);
    const auto [vf, rep] = value_iteration(d, opt.eps);
    const DeterministicPolicy greedy = extract_greedy_policy(d, vf);
    const int n = lm.model.num_states();
    const auto ctmdp_vals = back_transform_value({vf.values.begin(), vf.values.begin() + n},
                                                 cert, tm.shift, tm.residual_discount);
    ojson j;
    j["values"] = {{"dtmdp", vf.values}, {"ctmdp", ctmdp_vals}};
    j["policy"] = greedy.choice;
    j["report"] = report_json(rep);
    write_json(j, opt.out_path);
    return 0;
}

int cmd_solve_constrained(const Options& opt) {
    const LoadedModel lm = load_model(opt.model_path);
    if (lm.model.num_costs() < 2)
        throw SchemaError("constrained solving needs at least one constraint cost table");
    const DriftCertificate cert = resolve_certificate(lm, opt);
    const TransformedModel tm = build_w_transform(lm.model, cert);
    const DtmdpModel d = build_dtmdp(tm);
    const int x0 = lm.model.initial_state;
    std::vector<double> reduced;
    for (double dj : lm.model.bounds)
        reduced.push_back(dj / cert.w[x0] - tm.shift / tm.residual_discount);
    const auto [pol, mu, rep] = solve_constrained_lp(d, reduced, x0);

    ojson j;
    const double obj_reduced = rep.final_delta;
    j["values"] = {{"dtmdp", obj_reduced},
                   {"ctmdp", cert.w[x0] * (obj_reduced + tm.shift / tm.residual_discount)}};
    j["policy"] = pol.weights;
    ojson measure = ojson::array();
    for (size_t x = 0; x < mu.mu.size(); ++x)
        for (size_t ai = 0; ai < mu.mu[x].size(); ++ai)
            measure.push_back(ojson::array(
                {d.labels[x], d.action_sets[x][ai], mu.mu[x][ai]}));
    j["occupation_measure"] = measure;
    j["report"] = report_json(rep);
    write_json(j, opt.out_path);
    return 0;
}

int cmd_simulate(const Options& opt) {
    const LoadedModel lm = load_model(opt.model_path);
    const DriftCertificate cert = resolve_certificate(lm, opt);
    if (opt.policy_path.empty()) throw SchemaError("--policy file required");
    std::ifstream in(opt.policy_path);
    if (!in) throw ParseError("cannot open policy file " + opt.policy_path);
    ojson pj;
    in >> pj;
    const StationaryPolicy pol = load_policy_json(pj, lm.model, lm.model.num_states());
    std::vector<double> samples;
    const auto est = estimate_discounted_cost(lm.model, cert, pol, lm.model.initial_state,
                                              opt.cost_index, opt.ntraj, opt.horizon, opt.seed,
                                              opt.workers, opt.dump_path.empty() ? nullptr : &samples);
    if (!opt.dump_path.empty()) {
        std::ofstream dump(opt.dump_path);
        if (!dump) throw ParseError("cannot open dump file " + opt.dump_path);
        dump << "trajectory,discounted_cost\n";
        for (size_t k = 0; k < samples.size(); ++k) dump << k << "," << samples[k] << "\n";
    }
    write_json(save_estimate(est, opt.seed), opt.out_path);
    return 0;
}

int cmd_verify(const Options& opt) {
    const auto results = run_verification(opt.seed == 1 ? 20240901 : opt.seed);
    bool all = true;
    ojson arr = ojson::array();
    for (const auto& r : results) {
        std::cout << (r.pass ? "PASS" : "FAIL") << "  " << r.name << " — " << r.detail << "\n";
        all = all && r.pass;
        arr.push_back({{"name", r.name}, {"pass", r.pass}, {"detail", r.detail}});
    }
    std::cout << (all ? "all criteria passed" : "SOME CRITERIA FAILED") << "\n";
    if (opt.out_path != "-") write_json(arr, opt.out_path);
    return all ? 0 : 2;
}

int cmd_diagnose(const Options& opt) {
    const LoadedModel lm = load_model(opt.model_path);
    QFunction q;
    if (opt.leaky || opt.truncation > 0) {
        if (!lm.family)
            throw SchemaError("--leaky/--truncation need a family-based model file");
        ModelFamily f = *lm.family;
        if (opt.truncation > 0) f.truncation = opt.truncation;
        q = make_family_qfunction(f, opt.leaky);
    } else {
        q = make_qfunction(lm.model, uniform_policy(lm.model, lm.model.num_states()));
    }
    std::ostringstream csv;
    csv << "x,t,defect,kc_residual\n";
    for (double t : parse_times(opt.times)) {
        const Eigen::VectorXd defect = honesty_defect(q, t, opt.nmax);
        const double kc = kc_residual(q, 0.0, 0.5 * t, t, opt.nmax);
        for (int x = 0; x < q.dim(); ++x)
            csv << (x + 1) << "," << t << "," << defect(x) << "," << kc << "\n";
    }
    if (opt.out_path.empty() || opt.out_path == "-") {
        std::cout << csv.str();
    } else {
        std::ofstream out(opt.out_path);
        if (!out) throw ParseError("cannot open output file " + opt.out_path);
        out << csv.str();
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discounted CTMDP solver and verification toolkit"};
    app.require_subcommand(1);
    Options opt;

    auto add_common = [&](CLI::App* sub, bool needs_model = true) {
        if (needs_model) sub->add_option("--model", opt.model_path, "model JSON file")->required();
        sub->add_option("--cert", opt.cert_path, "certificate JSON file");
        sub->add_option("--out", opt.out_path, "output path (default stdout)");
        sub->add_option("--eps", opt.eps, "value-iteration accuracy");
        sub->add_option("--seed", opt.seed, "random seed");
        sub->add_option("--ntraj", opt.ntraj, "trajectory count");
        sub->add_option("--horizon", opt.horizon, "simulation horizon (0 = automatic)");
        sub->add_option("--nmax", opt.nmax, "series truncation depth");
        sub->add_option("--truncation", opt.truncation, "override family truncation level");
        sub->add_flag("--leaky", opt.leaky, "leaky truncation boundary for diagnostics");
        sub->add_option("--workers", opt.workers, "worker threads (0 = hardware)");
    };

    auto* validate = app.add_subcommand("validate", "check model invariants");
    add_common(validate);
    auto* certify = app.add_subcommand("certify", "check drift and non-explosion conditions");
    add_common(certify);
    auto* transform = app.add_subcommand("transform", "emit the drift-weighted model");
    add_common(transform);
    auto* reduce = app.add_subcommand("reduce", "emit the reduced total-cost DTMDP");
    add_common(reduce);
    auto* solve = app.add_subcommand("solve", "value iteration and greedy policy");
    add_common(solve);
    auto* solve_con = app.add_subcommand("solve-constrained", "occupation-measure program");
    add_common(solve_con);
    auto* simulate = app.add_subcommand("simulate", "Monte-Carlo cost estimate for a policy");
    add_common(simulate);
    simulate->add_option("--policy", opt.policy_path, "policy JSON file")->required();
    simulate->add_option("--cost-index", opt.cost_index, "cost table index");
    simulate->add_option("--dump", opt.dump_path, "per-trajectory CSV dump path");
    auto* verify = app.add_subcommand("verify", "run the full verification battery");
    add_common(verify, false);
    auto* diagnose = app.add_subcommand("diagnose", "defect and composition diagnostics as CSV");
    add_common(diagnose);
    diagnose->add_option("--times", opt.times, "comma-separated diagnostic times");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e); // --help
        app.exit(e);
        return 1;
    }

    try {
        if (validate->parsed()) return cmd_validate(opt);
        if (certify->parsed()) return cmd_certify(opt);
        if (transform->parsed()) return cmd_transform(opt);
        if (reduce->parsed()) return cmd_reduce(opt);
        if (solve->parsed()) return cmd_solve(opt);
        if (solve_con->parsed()) return cmd_solve_constrained(opt);
        if (simulate->parsed()) return cmd_simulate(opt);
        if (verify->parsed()) return cmd_verify(opt);
        if (diagnose->parsed()) return cmd_diagnose(opt);
    } catch (const Infeasible& e) {
        std::cerr << "infeasible: " << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const SchemaError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DomainError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const DriftViolation& e) {
        std::cerr << "certification failed: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "internal numerical failure: " << e.what() << "\n";
        return 4;
    }
    return 1;
}
