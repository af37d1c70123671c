// End-to-end tests of the command-line tool: spawns the built binary and
// checks outputs, exit codes and byte-level determinism.

#include <catch2/catch_amalgamated.hpp>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>

#ifndef CTMDP_CLI_PATH
#error "CTMDP_CLI_PATH must point at the built binary"
#endif
#ifndef CTMDP_MODELS_DIR
#error "CTMDP_MODELS_DIR must point at the bundled models"
#endif

namespace {

using nlohmann::json;

struct RunResult {
    int exit_code;
    std::string out;
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(CTMDP_CLI_PATH) + " " + args + " 2>/dev/null";
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    std::string out;
    std::array<char, 4096> buf;
    size_t got;
    while ((got = fread(buf.data(), 1, buf.size(), pipe)) > 0) out.append(buf.data(), got);
    const int status = pclose(pipe);
    return {WEXITSTATUS(status), out};
}

std::string models_path(const std::string& name) {
    return std::string(CTMDP_MODELS_DIR) + "/" + name;
}

std::string write_temp(const std::string& name, const std::string& text) {
    const std::string path = "/tmp/ctmdp_cli_" + name;
    std::ofstream out(path);
    out << text;
    return path;
}

} // namespace

TEST_CASE("solve on the single-state model") {
    const auto r = run_cli("solve --model " + models_path("single_state.json"));
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(j["values"]["ctmdp"][0].get<double>() == Catch::Approx(5.0).margin(1e-8));
    CHECK(j["policy"][0].get<int>() == 0);
}

TEST_CASE("reduce emits the substituted kernel row") {
    const auto r = run_cli("reduce --model " + models_path("pure_birth_2x_m8.json"));
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    double next = 0.0, cem = 0.0, sink = 0.0;
    for (const auto& e : j["kernel"]) {
        if (e[0] != "1") continue;
        if (e[2] == "2") next = e[3].get<double>();
        if (e[2] == "delta") cem = e[3].get<double>();
        if (e[2] == "sink") sink = e[3].get<double>();
    }
    CHECK(next == Catch::Approx(0.5).margin(1e-12));
    CHECK(cem == Catch::Approx(0.25).margin(1e-12));
    CHECK(sink == Catch::Approx(0.25).margin(1e-12));
}

TEST_CASE("certify echoes the requested drift constant") {
    const auto r = run_cli("certify --model " + models_path("pure_birth_2x_m8.json"));
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(j["rho"].get<double>() == 1.0);
    CHECK(j["ok"].get<bool>());
}

TEST_CASE("validate rejects a malformed model with exit code two") {
    const std::string bad = write_temp("bad.json", R"({
      "states": ["a", "b"], "actions": [[0], [0]],
      "rates": [["a", 0, "a", 1.0]],
      "costs": [[["a", 0, 1.0]]], "alpha": 1.0
    })");
    const auto r = run_cli("validate --model " + bad);
    CHECK(r.exit_code == 2);
    const json j = json::parse(r.out);
    CHECK_FALSE(j["valid"].get<bool>());
    CHECK(j["violations"][0]["what"] == "diagonal entry supplied");
}

TEST_CASE("constrained solving") {
    SECTION("the analytic instance splits evenly") {
        const auto r =
            run_cli("solve-constrained --model " + models_path("constrained_two_action.json"));
        REQUIRE(r.exit_code == 0);
        const json j = json::parse(r.out);
        CHECK(j["values"]["ctmdp"].get<double>() == Catch::Approx(0.5).margin(1e-9));
        CHECK(j["policy"][0][0].get<double>() == Catch::Approx(0.5).margin(1e-9));
    }
    SECTION("an unattainable bound exits with code three") {
        std::ifstream in(models_path("constrained_two_action.json"));
        json model;
        in >> model;
        model["bounds"][0] = -5.0;
        const std::string path = write_temp("infeasible.json", model.dump());
        CHECK(run_cli("solve-constrained --model " + path).exit_code == 3);
    }
}

TEST_CASE("simulate with a policy file") {
    const std::string policy = write_temp("policy.json", R"({"policy": [0]})");
    const auto r = run_cli("simulate --model " + models_path("single_state.json") +
                           " --policy " + policy + " --ntraj 500 --seed 9");
    REQUIRE(r.exit_code == 0);
    const json j = json::parse(r.out);
    CHECK(std::abs(j["mean"].get<double>() - 5.0) <=
          4.0 * j["stderr"].get<double>() + j["tail_bound"].get<double>() + 1e-9);
    CHECK(j["n"].get<long long>() == 500);
}

TEST_CASE("simulate can dump per-trajectory records") {
    const std::string policy = write_temp("policy3.json", R"({"policy": [0, 0]})");
    const std::string dump = "/tmp/ctmdp_cli_dump.csv";
    const auto r = run_cli("simulate --model " + models_path("two_state.json") + " --policy " +
                           policy + " --ntraj 16 --seed 3 --dump " + dump);
    REQUIRE(r.exit_code == 0);
    std::ifstream in(dump);
    std::string header;
    std::getline(in, header);
    CHECK(header == "trajectory,discounted_cost");
    int rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows == 16);
}

TEST_CASE("diagnose emits defect and composition columns") {
    const auto r = run_cli("diagnose --model " + models_path("pure_birth_2x_m8.json") +
                           " --leaky --times 0.5,1.0");
    REQUIRE(r.exit_code == 0);
    CHECK(r.out.rfind("x,t,defect,kc_residual", 0) == 0);
    int lines = 0;
    for (char c : r.out)
        if (c == '\n') ++lines;
    CHECK(lines == 1 + 2 * 8);
}

TEST_CASE("pipeline outputs are byte-identical across runs") {
    const std::string args = "solve --model " + models_path("pure_birth_2x_m8.json");
    const auto a = run_cli(args);
    const auto b = run_cli(args);
    CHECK(a.out == b.out);

    const std::string sim = "simulate --model " + models_path("single_state.json") +
                            " --policy " + write_temp("policy2.json", R"({"policy": [0]})") +
                            " --ntraj 200 --seed 4 --workers 1";
    const std::string sim8 = sim.substr(0, sim.size() - 1) + "8";
    CHECK(run_cli(sim).out == run_cli(sim8).out);
}

TEST_CASE("transform output reloads as a model") {
    const std::string out = "/tmp/ctmdp_cli_transformed.json";
    const auto r = run_cli("transform --model " + models_path("pure_birth_2x_m8.json") +
                           " --out " + out);
    REQUIRE(r.exit_code == 0);
    const auto v = run_cli("validate --model " + out);
    CHECK(v.exit_code == 0);
    std::ifstream in(out);
    json j;
    in >> j;
    CHECK(j["delta_state"] == "delta");
    CHECK(j["alpha"].get<double>() == Catch::Approx(1.0)); // alpha - rho
}
