#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "rcq/cli.hpp"
#include "rcq/csv.hpp"
#include "rcq/experiments.hpp"

using namespace rcq;
namespace fs = std::filesystem;

TEST_SUITE_BEGIN("cli");

namespace {

fs::path scratch_dir(const std::string& tag) {
    const fs::path dir = fs::temp_directory_path() / ("rcq_test_" + tag);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

fs::path write_json(const fs::path& dir, const std::string& name, const std::string& body) {
    const fs::path p = dir / name;
    std::ofstream(p) << body;
    return p;
}

} // namespace

TEST_CASE("config validation lists every offending key") {
    nlohmann::json j;
    j["experiment"] = "lumpability-decay";
    j["parameters"] = {{"sigma_min", 2.0}, {"bogus_a", 1}, {"bogus_b", true}, {"taus", "oops"}};
    const auto cfg = experiments::parse_config(j);
    try {
        experiments::validate_parameters(cfg);
        FAIL("expected a config_error");
    } catch (const config_error& e) {
        const std::string msg = e.what();
        CHECK(msg.find("bogus_a") != std::string::npos);
        CHECK(msg.find("bogus_b") != std::string::npos);
        CHECK(msg.find("taus") != std::string::npos);
    }
}

TEST_CASE("unknown top-level key and unknown experiment are rejected") {
    nlohmann::json j;
    j["experiment"] = "no-such-thing";
    j["mystery"] = 1;
    CHECK_THROWS_AS(experiments::parse_config(j), config_error);
}

TEST_CASE("seed environment override") {
    nlohmann::json j;
    j["experiment"] = "oracle-suite";
    j["seed"] = 5;
    setenv("RCV_SEED", "99", 1);
    const auto cfg = experiments::parse_config(j);
    unsetenv("RCV_SEED");
    CHECK(cfg.seed == 99);
    const auto cfg2 = experiments::parse_config(j);
    CHECK(cfg2.seed == 5);
    setenv("RCV_SEED", "not-a-number", 1);
    CHECK_THROWS_AS(experiments::parse_config(j), config_error);
    unsetenv("RCV_SEED");
}

TEST_CASE("rerunning a config reproduces byte-identical CSV bodies") {
    const fs::path dir = scratch_dir("rerun");
    experiments::ExperimentConfig cfg;
    cfg.experiment = "lumpability-decay";
    cfg.seed = 7;
    cfg.parameters = {{"n_values", {2}}, {"taus", {1.0}}, {"sigma_min", 1.5},
                      {"sigma_max", 3.0}, {"sigma_step", 0.5}, {"nodes_per_axis", 512}};
    cfg.output_dir = (dir / "a").string();
    experiments::OutputSink sink_a;
    sink_a.dir = cfg.output_dir;
    experiments::run_experiment(cfg, sink_a);
    cfg.output_dir = (dir / "b").string();
    experiments::OutputSink sink_b;
    sink_b.dir = cfg.output_dir;
    experiments::run_experiment(cfg, sink_b);
    const std::string a = read_text_file(dir / "a" / "lumpability_decay.csv");
    const std::string b = read_text_file(dir / "b" / "lumpability_decay.csv");
    CHECK(a == b);
    CHECK(a.find("n,tau,sigma,distance") == 0);
    // manifest exists and echoes the resolved config
    const std::string manifest = read_text_file(dir / "a" / "manifest.json");
    const auto m = nlohmann::json::parse(manifest);
    CHECK(m["experiment"] == "lumpability-decay");
    CHECK(m["seed"] == 7);
    CHECK(m["parameters"]["sigma_step"] == 0.5);
    CHECK(m["parameters"].contains("fit_from_sigma")); // defaults are echoed too
    fs::remove_all(dir);
}

TEST_CASE("simulation-backed experiment reruns are byte-identical too") {
    const fs::path dir = scratch_dir("rerun_kde");
    experiments::ExperimentConfig cfg;
    cfg.experiment = "circular-loss";
    cfg.seed = 19;
    cfg.parameters = {{"sigmas", {10.0}}, {"m_outer", 2},      {"n_z", 3},
                      {"n_level", 4},     {"n_pairs", 3},      {"n_endpoints", 64},
                      {"grid_nodes", 32}, {"gibbs_nodes", 64}};
    std::vector<std::string> bodies;
    for (const char* sub : {"a", "b"}) {
        cfg.output_dir = (dir / sub).string();
        experiments::OutputSink sink;
        sink.dir = cfg.output_dir;
        experiments::run_experiment(cfg, sink);
        bodies.push_back(read_text_file(dir / sub / "circular_loss.csv"));
    }
    CHECK(bodies[0] == bodies[1]);
    CHECK(bodies[0].find(loss_csv_header()) == 0);
    fs::remove_all(dir);
}

TEST_CASE("dispatch exit codes") {
    const fs::path dir = scratch_dir("dispatch");
    std::ostringstream out, err;
    SUBCASE("list-experiments prints the full catalog") {
        CHECK(cli::dispatch({"list-experiments"}, out, err) == cli::exit_ok);
        for (const auto& [name, _] : experiments::experiment_catalog())
            CHECK(out.str().find(name) != std::string::npos);
    }
    SUBCASE("validate accepts a good config") {
        const auto p = write_json(dir, "good.json",
                                  R"({"experiment": "oracle-suite", "seed": 3,
                                      "parameters": {"n_chains": 5}})");
        CHECK(cli::dispatch({"validate", p.string()}, out, err) == cli::exit_ok);
    }
    SUBCASE("validate rejects unknown keys with exit code 2") {
        const auto p = write_json(dir, "bad.json",
                                  R"({"experiment": "oracle-suite",
                                      "parameters": {"n_chains": 5, "whoops": 1}})");
        CHECK(cli::dispatch({"validate", p.string()}, out, err) == cli::exit_config);
        CHECK(err.str().find("whoops") != std::string::npos);
    }
    SUBCASE("missing file is a config error") {
        CHECK(cli::dispatch({"validate", (dir / "absent.json").string()}, out, err) ==
              cli::exit_config);
    }
    SUBCASE("malformed JSON is a config error") {
        const auto p = write_json(dir, "broken.json", "{not json");
        CHECK(cli::dispatch({"run", p.string()}, out, err) == cli::exit_config);
    }
    SUBCASE("numeric failures exit with code 3") {
        // schema-valid but numerically impossible: the grid cap rejects it
        const auto p = write_json(dir, "huge.json",
                                  R"({"experiment": "spectrum", "output_dir": ")" +
                                      (dir / "huge_out").string() +
                                      R"(", "parameters": {"grid_k": 2000}})");
        CHECK(cli::dispatch({"run", p.string()}, out, err) == cli::exit_numeric);
    }
    SUBCASE("run executes a small experiment end to end") {
        const auto p = write_json(dir, "run.json",
                                  R"({"experiment": "oracle-suite", "seed": 4, "output_dir": ")" +
                                      (dir / "run_out").string() +
                                      R"(", "parameters": {"n_chains": 8}})");
        CHECK(cli::dispatch({"run", p.string()}, out, err) == cli::exit_ok);
        CHECK(fs::exists(dir / "run_out" / "oracle_suite.csv"));
        CHECK(fs::exists(dir / "run_out" / "fvariance_sweep.csv"));
        CHECK(fs::exists(dir / "run_out" / "manifest.json"));
        CHECK(out.str().find("sandwich_violations=0") != std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_SUITE_END();
