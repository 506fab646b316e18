#pragma once

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "rcq/common.hpp"
#include "rcq/experiments.hpp"

namespace rcq::cli {

inline constexpr int exit_ok = 0;
inline constexpr int exit_config = 2;
inline constexpr int exit_numeric = 3;

inline experiments::ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file: " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw config_error(std::string("config is not valid JSON: ") + e.what());
    }
    return experiments::parse_config(j);
}

inline int dispatch(const std::vector<std::string>& args, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
    CLI::App app{"reaction-coordinate quality experiments"};
    app.require_subcommand(1);

    std::string run_config, validate_config, override_output;
    int threads = 0;
    auto* run_cmd = app.add_subcommand("run", "execute an experiment described by a JSON config");
    run_cmd->add_option("config", run_config, "path to the config file")->required();
    run_cmd->add_option("--threads", threads,
                        "worker pool size (outputs are identical for any value)");
    run_cmd->add_option("--output-dir", override_output, "override the config's output directory");

    auto* val_cmd = app.add_subcommand("validate", "check a JSON config without running it");
    val_cmd->add_option("config", validate_config, "path to the config file")->required();

    auto* list_cmd = app.add_subcommand("list-experiments", "print the available experiments");

    std::vector<const char*> argv;
    const std::string prog = "rcq";
    argv.push_back(prog.c_str());
    for (const auto& a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), const_cast<char**>(argv.data()));
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            out << app.help();
            return exit_ok;
        }
        err << "error: " << e.what() << "\n";
        return exit_config;
    }

    try {
        if (list_cmd->parsed()) {
            for (const auto& [name, desc] : experiments::experiment_catalog())
                out << name << "  -  " << desc << "\n";
            return exit_ok;
        }
        if (val_cmd->parsed()) {
            const auto cfg = load_config(validate_config);
            experiments::validate_parameters(cfg);
            out << "ok: experiment '" << cfg.experiment << "', seed " << cfg.seed << ", output '"
                << cfg.output_dir << "'\n";
            return exit_ok;
        }
        auto cfg = load_config(run_config);
        if (threads > 0) cfg.threads = threads;
        if (!override_output.empty()) cfg.output_dir = override_output;
        experiments::validate_parameters(cfg);
        experiments::OutputSink sink;
        sink.dir = cfg.output_dir;
        out << experiments::run_experiment(cfg, sink);
        out << "wrote " << sink.files.size() << " file(s) + manifest to " << cfg.output_dir << "\n";
        return exit_ok;
    } catch (const config_error& e) {
        err << "config error: " << e.what() << "\n";
        return exit_config;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return exit_numeric;
    }
}

} // namespace rcq::cli
