#pragma once

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "rcq/common.hpp"
#include "rcq/csv.hpp"
#include "rcq/gibbs.hpp"
#include "rcq/kde.hpp"
#include "rcq/loss.hpp"
#include "rcq/oracle.hpp"
#include "rcq/potential.hpp"
#include "rcq/reaction_coordinate.hpp"
#include "rcq/sde.hpp"
#include "rcq/spectral.hpp"
#include "rcq/stats.hpp"
#include "rcq/torus.hpp"

namespace rcq::experiments {

using nlohmann::json;

inline constexpr const char* artifact_version = "0.1.0";

inline const std::vector<std::pair<std::string, std::string>>& experiment_catalog() {
    static const std::vector<std::pair<std::string, std::string>> catalog = {
        {"lumpability-decay", "kernel-norm distance of the torus kernel to its effective kernel over a sigma grid"},
        {"loss-landscape", "observable-side loss of the linear coordinate family over an alpha grid"},
        {"variance-study", "integrand constancy on level sets and Var[f] across sigma and dimension"},
        {"mc-error", "relative expected Monte Carlo error of the loss versus sample count"},
        {"circular-loss", "empirical-kernel loss of the polar angle and radius coordinates"},
        {"spectrum", "grid-discretized transfer operator spectrum of the circular system"},
        {"oracle-suite", "exact finite-chain checks: equivalence, sandwich, integrand variance"},
    };
    return catalog;
}

inline int experiment_budget_minutes(const std::string& name) {
    static const std::map<std::string, int> budgets = {
        {"lumpability-decay", 2}, {"loss-landscape", 15}, {"variance-study", 15},
        {"mc-error", 20},         {"circular-loss", 30},  {"spectrum", 10},
        {"oracle-suite", 2},
    };
    const auto it = budgets.find(name);
    return it == budgets.end() ? 30 : it->second;
}

// ---------------------------------------------------------------------------
// config parsing
// ---------------------------------------------------------------------------

struct ExperimentConfig {
    std::string experiment;
    std::uint64_t seed = 0;
    std::string output_dir;
    int threads = 1;
    json parameters = json::object();
};

// Collects every offending key before failing, so one validation pass reports
// the whole problem list.
class ParamReader {
public:
    explicit ParamReader(const json& params) : params_(params) {}

    double number(const std::string& key, double def) {
        known_.insert(key);
        if (!params_.contains(key)) {
            resolved_[key] = def;
            return def;
        }
        if (!params_[key].is_number()) {
            errors_.push_back("parameter '" + key + "' must be a number");
            return def;
        }
        resolved_[key] = params_[key];
        return params_[key].get<double>();
    }

    std::int64_t integer(const std::string& key, std::int64_t def) {
        known_.insert(key);
        if (!params_.contains(key)) {
            resolved_[key] = def;
            return def;
        }
        if (!params_[key].is_number_integer()) {
            errors_.push_back("parameter '" + key + "' must be an integer");
            return def;
        }
        resolved_[key] = params_[key];
        return params_[key].get<std::int64_t>();
    }

    std::vector<double> number_list(const std::string& key, std::vector<double> def) {
        known_.insert(key);
        if (!params_.contains(key)) {
            resolved_[key] = def;
            return def;
        }
        if (!params_[key].is_array()) {
            errors_.push_back("parameter '" + key + "' must be an array of numbers");
            return def;
        }
        std::vector<double> out;
        for (const auto& v : params_[key]) {
            if (!v.is_number()) {
                errors_.push_back("parameter '" + key + "' must contain only numbers");
                return def;
            }
            out.push_back(v.get<double>());
        }
        resolved_[key] = out;
        return out;
    }

    // entries are positive numbers or the string "inf"
    std::vector<SigmaParam> sigma_list(const std::string& key, std::vector<SigmaParam> def) {
        known_.insert(key);
        if (!params_.contains(key)) {
            resolved_[key] = echo_sigmas(def);
            return def;
        }
        if (!params_[key].is_array()) {
            errors_.push_back("parameter '" + key + "' must be an array of numbers or \"inf\"");
            return def;
        }
        std::vector<SigmaParam> out;
        for (const auto& v : params_[key]) {
            if (v.is_number() && v.get<double>() > 0.0) {
                out.push_back(SigmaParam::finite(v.get<double>()));
            } else if (v.is_string() && (v == "inf" || v == "infinity")) {
                out.push_back(SigmaParam::infinity());
            } else {
                errors_.push_back("parameter '" + key + "' entries must be positive numbers or \"inf\"");
                return def;
            }
        }
        resolved_[key] = echo_sigmas(out);
        return out;
    }

    void finish(const std::string& experiment) {
        for (const auto& item : params_.items()) {
            if (!known_.count(item.key()))
                errors_.push_back("unknown parameter '" + item.key() + "' for experiment '" +
                                  experiment + "'");
        }
        if (!errors_.empty()) {
            std::string msg = "invalid configuration:";
            for (const auto& e : errors_) msg += "\n  - " + e;
            throw config_error(msg);
        }
    }

    const json& resolved() const { return resolved_; }

private:
    static json echo_sigmas(const std::vector<SigmaParam>& sigmas) {
        json arr = json::array();
        for (const auto& s : sigmas) {
            if (s.is_infinite())
                arr.push_back("inf");
            else
                arr.push_back(s.value());
        }
        return arr;
    }

    const json& params_;
    std::set<std::string> known_;
    std::vector<std::string> errors_;
    json resolved_ = json::object();
};

inline ExperimentConfig parse_config(const json& j) {
    std::vector<std::string> errors;
    ExperimentConfig cfg;
    static const std::set<std::string> top_keys = {"experiment", "seed", "output_dir",
                                                   "threads", "parameters"};
    for (const auto& item : j.items())
        if (!top_keys.count(item.key())) errors.push_back("unknown key '" + item.key() + "'");

    if (!j.contains("experiment") || !j["experiment"].is_string()) {
        errors.push_back("missing or non-string 'experiment'");
    } else {
        cfg.experiment = j["experiment"].get<std::string>();
        bool found = false;
        for (const auto& [name, _] : experiment_catalog()) found = found || name == cfg.experiment;
        if (!found) errors.push_back("unknown experiment '" + cfg.experiment + "'");
    }
    if (j.contains("seed")) {
        if (!j["seed"].is_number_unsigned() && !j["seed"].is_number_integer())
            errors.push_back("'seed' must be an integer");
        else
            cfg.seed = j["seed"].get<std::uint64_t>();
    }
    if (j.contains("threads")) {
        if (!j["threads"].is_number_integer())
            errors.push_back("'threads' must be an integer");
        else
            cfg.threads = std::max(1, j["threads"].get<int>());
    }
    if (j.contains("output_dir")) {
        if (!j["output_dir"].is_string())
            errors.push_back("'output_dir' must be a string");
        else
            cfg.output_dir = j["output_dir"].get<std::string>();
    }
    if (j.contains("parameters")) {
        if (!j["parameters"].is_object())
            errors.push_back("'parameters' must be an object");
        else
            cfg.parameters = j["parameters"];
    }
    if (!errors.empty()) {
        std::string msg = "invalid configuration:";
        for (const auto& e : errors) msg += "\n  - " + e;
        throw config_error(msg);
    }
    if (cfg.output_dir.empty()) cfg.output_dir = "out/" + cfg.experiment;
    // environment override of the seed
    if (const char* env = std::getenv("RCV_SEED")) {
        try {
            std::size_t used = 0;
            cfg.seed = std::stoull(env, &used);
            if (used != std::string(env).size()) throw std::invalid_argument("trailing chars");
        } catch (...) {
            throw config_error("RCV_SEED must be an unsigned integer, got '" + std::string(env) + "'");
        }
    }
    return cfg;
}

// ---------------------------------------------------------------------------
// output plumbing
// ---------------------------------------------------------------------------

struct OutputSink {
    std::filesystem::path dir;
    bool enabled = true;
    mutable std::vector<std::string> files;

    void write(const std::string& name, const std::string& body) const {
        files.push_back(name);
        if (enabled) write_text_file(dir / name, body);
    }
};

inline std::string iso_timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm_utc{};
    gmtime_r(&now, &tm_utc);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
    return buf;
}

inline void write_manifest(const OutputSink& sink, const ExperimentConfig& cfg,
                           const json& resolved_params, double runtime_seconds,
                           const std::vector<std::string>& notes) {
    json m;
    m["experiment"] = cfg.experiment;
    m["seed"] = cfg.seed;
    m["threads"] = cfg.threads;
    m["output_dir"] = cfg.output_dir;
    m["parameters"] = resolved_params;
    m["artifact_version"] = artifact_version;
    m["generated_at"] = iso_timestamp();
    m["runtime_seconds"] = runtime_seconds;
    m["budget_minutes"] = experiment_budget_minutes(cfg.experiment);
    m["files"] = sink.files;
    m["notes"] = notes;
    if (sink.enabled) write_text_file(sink.dir / "manifest.json", m.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// per-experiment parameters (single source of truth for schema + defaults)
// ---------------------------------------------------------------------------

struct DecayParams {
    std::vector<double> n_values{2, 3};
    std::vector<double> taus{0.5, 1.0};
    double sigma_min = 1.0, sigma_max = 4.0, sigma_step = 0.5;
    double fit_from_sigma = 2.0;
    int nodes_per_axis = 0;
    json resolved;

    static DecayParams read(const ExperimentConfig& cfg) {
        DecayParams p;
        ParamReader pr(cfg.parameters);
        p.n_values = pr.number_list("n_values", p.n_values);
        p.taus = pr.number_list("taus", p.taus);
        p.sigma_min = pr.number("sigma_min", p.sigma_min);
        p.sigma_max = pr.number("sigma_max", p.sigma_max);
        p.sigma_step = pr.number("sigma_step", p.sigma_step);
        p.fit_from_sigma = pr.number("fit_from_sigma", p.fit_from_sigma);
        p.nodes_per_axis = static_cast<int>(pr.integer("nodes_per_axis", p.nodes_per_axis));
        pr.finish(cfg.experiment);
        p.resolved = pr.resolved();
        return p;
    }
};

struct LandscapeParams {
    int alpha_count = 33;
    double tau = 1.0;
    std::vector<SigmaParam> sigmas{SigmaParam::finite(1.0), SigmaParam::finite(2.0),
                                   SigmaParam::infinity()};
    std::size_t m_outer = 64, n_z = 21, n_level = 24, n_pairs = 20;
    int grid_nodes = 128;
    json resolved;

    static LandscapeParams read(const ExperimentConfig& cfg) {
        LandscapeParams p;
        ParamReader pr(cfg.parameters);
        p.alpha_count = static_cast<int>(pr.integer("alpha_count", p.alpha_count));
        p.tau = pr.number("tau", p.tau);
        p.sigmas = pr.sigma_list("sigmas", p.sigmas);
        p.m_outer = static_cast<std::size_t>(pr.integer("m_outer", static_cast<std::int64_t>(p.m_outer)));
        p.n_z = static_cast<std::size_t>(pr.integer("n_z", static_cast<std::int64_t>(p.n_z)));
        p.n_level = static_cast<std::size_t>(pr.integer("n_level", static_cast<std::int64_t>(p.n_level)));
        p.n_pairs = static_cast<std::size_t>(pr.integer("n_pairs", static_cast<std::int64_t>(p.n_pairs)));
        p.grid_nodes = static_cast<int>(pr.integer("grid_nodes", p.grid_nodes));
        pr.finish(cfg.experiment);
        p.resolved = pr.resolved();
        return p;
    }
};

struct VarianceParams {
    double tau = 1.0;
    std::vector<SigmaParam> sigmas{SigmaParam::finite(1.0), SigmaParam::finite(2.0),
                                   SigmaParam::finite(4.0), SigmaParam::infinity()};
    std::size_t m_outer = 512, n_z = 33, n_level = 64, n_pairs = 96;
    double constancy_x1 = 0.7;
    int constancy_count = 16, constancy_n_pairs = 48, constancy_n_level = 64;
    json resolved;

    static VarianceParams read(const ExperimentConfig& cfg) {
        VarianceParams p;
        ParamReader pr(cfg.parameters);
        p.tau = pr.number("tau", p.tau);
        p.sigmas = pr.sigma_list("sigmas", p.sigmas);
        p.m_outer = static_cast<std::size_t>(pr.integer("m_outer", static_cast<std::int64_t>(p.m_outer)));
        p.n_z = static_cast<std::size_t>(pr.integer("n_z", static_cast<std::int64_t>(p.n_z)));
        p.n_level = static_cast<std::size_t>(pr.integer("n_level", static_cast<std::int64_t>(p.n_level)));
        p.n_pairs = static_cast<std::size_t>(pr.integer("n_pairs", static_cast<std::int64_t>(p.n_pairs)));
        p.constancy_x1 = pr.number("constancy_x1", p.constancy_x1);
        p.constancy_count = static_cast<int>(pr.integer("constancy_count", p.constancy_count));
        p.constancy_n_pairs = static_cast<int>(pr.integer("constancy_n_pairs", p.constancy_n_pairs));
        p.constancy_n_level = static_cast<int>(pr.integer("constancy_n_level", p.constancy_n_level));
        pr.finish(cfg.experiment);
        p.resolved = pr.resolved();
        return p;
    }
};

struct McErrorParams {
    double tau = 1.0;
    std::vector<SigmaParam> sigmas{SigmaParam::finite(2.0), SigmaParam::infinity()};
    std::vector<double> m_list{16, 64, 256, 1024};
    std::size_t n_trials = 150, reference_factor = 100;
    std::size_t n_z = 25, n_level = 32, n_pairs = 64;
    json resolved;

    static McErrorParams read(const ExperimentConfig& cfg) {
        McErrorParams p;
        ParamReader pr(cfg.parameters);
        p.tau = pr.number("tau", p.tau);
        p.sigmas = pr.sigma_list("sigmas", p.sigmas);
        p.m_list = pr.number_list("m_list", p.m_list);
        p.n_trials = static_cast<std::size_t>(pr.integer("n_trials", static_cast<std::int64_t>(p.n_trials)));
        p.reference_factor =
            static_cast<std::size_t>(pr.integer("reference_factor", static_cast<std::int64_t>(p.reference_factor)));
        p.n_z = static_cast<std::size_t>(pr.integer("n_z", static_cast<std::int64_t>(p.n_z)));
        p.n_level = static_cast<std::size_t>(pr.integer("n_level", static_cast<std::int64_t>(p.n_level)));
        p.n_pairs = static_cast<std::size_t>(pr.integer("n_pairs", static_cast<std::int64_t>(p.n_pairs)));
        pr.finish(cfg.experiment);
        p.resolved = pr.resolved();
        return p;
    }
};

struct CircularParams {
    std::vector<double> sigmas{1.0, 10.0, 100.0};
    double beta = 1.0, tau = 0.1, dt = 1e-3;
    std::size_t m_outer = 48, n_z = 13, n_level = 24, n_pairs = 16;
    std::size_t n_endpoints = 1024;
    int grid_nodes = 96, gibbs_nodes = 256;
    double r_max = 2.0;
    std::vector<double> bandwidth; // empty = pilot rule-of-thumb bandwidth
    json resolved;

    static CircularParams read(const ExperimentConfig& cfg) {
        CircularParams p;
        ParamReader pr(cfg.parameters);
        p.sigmas = pr.number_list("sigmas", p.sigmas);
        p.beta = pr.number("beta", p.beta);
        p.tau = pr.number("tau", p.tau);
        p.dt = pr.number("dt", p.dt);
        p.m_outer = static_cast<std::size_t>(pr.integer("m_outer", static_cast<std::int64_t>(p.m_outer)));
        p.n_z = static_cast<std::size_t>(pr.integer("n_z", static_cast<std::int64_t>(p.n_z)));
        p.n_level = static_cast<std::size_t>(pr.integer("n_level", static_cast<std::int64_t>(p.n_level)));
        p.n_pairs = static_cast<std::size_t>(pr.integer("n_pairs", static_cast<std::int64_t>(p.n_pairs)));
        p.n_endpoints =
            static_cast<std::size_t>(pr.integer("n_endpoints", static_cast<std::int64_t>(p.n_endpoints)));
        p.grid_nodes = static_cast<int>(pr.integer("grid_nodes", p.grid_nodes));
        p.gibbs_nodes = static_cast<int>(pr.integer("gibbs_nodes", p.gibbs_nodes));
        p.r_max = pr.number("r_max", p.r_max);
        p.bandwidth = pr.number_list("bandwidth", p.bandwidth);
        pr.finish(cfg.experiment);
        p.resolved = pr.resolved();
        return p;
    }
};

struct SpectrumParams {
    std::vector<double> sigmas{1.0, 100.0};
    // At beta = 1 the angular barrier is high enough that a mild rate
    // separation survives even for sigma = 1; the temperature below restores
    // the regime where radial relaxation interleaves with the hopping rates.
    double beta = 0.6, tau = 0.1, dt = 1e-3;
    int grid_k = 48;
    std::size_t samples_per_cell = 60;
    int k_eigs = 10, cluster_size = 5;
    double box_half = 0.0; // 0 = grown automatically for soft radial confinement
    json resolved;

    // The default working box is [-2,2]^2; for weak confinement the stationary
    // density has real mass beyond r = 2 and cutting it there biases the
    // radial relaxation rate, so the box grows with the radial width.
    double box_half_for(double sigma) const {
        if (box_half > 0.0) return box_half;
        return std::max(2.0, 1.0 + 3.5 / std::sqrt(beta * sigma));
    }

    static SpectrumParams read(const ExperimentConfig& cfg) {
        SpectrumParams p;
        ParamReader pr(cfg.parameters);
        p.sigmas = pr.number_list("sigmas", p.sigmas);
        p.beta = pr.number("beta", p.beta);
        p.tau = pr.number("tau", p.tau);
        p.dt = pr.number("dt", p.dt);
        p.grid_k = static_cast<int>(pr.integer("grid_k", p.grid_k));
        p.samples_per_cell =
            static_cast<std::size_t>(pr.integer("samples_per_cell", static_cast<std::int64_t>(p.samples_per_cell)));
        p.k_eigs = static_cast<int>(pr.integer("k_eigs", p.k_eigs));
        p.cluster_size = static_cast<int>(pr.integer("cluster_size", p.cluster_size));
        p.box_half = pr.number("box_half", p.box_half);
        pr.finish(cfg.experiment);
        p.resolved = pr.resolved();
        return p;
    }
};

struct OracleParams {
    int n_chains = 120, min_states = 6, max_states = 20, max_labels = 5;
    std::vector<double> eps_list{1e-3, 3.16e-3, 1e-2, 3.16e-2, 1e-1};
    json resolved;

    static OracleParams read(const ExperimentConfig& cfg) {
        OracleParams p;
        ParamReader pr(cfg.parameters);
        p.n_chains = static_cast<int>(pr.integer("n_chains", p.n_chains));
        p.min_states = static_cast<int>(pr.integer("min_states", p.min_states));
        p.max_states = static_cast<int>(pr.integer("max_states", p.max_states));
        p.max_labels = static_cast<int>(pr.integer("max_labels", p.max_labels));
        p.eps_list = pr.number_list("eps_list", p.eps_list);
        pr.finish(cfg.experiment);
        p.resolved = pr.resolved();
        return p;
    }
};

/// Schema-only pass: parses the parameters of the selected experiment and
/// throws a config_error listing every offending key. Performs no computation.
inline void validate_parameters(const ExperimentConfig& cfg) {
    if (cfg.experiment == "lumpability-decay")
        DecayParams::read(cfg);
    else if (cfg.experiment == "loss-landscape")
        LandscapeParams::read(cfg);
    else if (cfg.experiment == "variance-study")
        VarianceParams::read(cfg);
    else if (cfg.experiment == "mc-error")
        McErrorParams::read(cfg);
    else if (cfg.experiment == "circular-loss")
        CircularParams::read(cfg);
    else if (cfg.experiment == "spectrum")
        SpectrumParams::read(cfg);
    else if (cfg.experiment == "oracle-suite")
        OracleParams::read(cfg);
    else
        throw config_error("unknown experiment '" + cfg.experiment + "'");
}

// ---------------------------------------------------------------------------
// lumpability-decay
// ---------------------------------------------------------------------------

struct DecayCurve {
    int n = 0;
    double tau = 0.0;
    std::vector<double> sigmas;
    std::vector<double> distances;
    double fitted_slope = 0.0; // log(distance) vs sigma^2, over sigma >= fit_from_sigma
    bool strictly_decreasing = true;
};

struct LumpabilityDecaySummary {
    std::vector<DecayCurve> curves;
    json resolved;
};

inline LumpabilityDecaySummary run_lumpability_decay(const ExperimentConfig& cfg,
                                                     const OutputSink& sink) {
    const DecayParams p = DecayParams::read(cfg);
    CsvBuilder csv("n,tau,sigma,distance");
    LumpabilityDecaySummary out;
    out.resolved = p.resolved;
    for (double nd : p.n_values) {
        const int n = static_cast<int>(nd);
        for (double tau : p.taus) {
            DecayCurve curve;
            curve.n = n;
            curve.tau = tau;
            for (double s = p.sigma_min; s <= p.sigma_max + 1e-12; s += p.sigma_step) {
                TorusKernelSpec spec{n, tau, SigmaParam::finite(s)};
                LumpabilityOptions opts;
                opts.nodes_per_axis = p.nodes_per_axis;
                const double d = lumpability_distance(spec, opts);
                curve.sigmas.push_back(s);
                curve.distances.push_back(d);
                csv.row({std::to_string(n), fmt_g(tau), fmt_g(s), fmt_g(d)});
            }
            for (std::size_t i = 0; i + 1 < curve.distances.size(); ++i)
                curve.strictly_decreasing =
                    curve.strictly_decreasing && curve.distances[i + 1] < curve.distances[i];
            std::vector<double> xs, ys;
            for (std::size_t i = 0; i < curve.sigmas.size(); ++i) {
                if (curve.sigmas[i] >= p.fit_from_sigma - 1e-12 && curve.distances[i] > 0.0) {
                    xs.push_back(curve.sigmas[i] * curve.sigmas[i]);
                    ys.push_back(std::log(curve.distances[i]));
                }
            }
            curve.fitted_slope = fit_line(xs, ys).slope;
            out.curves.push_back(std::move(curve));
        }
    }
    sink.write("lumpability_decay.csv", csv.str());
    return out;
}

// ---------------------------------------------------------------------------
// loss-landscape
// ---------------------------------------------------------------------------

struct LandscapePoint {
    double alpha = 0.0;
    LossEstimate estimate;
};

struct LandscapeCurve {
    SigmaParam sigma = SigmaParam::infinity();
    std::vector<LandscapePoint> points;
    double argmin_alpha = 0.0;
    double argmax_alpha = 0.0;
};

struct LossLandscapeSummary {
    std::vector<LandscapeCurve> curves;
    json resolved;
};

inline LossLandscapeSummary run_loss_landscape(const ExperimentConfig& cfg,
                                               const OutputSink& sink) {
    const LandscapeParams p = LandscapeParams::read(cfg);
    LossQuadConfig quad;
    quad.m_outer = p.m_outer;
    quad.n_z = p.n_z;
    quad.n_level = p.n_level;
    quad.n_pairs = p.n_pairs;
    quad.threads = cfg.threads;

    const StationarySampler sampler = uniform_box_sampler(Box::cube(2, -pi, pi));
    CsvBuilder csv(loss_csv_header());
    LossLandscapeSummary out;
    out.resolved = p.resolved;
    for (const SigmaParam& sigma : p.sigmas) {
        const TorusKernel kernel(TorusKernelSpec{2, p.tau, sigma});
        const TransitionAccess access = make_torus_access(kernel, p.grid_nodes);
        LandscapeCurve curve;
        curve.sigma = sigma;
        for (int i = 0; i < p.alpha_count; ++i) {
            const double alpha =
                -pi / 2.0 + pi * static_cast<double>(i) / static_cast<double>(p.alpha_count - 1);
            const ReactionCoordinate rc = linear_rc_alpha(alpha);
            LossQuadConfig q = quad;
            q.seed = derive_seed(cfg.seed, {0x6c616e64ULL, static_cast<std::uint64_t>(i)});
            const LossEstimate est = loss_deflat(rc, access, sampler, q);
            csv.raw_row(loss_csv_row(rc.id, alpha, sigma.str(), p.tau, est.m, est, cfg.seed));
            curve.points.push_back({alpha, est});
        }
        const auto cmp = [](const LandscapePoint& a, const LandscapePoint& b) {
            return a.estimate.value < b.estimate.value;
        };
        curve.argmin_alpha = std::min_element(curve.points.begin(), curve.points.end(), cmp)->alpha;
        curve.argmax_alpha = std::max_element(curve.points.begin(), curve.points.end(), cmp)->alpha;
        out.curves.push_back(std::move(curve));
    }
    sink.write("loss_landscape.csv", csv.str());
    return out;
}

// ---------------------------------------------------------------------------
// variance-study
// ---------------------------------------------------------------------------

struct VariancePoint {
    std::string rc_id;
    SigmaParam sigma = SigmaParam::infinity();
    LossEstimate estimate;
    VarianceReport report;
};

struct VarianceStudySummary {
    std::vector<VariancePoint> points; // rc in {sum2, sum3} x sigma grid
    std::vector<double> constancy_x2;
    std::vector<double> constancy_f; // f along the fast coordinate at fixed slow coordinate
    double constancy_cv = 0.0;
    json resolved;
};

inline VarianceStudySummary run_variance_study(const ExperimentConfig& cfg,
                                               const OutputSink& sink) {
    const VarianceParams p = VarianceParams::read(cfg);
    LossQuadConfig quad;
    quad.m_outer = p.m_outer;
    quad.n_z = p.n_z;
    quad.n_level = p.n_level;
    quad.n_pairs = p.n_pairs;
    quad.threads = cfg.threads;
    // the raw conditioned level measure is the object whose variance carries
    // the dimension comparison; the probability-normalized variant reverses it
    quad.weight_levels_by_mass = true;

    VarianceStudySummary out;
    out.resolved = p.resolved;
    CsvBuilder csv(loss_csv_header());
    for (int n = 2; n <= 3; ++n) {
        const ReactionCoordinate rc = linear_rc_sum(n);
        const StationarySampler sampler = uniform_box_sampler(Box::cube(n, -pi, pi));
        for (const SigmaParam& sigma : p.sigmas) {
            const TorusKernel kernel(TorusKernelSpec{n, p.tau, sigma});
            const TransitionAccess access = make_torus_access(kernel);
            LossQuadConfig q = quad;
            // a seed shared across sigma values pairs the draws, so the
            // variance trend in sigma is not washed out by resampling noise
            q.seed = derive_seed(cfg.seed, {0x76617273ULL, static_cast<std::uint64_t>(n)});
            VariancePoint pt;
            pt.rc_id = rc.id;
            pt.sigma = sigma;
            // two runs with shared start points and independent level draws:
            // their cross-covariance is the integrand variance without the
            // inner sampling noise
            q.inner_stream = 1;
            pt.estimate = loss_deflat(rc, access, sampler, q);
            q.inner_stream = 2;
            const LossEstimate second = loss_deflat(rc, access, sampler, q);
            pt.report = paired_variance_of_f(pt.estimate, second);
            csv.raw_row(rc.id + "," + fmt_g(static_cast<double>(n)) + "," + sigma.str() + "," +
                        fmt_g(p.tau) + "," + std::to_string(pt.estimate.m) + "," +
                        fmt_g(0.5 * (pt.estimate.value + second.value)) + "," +
                        fmt_g(pt.estimate.std_error) + "," + fmt_g(pt.report.variance) + "," +
                        fmt_g(pt.report.relative) + "," + std::to_string(cfg.seed));
            out.points.push_back(std::move(pt));
        }
    }
    sink.write("variance_study.csv", csv.str());

    // constancy of f along the fast coordinate for the limit kernel
    {
        const TorusKernel kernel(TorusKernelSpec{2, p.tau, SigmaParam::infinity()});
        const TransitionAccess access = make_torus_access(kernel);
        const ReactionCoordinate rc = linear_rc_sum(2);
        LossQuadConfig q = quad;
        q.n_pairs = static_cast<std::size_t>(p.constancy_n_pairs);
        q.n_level = static_cast<std::size_t>(p.constancy_n_level);
        CsvBuilder ccsv("x1,x2,f");
        for (int i = 0; i < p.constancy_count; ++i) {
            const double x2 = -pi + two_pi * (i + 0.5) / static_cast<double>(p.constancy_count);
            RngStream rng =
                RngStream::from_path(cfg.seed, {0x636f6e73ULL, static_cast<std::uint64_t>(i)});
            const double f = integrand_f({p.constancy_x1, x2}, rc, access, q, rng);
            out.constancy_x2.push_back(x2);
            out.constancy_f.push_back(f);
            ccsv.row({fmt_g(p.constancy_x1), fmt_g(x2), fmt_g(f)});
        }
        const double m = mean(out.constancy_f);
        out.constancy_cv = m > 0.0 ? std::sqrt(sample_variance(out.constancy_f)) / m : 0.0;
        sink.write("integrand_constancy.csv", ccsv.str());
    }
    return out;
}

// ---------------------------------------------------------------------------
// mc-error
// ---------------------------------------------------------------------------

struct McErrorSummary {
    std::vector<SigmaParam> sigmas;
    std::vector<McErrorCurve> curves; // parallel to sigmas
    std::vector<double> slopes;       // log-log slope per sigma
    json resolved;
    std::vector<std::string> notes;
};

inline McErrorSummary run_mc_error(const ExperimentConfig& cfg, const OutputSink& sink) {
    const McErrorParams p = McErrorParams::read(cfg);
    LossQuadConfig inner;
    inner.n_z = p.n_z;
    inner.n_level = p.n_level;
    inner.n_pairs = p.n_pairs;
    inner.threads = cfg.threads;
    // same integrand convention as the variance study: the raw conditioned
    // level measure is what carries the kernel contrast
    inner.weight_levels_by_mass = true;

    std::vector<std::size_t> m_list;
    for (double m : p.m_list) m_list.push_back(static_cast<std::size_t>(m));
    const ReactionCoordinate rc = linear_rc_sum(2);
    const StationarySampler sampler = uniform_box_sampler(Box::cube(2, -pi, pi));

    McErrorSummary out;
    out.resolved = p.resolved;
    CsvBuilder csv("sigma,M,rel_expected_error,var_over_sqrt_m,std_over_sqrt_m,n_trials,seed");
    for (const SigmaParam& sigma : p.sigmas) {
        const TorusKernel kernel(TorusKernelSpec{2, p.tau, sigma});
        const TransitionAccess access = make_torus_access(kernel);
        // the seed is shared across sigma values on purpose: trials pair up
        McErrorCurve curve = mc_error_curve(rc, access, sampler, m_list, p.n_trials, cfg.seed,
                                            inner, p.reference_factor);
        std::vector<double> xs, ys;
        for (const McErrorPoint& pt : curve.points) {
            csv.row({sigma.str(), std::to_string(pt.m), fmt_g(pt.rel_expected_error),
                     fmt_g(pt.var_over_sqrt_m), fmt_g(pt.std_over_sqrt_m),
                     std::to_string(p.n_trials), std::to_string(cfg.seed)});
            xs.push_back(static_cast<double>(pt.m));
            ys.push_back(pt.rel_expected_error);
        }
        out.slopes.push_back(fit_loglog(xs, ys).slope);
        out.notes.push_back("sigma=" + sigma.str() +
                            ": reference is itself Monte Carlo with relative residual " +
                            fmt_g(curve.reference_std_error / curve.reference) +
                            " at M_ref=" + std::to_string(curve.reference_m));
        out.sigmas.push_back(sigma);
        out.curves.push_back(std::move(curve));
    }
    sink.write("mc_error.csv", csv.str());
    return out;
}

// ---------------------------------------------------------------------------
// circular-loss
// ---------------------------------------------------------------------------

struct CircularLossPoint {
    double sigma_radial = 0.0;
    LossEstimate phi;
    LossEstimate radius;
};

struct CircularLossSummary {
    std::vector<CircularLossPoint> points;
    json resolved;
};

inline CircularLossSummary run_circular_loss(const ExperimentConfig& cfg, const OutputSink& sink) {
    const CircularParams p = CircularParams::read(cfg);
    SdeConfig sde;
    sde.beta = p.beta;
    sde.tau = p.tau;
    sde.dt = p.dt;
    LossQuadConfig quad;
    quad.m_outer = p.m_outer;
    quad.n_z = p.n_z;
    quad.n_level = p.n_level;
    quad.n_pairs = p.n_pairs;
    quad.threads = cfg.threads;
    KdeAccessConfig kde_cfg;
    kde_cfg.n_endpoints = p.n_endpoints;
    kde_cfg.grid_nodes = p.grid_nodes;
    kde_cfg.threads = cfg.threads;
    if (!p.bandwidth.empty()) kde_cfg.bandwidth = Vec(p.bandwidth.begin(), p.bandwidth.end());

    CircularLossSummary out;
    out.resolved = p.resolved;
    CsvBuilder csv(loss_csv_header());

    // One smoothing scale for the whole experiment: a per-system bandwidth
    // would change the estimator's discrimination floor along the sigma sweep
    // and distort the trends the sweep is meant to show.
    if (!kde_cfg.bandwidth) {
        SdeConfig pilot_sde = sde;
        pilot_sde.seed = derive_seed(cfg.seed, {0x63706c74ULL});
        kde_cfg.bandwidth = pilot_bandwidth(circular_potential({p.sigmas.front()}), pilot_sde,
                                            kde_cfg.n_endpoints, {1.0, 0.0});
    }

    for (double sig : p.sigmas) {
        const Potential pot = circular_potential({sig});
        const GibbsDensity gibbs(pot, p.beta, p.gibbs_nodes);
        SdeConfig sde_s = sde;
        sde_s.seed = derive_seed(cfg.seed, {0x63697263ULL, static_cast<std::uint64_t>(sig * 1000)});
        const TransitionAccess access = make_kde_access(pot, sde_s, gibbs, kde_cfg);

        // The dynamics is reversible, so the pairwise distance between the
        // stationary-normalized observables of two level points equals the
        // plain L1 distance between the forward densities started there; the
        // density form never divides a kernel-estimate tail by a vanishing
        // stationary value.
        CircularLossPoint pt;
        pt.sigma_radial = sig;
        {
            const ReactionCoordinate rc = with_weighted_sampler(polar_rc_angle(), gibbs, p.r_max);
            LossQuadConfig q = quad;
            q.seed = derive_seed(sde_s.seed, {0x706869ULL});
            pt.phi = loss_lump_differential(rc, access, q);
            csv.raw_row(loss_csv_row(rc.id, sig, fmt_g(sig), p.tau, pt.phi.m, pt.phi, cfg.seed));
        }
        {
            const ReactionCoordinate rc =
                with_weighted_sampler(polar_rc_radius(p.r_max), gibbs, p.r_max);
            LossQuadConfig q = quad;
            q.seed = derive_seed(sde_s.seed, {0x726164ULL});
            pt.radius = loss_lump_differential(rc, access, q);
            csv.raw_row(
                loss_csv_row(rc.id, sig, fmt_g(sig), p.tau, pt.radius.m, pt.radius, cfg.seed));
        }
        out.points.push_back(std::move(pt));
    }
    sink.write("circular_loss.csv", csv.str());
    return out;
}

// ---------------------------------------------------------------------------
// spectrum
// ---------------------------------------------------------------------------

struct SpectrumResult {
    double sigma_radial = 0.0;
    Spectrum spectrum;
    GapReport gaps;
    double cluster_statistic = 0.0; // implied-rate ratio across the cluster edge
    std::size_t kept_cells = 0;
    std::size_t escaped = 0;
    std::vector<Vec> centers;       // retained cell centers, aligned with eigenvector rows
    Eigen::VectorXd weights;
};

struct SpectrumSummary {
    std::vector<SpectrumResult> results;
    json resolved;
};

inline SpectrumSummary run_spectrum(const ExperimentConfig& cfg, const OutputSink& sink) {
    const SpectrumParams p = SpectrumParams::read(cfg);
    SdeConfig sde;
    sde.beta = p.beta;
    sde.tau = p.tau;
    sde.dt = p.dt;
    UlamOptions ulam;
    ulam.grid_k = p.grid_k;
    ulam.samples_per_cell = p.samples_per_cell;
    ulam.threads = cfg.threads;

    SpectrumSummary out;
    out.resolved = p.resolved;
    for (double sig : p.sigmas) {
        const Potential pot = circular_potential({sig}, p.box_half_for(sig));
        const std::uint64_t seed =
            derive_seed(cfg.seed, {0x73706563ULL, static_cast<std::uint64_t>(sig * 1000)});
        const UlamModel model = ulam_estimate(pot, sde, ulam, seed);
        SpectrumResult res;
        res.sigma_radial = sig;
        res.spectrum = leading_spectrum(model, p.k_eigs);
        res.gaps = gap_report(res.spectrum);
        res.cluster_statistic = cluster_gap_statistic(res.spectrum, p.cluster_size);
        res.kept_cells = model.kept_cells.size();
        res.escaped = model.escaped;
        for (int c = 0; c < static_cast<int>(model.kept_cells.size()); ++c)
            res.centers.push_back(model.cell_center(c));
        res.weights = model.stationary_weights;
        const std::string tag = fmt_g(sig, 6);
        sink.write("spectrum_sigma" + tag + ".csv", spectrum_to_csv(res.spectrum));
        sink.write("eigenvectors_sigma" + tag + ".csv", eigenvectors_to_csv(model, res.spectrum));
        {
            CsvBuilder gcsv("index,rate_ratio,eigenvalue_gap");
            for (std::size_t i = 0; i < res.gaps.rate_ratios.size(); ++i)
                gcsv.row({std::to_string(i), fmt_g(res.gaps.rate_ratios[i]),
                          fmt_g(res.gaps.eigenvalue_gaps[i])});
            sink.write("gaps_sigma" + tag + ".csv", gcsv.str());
        }
        out.results.push_back(std::move(res));
    }
    return out;
}

// ---------------------------------------------------------------------------
// oracle-suite
// ---------------------------------------------------------------------------

struct OracleSuiteSummary {
    int n_chains = 0;
    double max_equivalence_diff = 0.0; // |Lhat_L - Lhat_D| over reversible chains
    double max_transform_diff = 0.0;   // |Lhat_D - transform-built Lhat_D|
    int sandwich_violations = 0;       // chains violating L_hat <= L_tilde <= 2 L_hat
    double block_identity_diff = 0.0;  // variance identity on a block-constant chain
    double sweep_slope = 0.0;          // log-log slope of |Var f - Var f_L| vs perturbation
    json resolved;
};

inline OracleSuiteSummary run_oracle_suite(const ExperimentConfig& cfg, const OutputSink& sink) {
    const OracleParams p = OracleParams::read(cfg);
    OracleSuiteSummary out;
    out.resolved = p.resolved;
    out.n_chains = p.n_chains;
    RngStream rng = RngStream::from_path(cfg.seed, {0x6f7261636cULL});

    CsvBuilder csv("chain_id,n_states,n_labels,lt_l,lt_d,lh_l,lh_d,equiv_diff,sandwich_ok");
    const double tol = 1e-12;
    for (int c = 0; c < p.n_chains; ++c) {
        const int ns =
            p.min_states + static_cast<int>(rng.uniform_index(p.max_states - p.min_states + 1));
        const int nl = 2 + static_cast<int>(rng.uniform_index(std::min(p.max_labels, ns) - 1));
        const DiscreteChain chain = random_reversible_chain(ns, nl, rng);
        const ExactLosses ex = exact_losses(chain);
        const double equiv = std::abs(ex.lump_constructive - ex.deflat_constructive);
        const double transform =
            std::abs(deflat_constructive_from_transform(chain) - ex.deflat_constructive);
        const bool sandwich = ex.lump_constructive <= ex.lump_differential + tol &&
                              ex.lump_differential <= 2.0 * ex.lump_constructive + tol &&
                              ex.deflat_constructive <= ex.deflat_differential + tol &&
                              ex.deflat_differential <= 2.0 * ex.deflat_constructive + tol;
        out.max_equivalence_diff = std::max(out.max_equivalence_diff, equiv);
        out.max_transform_diff = std::max(out.max_transform_diff, transform);
        if (!sandwich) ++out.sandwich_violations;
        csv.row({std::to_string(c), std::to_string(ns), std::to_string(nl),
                 fmt_g(ex.lump_differential, 17), fmt_g(ex.deflat_differential, 17),
                 fmt_g(ex.lump_constructive, 17), fmt_g(ex.deflat_constructive, 17),
                 fmt_g(equiv, 6), sandwich ? "1" : "0"});
    }
    sink.write("oracle_suite.csv", csv.str());

    // variance identity on an exactly lumpable chain; the candidate coordinate
    // inside the integrand deliberately differs from the lumping classes,
    // otherwise both sides are trivially zero
    {
        Eigen::MatrixXd agg_p;
        Eigen::VectorXd agg_pi;
        random_reversible_matrix(3, rng, agg_p, agg_pi);
        DiscreteChain block = block_constant_chain(agg_p, agg_pi, {4, 3, 5}, rng);
        const std::vector<int> lumping = block.labels;
        block.labels = random_surjective_labels(block.n_states, 4, rng);
        block.n_labels = 4;
        const ExactIntegrand full = exact_f_and_variance(block);
        const EffectiveIntegrand eff = effective_f_and_variance(block, lumping, 3);
        out.block_identity_diff = std::abs(full.variance - eff.variance);
    }

    // linear response of the variance mismatch to a reversible perturbation
    {
        Eigen::MatrixXd agg_p;
        Eigen::VectorXd agg_pi;
        random_reversible_matrix(4, rng, agg_p, agg_pi);
        DiscreteChain base = block_constant_chain(agg_p, agg_pi, {3, 4, 3, 4}, rng);
        const std::vector<int> lumping = base.labels;
        const int n_lumping = 4;
        base.labels = random_surjective_labels(base.n_states, 3, rng);
        base.n_labels = 3;
        CsvBuilder scsv("eps,var_f,var_f_effective,abs_diff");
        std::vector<double> xs, ys;
        RngStream perturb_rng = RngStream::from_path(cfg.seed, {0x70657274ULL});
        Eigen::MatrixXd delta(base.n_states, base.n_states);
        for (int i = 0; i < base.n_states; ++i)
            for (int j = i; j < base.n_states; ++j)
                delta(i, j) = delta(j, i) = perturb_rng.uniform(0.0, 1.0);
        for (double eps : p.eps_list) {
            DiscreteChain chain = base;
            Eigen::MatrixXd f = chain.pi.asDiagonal() * chain.P;
            f = 0.5 * (f + f.transpose().eval());
            f = (1.0 - eps) * f / f.sum() + eps * delta / delta.sum();
            const Eigen::VectorXd d = f.rowwise().sum();
            chain.P = d.cwiseInverse().asDiagonal() * f;
            chain.pi = d / d.sum();
            const ExactIntegrand full = exact_f_and_variance(chain);
            const EffectiveIntegrand eff = effective_f_and_variance(chain, lumping, n_lumping);
            const double diff = std::abs(full.variance - eff.variance);
            scsv.row(
                {fmt_g(eps), fmt_g(full.variance, 17), fmt_g(eff.variance, 17), fmt_g(diff, 17)});
            if (diff > 0.0) {
                xs.push_back(eps);
                ys.push_back(diff);
            }
        }
        out.sweep_slope = fit_loglog(xs, ys).slope;
        sink.write("fvariance_sweep.csv", scsv.str());
    }
    return out;
}

// ---------------------------------------------------------------------------
// dispatch
// ---------------------------------------------------------------------------

/// Runs an experiment end to end, writing CSVs plus a manifest. Returns a
/// short console summary.
inline std::string run_experiment(const ExperimentConfig& cfg, const OutputSink& sink) {
    const auto t0 = std::chrono::steady_clock::now();
    json resolved;
    std::vector<std::string> notes;
    std::string brief;

    if (cfg.experiment == "lumpability-decay") {
        const auto s = run_lumpability_decay(cfg, sink);
        resolved = s.resolved;
        for (const auto& c : s.curves)
            brief += "n=" + std::to_string(c.n) + " tau=" + fmt_g(c.tau) +
                     ": slope=" + fmt_g(c.fitted_slope, 4) +
                     (c.strictly_decreasing ? " (monotone)" : " (NOT monotone)") + "\n";
    } else if (cfg.experiment == "loss-landscape") {
        const auto s = run_loss_landscape(cfg, sink);
        resolved = s.resolved;
        for (const auto& c : s.curves)
            brief += "sigma=" + c.sigma.str() + ": argmin=" + fmt_g(c.argmin_alpha, 4) +
                     " argmax=" + fmt_g(c.argmax_alpha, 4) + "\n";
    } else if (cfg.experiment == "variance-study") {
        const auto s = run_variance_study(cfg, sink);
        resolved = s.resolved;
        for (const auto& pt : s.points)
            brief += pt.rc_id + " sigma=" + pt.sigma.str() +
                     ": Var[f]=" + fmt_g(pt.report.variance, 4) + "\n";
        brief += "constancy cv=" + fmt_g(s.constancy_cv, 4) + "\n";
    } else if (cfg.experiment == "mc-error") {
        const auto s = run_mc_error(cfg, sink);
        resolved = s.resolved;
        notes = s.notes;
        for (std::size_t i = 0; i < s.sigmas.size(); ++i)
            brief += "sigma=" + s.sigmas[i].str() + ": slope=" + fmt_g(s.slopes[i], 4) + "\n";
    } else if (cfg.experiment == "circular-loss") {
        const auto s = run_circular_loss(cfg, sink);
        resolved = s.resolved;
        for (const auto& pt : s.points)
            brief += "sigma=" + fmt_g(pt.sigma_radial) + ": loss(phi)=" + fmt_g(pt.phi.value, 4) +
                     " loss(r)=" + fmt_g(pt.radius.value, 4) + "\n";
    } else if (cfg.experiment == "spectrum") {
        const auto s = run_spectrum(cfg, sink);
        resolved = s.resolved;
        for (const auto& r : s.results)
            brief += "sigma=" + fmt_g(r.sigma_radial) +
                     ": cluster_stat=" + fmt_g(r.cluster_statistic, 4) +
                     " largest_gap_index=" + std::to_string(r.gaps.largest_gap_index) + "\n";
    } else if (cfg.experiment == "oracle-suite") {
        const auto s = run_oracle_suite(cfg, sink);
        resolved = s.resolved;
        brief += "chains=" + std::to_string(s.n_chains) +
                 " max_equiv_diff=" + fmt_g(s.max_equivalence_diff, 3) +
                 " sandwich_violations=" + std::to_string(s.sandwich_violations) +
                 " sweep_slope=" + fmt_g(s.sweep_slope, 4) + "\n";
    } else {
        throw config_error("unknown experiment '" + cfg.experiment + "'");
    }

    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_manifest(sink, cfg, resolved, secs, notes);
    return brief;
}

} // namespace rcq::experiments
