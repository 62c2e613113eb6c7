// cpomdp: learn, inspect and evaluate causal vs. observational planners on
// the confounded gridworld.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "cpomdp/error.hpp"
#include "cpomdp/experiment.hpp"

namespace {

using cpomdp::experiment::ExperimentConfig;

struct RawFlags {
    std::string mode = "interventional";
    std::string plan_model = "learned";
    long long budget_ms = -1;
    long long budget_trials = -1;
    std::string replay;
};

void add_shared_options(CLI::App& app, ExperimentConfig& cfg, RawFlags& raw) {
    app.add_option("--map", cfg.map_path, "Map file (default: built-in confounded map)");
    app.add_option("--mode", raw.mode, "Transition mode: interventional | observational")
        ->check(CLI::IsMember({"interventional", "observational"}));
    app.add_option("--plan-model", raw.plan_model, "Planning model: learned | truth")
        ->check(CLI::IsMember({"learned", "truth"}));
    app.add_option("--params", cfg.params_path, "Learned parameter file");
    app.add_option("--episodes", cfg.episodes, "Number of evaluation episodes");
    app.add_option("--steps", cfg.max_steps, "Maximum steps per episode");
    app.add_option("--scenarios", cfg.planner.scenarios, "Scenarios per search (K)");
    app.add_option("--depth", cfg.planner.depth, "Search depth (D)");
    app.add_option("--gamma", cfg.planner.discount, "Discount factor");
    app.add_option("--xi", cfg.planner.xi, "Target gap ratio");
    app.add_option("--lambda", cfg.planner.lambda, "Regularization constant");
    auto* ms = app.add_option("--budget-ms", raw.budget_ms, "Wall-clock budget per step in milliseconds");
    auto* trials = app.add_option("--budget-trials", raw.budget_trials, "Trial budget per step");
    ms->excludes(trials);
    app.add_option("--seed", cfg.seed, "Master seed");
    app.add_option("--out", cfg.out_dir, "Output directory");
    app.add_option("--dataset-n", cfg.dataset_n, "Dataset size for learning");
    app.add_option("--smoothing", cfg.smoothing, "Dirichlet smoothing constant");
    app.add_option("--threads", cfg.threads, "Worker threads for eval");
    app.add_flag("--write-dataset", cfg.write_dataset, "Also write dataset.csv during learn");
}

void finalize(ExperimentConfig& cfg, const RawFlags& raw) {
    cfg.planner.mode = cpomdp::pomdp::parse_mode(raw.mode);
    cfg.plan_model = cpomdp::experiment::parse_plan_model(raw.plan_model);
    if (raw.budget_ms >= 0) {
        cfg.planner.time_budget_ms = static_cast<double>(raw.budget_ms);
        cfg.planner.max_trials = UINT64_MAX;
    }
    if (raw.budget_trials >= 0) {
        cfg.planner.max_trials = static_cast<std::uint64_t>(raw.budget_trials);
        cfg.planner.time_budget_ms = 0.0;
    }
}

int run(int argc, char** argv) {
    CLI::App app{"Causal and observational DESPOT planning on the confounded gridworld"};
    app.set_config("--config", "", "Config file (TOML/INI); command-line flags take precedence");
    app.require_subcommand(1);
    app.fallthrough();

    ExperimentConfig cfg;
    RawFlags raw;
    add_shared_options(app, cfg, raw);

    auto* learn = app.add_subcommand("learn", "Generate data, fit parameters and report fit quality");
    auto* tables = app.add_subcommand("tables", "Dump confounded-region transition tables as CSV");
    auto* eval = app.add_subcommand("eval", "Run a batch of episodes and summarize rewards");
    auto* simulate = app.add_subcommand("simulate", "Run one episode and write its trace");
    simulate->add_option("--replay", raw.replay, "Stored trace to check against a fresh run");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : cpomdp::exit_code(cpomdp::ErrorCategory::Usage);
    }

    try {
        finalize(cfg, raw);
        if (learn->parsed()) {
            const auto report = cpomdp::experiment::run_learn(cfg);
            std::printf("n=%zu kl_full_transition=%.6g max_abs_error p_u=%.6g p_uc=%.6g p_0=%.6g region=%.6g\n",
                        report.params.n, report.kl, report.errors.p_u, report.errors.p_uc, report.errors.p_0,
                        report.region_error);
            std::printf("wrote %s/params.txt and %s/report.csv\n", cfg.out_dir.c_str(), cfg.out_dir.c_str());
        } else if (tables->parsed()) {
            std::cout << cpomdp::experiment::run_tables(cfg);
        } else if (eval->parsed()) {
            const auto s = cpomdp::experiment::run_eval(cfg);
            std::printf("episodes=%zu mean=%.4f stderr=%.4f goal=%d collision=%d timeout=%d\n", s.episodes.size(),
                        s.mean, s.std_error, s.goals, s.collisions, s.timeouts);
        } else if (simulate->parsed()) {
            std::string stored;
            if (!raw.replay.empty()) {
                std::ifstream in(raw.replay);
                if (!in) {
                    throw cpomdp::IoError("cannot open '" + raw.replay + "'");
                }
                std::ostringstream buf;
                buf << in.rdbuf();
                stored = buf.str();
            }
            const auto r = cpomdp::experiment::run_simulate(cfg);
            std::cout << r.trace;
            std::printf("outcome=%s steps=%d reward=%.4f trace=%s\n",
                        std::string(cpomdp::planner::to_string(r.episode.outcome)).c_str(), r.episode.steps,
                        r.episode.total_discounted_reward, r.trace_path.c_str());
            if (!raw.replay.empty()) {
                const std::string diff = cpomdp::experiment::compare_traces(stored, r.trace);
                if (!diff.empty()) {
                    throw cpomdp::UsageError("replay mismatch: " + diff);
                }
                std::printf("replay matches %s\n", raw.replay.c_str());
            }
        }
    } catch (const cpomdp::Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", cpomdp::category_name(e.category()), e.what());
        return cpomdp::exit_code(e.category());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error [internal]: %s\n", e.what());
        return 1;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) { return run(argc, argv); }
