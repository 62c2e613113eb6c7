#pragma once

// Pipeline driver behind the command-line tool: learning, table dumps,
// batch evaluation and single-episode traces.

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cpomdp/despot.hpp"
#include "cpomdp/episode.hpp"
#include "cpomdp/gridworld.hpp"
#include "cpomdp/learning.hpp"

namespace cpomdp::experiment {

enum class PlanModelSource { Learned, Truth };

std::string_view to_string(PlanModelSource source) noexcept;
PlanModelSource parse_plan_model(std::string_view text);

struct ExperimentConfig {
    std::string map_path;  // empty selects the built-in map
    planner::PlannerConfig planner;
    PlanModelSource plan_model = PlanModelSource::Learned;
    std::string params_path;
    std::size_t dataset_n = 100000;
    double smoothing = learning::kDefaultSmoothing;
    int episodes = 50;
    int max_steps = 15;
    std::uint64_t seed = 1;
    std::string out_dir = "out";
    bool write_dataset = false;
    int threads = 1;

    /// Throws UsageError.
    void validate() const;
};

grid::GridMap load_configured_map(const ExperimentConfig& config);

/// Seed of episode i under a master seed.
std::uint64_t episode_seed(std::uint64_t master, int index) noexcept;

struct LearnReport {
    learning::LearnedParams params;
    double kl = 0.0;
    learning::ParamErrors errors;
    double region_error = 0.0;  // worst entry over the confounded-region transition tables
};

/// Fits from a freshly generated dataset; writes params.txt, report.csv and
/// optionally dataset.csv under out_dir.
LearnReport run_learn(const ExperimentConfig& config);

/// Learning without file output.
LearnReport learn_in_memory(const pomdp::UcPomdpModel& truth, std::size_t n, double smoothing, std::uint64_t seed);

/// The planning model: ground truth, params from --params, or an on-the-fly fit.
pomdp::UcPomdpModel planning_model(const ExperimentConfig& config, const pomdp::UcPomdpModel& truth);

struct TableRow {
    std::string source;  // truth | learned
    pomdp::TransitionMode mode = pomdp::TransitionMode::Interventional;
    pomdp::StateId state = 0;
    pomdp::ActionId action = 0;
    int outcome = 0;  // dS category
    double probability = 0.0;
};

/// Relative-transition tables over the confounded region, both modes.
std::vector<TableRow> transition_tables(const pomdp::UcPomdpModel& model, const std::string& source);

/// Largest |a - b| between matching rows of two table dumps.
double max_table_difference(const std::vector<TableRow>& a, const std::vector<TableRow>& b);

std::string format_tables(const std::vector<TableRow>& rows, const pomdp::UcPomdpModel& model);

/// Writes tables.csv under out_dir and returns its contents.
std::string run_tables(const ExperimentConfig& config);

inline constexpr double kHistogramLow = -60.0;
inline constexpr double kHistogramHigh = 100.0;
inline constexpr double kHistogramWidth = 5.0;
inline constexpr int kHistogramBins = 32;

struct EvalSummary {
    std::vector<planner::EpisodeResult> episodes;
    double mean = 0.0;
    double std_error = 0.0;
    int goals = 0;
    int collisions = 0;
    int timeouts = 0;
    std::array<int, kHistogramBins> histogram{};
};

EvalSummary summarize(std::vector<planner::EpisodeResult> episodes);

/// Runs the episodes on the given models without touching the filesystem.
EvalSummary evaluate(const pomdp::UcPomdpModel& plan_model, const pomdp::UcPomdpModel& exec_model,
                     const planner::PlannerConfig& planner_config, int episodes, int max_steps,
                     std::uint64_t master_seed, int threads = 1);

std::string format_episodes(const EvalSummary& summary, const pomdp::UcPomdpModel& model);
std::string format_summary(const EvalSummary& summary);
std::string format_histogram(const EvalSummary& summary);

/// Writes episodes_, summary_ and histogram_ CSVs (suffixed by mode and plan
/// model) under out_dir.
EvalSummary run_eval(const ExperimentConfig& config);

struct SimulateResult {
    planner::EpisodeResult episode;
    std::string trace;
    std::string trace_path;
};

/// One episode with seed config.seed; writes trace_<mode>_<source>.csv.
SimulateResult run_simulate(const ExperimentConfig& config);

/// Compares a stored trace with a fresh run. Returns an empty string on a
/// match, otherwise a description of the first difference.
std::string compare_traces(const std::string& stored, const std::string& fresh);

}  // namespace cpomdp::experiment
