#pragma once

// Online execution: plan on one model, act in another.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "cpomdp/despot.hpp"
#include "cpomdp/ucpomdp.hpp"

namespace cpomdp::planner {

enum class Outcome { Goal, Collision, Timeout };

std::string_view to_string(Outcome outcome) noexcept;

struct EpisodeStep {
    int step = 0;
    StateId belief_state = 0;  // mode of the planning belief
    ActionId action = 0;
    double lower = 0.0;
    double upper = 0.0;
    StateId next_state = 0;
    ObservationId observation = 0;
    double reward = 0.0;
    double discounted_return = 0.0;  // cumulative, including this step
    bool belief_reset = false;
    std::uint64_t trials = 0;
};

struct EpisodeResult {
    std::uint64_t seed = 0;
    double total_discounted_reward = 0.0;
    Outcome outcome = Outcome::Timeout;
    int steps = 0;
    int belief_resets = 0;
    std::vector<ActionId> actions;
    std::vector<EpisodeStep> trace;
};

/// Precomputes the dynamics of both models once so that many episodes can
/// share them. Safe to call run() from several threads.
class EpisodeRunner {
public:
    EpisodeRunner(const pomdp::UcPomdpModel& plan_model, const pomdp::UcPomdpModel& exec_model,
                  const PlannerConfig& config, int max_steps);

    EpisodeResult run(std::uint64_t seed) const;

    const PlannerConfig& config() const noexcept { return config_; }
    int max_steps() const noexcept { return max_steps_; }

private:
    const pomdp::UcPomdpModel* plan_;
    const pomdp::UcPomdpModel* exec_;
    PlannerConfig config_;
    int max_steps_;
    pomdp::DynamicsTable plan_dynamics_;
};

/// The executing world samples U, then dS from its own mechanism given the
/// chosen action. Seeds of the per-step searches derive from `seed`.
EpisodeResult run_episode(const pomdp::UcPomdpModel& plan_model, const pomdp::UcPomdpModel& exec_model,
                          const PlannerConfig& config, int max_steps, std::uint64_t seed);

/// Recomputes the discounted return from the per-step rewards of a trace.
double replay_return(const std::vector<EpisodeStep>& trace, double discount);

/// CSV with header and one line per step.
std::string format_trace(const EpisodeResult& result, const pomdp::UcPomdpModel& model);

}  // namespace cpomdp::planner
