#include "cpomdp/episode.hpp"

#include <cstdio>
#include <sstream>

#include "cpomdp/error.hpp"

namespace cpomdp::planner {
namespace {

constexpr std::uint64_t kPlanTag = 0x706c616e;  // "plan"
constexpr std::uint64_t kExecTag = 0x65786563;  // "exec"

double exec_uniform(std::uint64_t seed, int step, int slot) {
    return unit_interval(mix_seed(mix_seed(seed, kExecTag), static_cast<std::uint64_t>(step) * 4 + slot));
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string quoted(const std::string& text) {
    return text.find(',') == std::string::npos ? text : '"' + text + '"';
}

}  // namespace

std::string_view to_string(Outcome outcome) noexcept {
    switch (outcome) {
        case Outcome::Goal: return "goal";
        case Outcome::Collision: return "collision";
        case Outcome::Timeout: return "timeout";
    }
    return "?";
}

EpisodeRunner::EpisodeRunner(const pomdp::UcPomdpModel& plan_model, const pomdp::UcPomdpModel& exec_model,
                             const PlannerConfig& config, int max_steps)
    : plan_(&plan_model),
      exec_(&exec_model),
      config_(config),
      max_steps_(max_steps),
      plan_dynamics_(plan_model, config.mode) {
    config_.validate();
    exec_model.validate();
    if (max_steps < 1) {
        throw UsageError("max_steps must be at least 1");
    }
    if (plan_model.total_states() != exec_model.total_states() ||
        plan_model.num_actions != exec_model.num_actions ||
        plan_model.num_observations != exec_model.num_observations) {
        throw UsageError("planning and execution models have different spaces");
    }
}

EpisodeResult EpisodeRunner::run(std::uint64_t seed) const {
    const pomdp::UcPomdpModel& exec = *exec_;
    const pomdp::UcPomdpModel& plan = *plan_;

    EpisodeResult result;
    result.seed = seed;

    StateId state = sample_categorical(exec.initial_belief, exec_uniform(seed, -1, 0));
    pomdp::Belief belief{plan.initial_belief};
    double discount_factor = 1.0;

    for (int t = 0; t < max_steps_ && !exec.is_terminal(state); ++t) {
        PlannerConfig step_config = config_;
        step_config.seed = mix_seed(mix_seed(seed, kPlanTag), static_cast<std::uint64_t>(t));
        const SearchResult sr = search(belief, plan, plan_dynamics_, step_config);
        const ActionId a = sr.action;

        const int u = sample_categorical(exec.confounder_prior.row(0), exec_uniform(seed, t, 0));
        const auto ds_row = exec.confounded[state]
                                ? exec.p_uc.row(static_cast<std::size_t>(a) * exec.confounder_arity() + u)
                                : exec.p_0.row(static_cast<std::size_t>(a));
        const int ds = sample_categorical(ds_row, exec_uniform(seed, t, 1));
        const StateId next = exec.successor[static_cast<std::size_t>(state) * exec.num_relative + ds];
        const ObservationId z =
            sample_categorical(exec.observation.row(static_cast<std::size_t>(next)), exec_uniform(seed, t, 2));
        const double r = exec.reward_entry(state, a, next);

        EpisodeStep step;
        step.step = t;
        step.belief_state = belief.mode();
        step.action = a;
        step.lower = sr.lower;
        step.upper = sr.upper;
        step.next_state = next;
        step.observation = z;
        step.reward = r;
        step.trials = sr.trials;
        result.total_discounted_reward += discount_factor * r;
        step.discounted_return = result.total_discounted_reward;
        discount_factor *= exec.discount;

        try {
            belief = pomdp::belief_update(plan_dynamics_, plan, belief, a, z);
        } catch (const InconsistentObservationError&) {
            belief = pomdp::Belief::point_mass(plan.total_states(), next);
            step.belief_reset = true;
            ++result.belief_resets;
        }

        result.actions.push_back(a);
        result.trace.push_back(step);
        state = next;
    }

    result.steps = static_cast<int>(result.trace.size());
    if (state == exec.goal_state()) {
        result.outcome = Outcome::Goal;
    } else if (state == exec.collided_state()) {
        result.outcome = Outcome::Collision;
    } else {
        result.outcome = Outcome::Timeout;
    }
    return result;
}

EpisodeResult run_episode(const pomdp::UcPomdpModel& plan_model, const pomdp::UcPomdpModel& exec_model,
                          const PlannerConfig& config, int max_steps, std::uint64_t seed) {
    return EpisodeRunner(plan_model, exec_model, config, max_steps).run(seed);
}

double replay_return(const std::vector<EpisodeStep>& trace, double discount) {
    double total = 0.0;
    double g = 1.0;
    for (const EpisodeStep& s : trace) {
        total += g * s.reward;
        g *= discount;
    }
    return total;
}

std::string format_trace(const EpisodeResult& result, const pomdp::UcPomdpModel& model) {
    std::ostringstream out;
    out << "step,belief_state,action,lower,upper,next_state,observation,reward,discounted_return\n";
    for (const EpisodeStep& s : result.trace) {
        out << s.step << ',' << quoted(model.state_names.at(s.belief_state)) << ','
            << model.action_names.at(s.action) << ',' << fmt(s.lower) << ',' << fmt(s.upper) << ','
            << quoted(model.state_names.at(s.next_state)) << ',' << quoted(model.observation_names.at(s.observation))
            << ',' << fmt(s.reward) << ',' << fmt(s.discounted_return) << '\n';
    }
    return out.str();
}

}  // namespace cpomdp::planner
