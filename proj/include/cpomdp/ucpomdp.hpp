#pragma once

// POMDP with an unobserved confounder U that drives both the agent's reactive
// action choice (inside the confounded region) and the relative state change.
// Transition probabilities come from queries on a per-state SCM, either as
// the observational P(S'|A=a,S) or the interventional P(S'|do(A=a),S).

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cpomdp/causal_model.hpp"
#include "cpomdp/random.hpp"

namespace cpomdp::pomdp {

using StateId = int;
using ActionId = int;
using ObservationId = int;

enum class TransitionMode { Observational, Interventional };

std::string_view to_string(TransitionMode mode) noexcept;
/// Accepts "observational" / "interventional". Throws UsageError otherwise.
TransitionMode parse_mode(std::string_view text);

/// Model-supplied knowledge for the planner's bound construction.
struct PlannerHints {
    std::vector<ActionId> rollout_action;  // per non-terminal state; empty means action 0
    std::vector<ActionId> observation_action;  // per observation; empty means action 0
    std::vector<int> goal_distance;        // lower bound on steps to goal; empty if unknown
};

/// Non-terminal states are 0..num_states-1, followed by the absorbing
/// goal-reached and collided states.
struct UcPomdpModel {
    std::string name;
    int num_states = 0;
    int num_actions = 0;
    int num_observations = 0;
    int num_relative = 0;  // support size of the relative change dS

    scm::CategoricalTable confounder_prior;  // P(U)
    scm::CategoricalTable reactive_policy;   // P(A|U), used inside the region
    std::vector<bool> confounded;            // region membership per non-terminal state
    scm::CategoricalTable p_uc;              // P(dS|A,U), parents (A, U)
    scm::CategoricalTable p_0;               // P(dS|A)
    std::vector<StateId> successor;          // f(s, dS) at [s * num_relative + ds]
    scm::CategoricalTable observation;       // P(Z|S'), one row per state incl. terminals
    std::vector<double> rewards;             // [(s * num_actions + a) * total_states() + s']
    std::vector<double> initial_belief;      // over all states
    double discount = 0.95;
    PlannerHints hints;

    std::vector<std::string> state_names;
    std::vector<std::string> action_names;
    std::vector<std::string> observation_names;
    std::vector<std::string> relative_names;

    int total_states() const noexcept { return num_states + 2; }
    StateId goal_state() const noexcept { return num_states; }
    StateId collided_state() const noexcept { return num_states + 1; }
    bool is_terminal(StateId s) const noexcept { return s >= num_states; }
    int confounder_arity() const noexcept { return confounder_prior.arity(); }

    double reward_entry(StateId s, ActionId a, StateId next) const {
        return rewards[(static_cast<std::size_t>(s) * num_actions + a) * total_states() + next];
    }

    /// Throws SpecificationError on any shape or normalization violation.
    void validate() const;
};

struct Belief {
    std::vector<double> probabilities;

    static Belief point_mass(int total_states, StateId s);
    static Belief uniform_over(int total_states, const std::vector<StateId>& support);

    /// Most probable state; lowest index on ties.
    StateId mode() const;
    /// Throws UsageError when negative or not summing to 1 within 1e-9.
    void check() const;

    bool operator==(const Belief&) const = default;
};

enum class InferenceMethod { Exact, Importance };

struct InferenceOptions {
    InferenceMethod method = InferenceMethod::Exact;
    std::size_t particles = 5000;
    std::uint64_t seed = 0;
};

/// Variables "U", "A", "dS" and "S'" for a step taken from state s. Inside the
/// region A has parent U and dS has parents (A, U); elsewhere A is a uniform
/// root and dS depends on A only.
scm::ScmSpec step_scm(const UcPomdpModel& model, StateId s);

/// Distribution of the relative change dS.
scm::Dist relative_transition_dist(const UcPomdpModel& model, StateId s, ActionId a, TransitionMode mode,
                                   const InferenceOptions& options = {});

/// Distribution over all successor states (terminals included).
scm::Dist transition_dist(const UcPomdpModel& model, StateId s, ActionId a, TransitionMode mode,
                          const InferenceOptions& options = {});

/// P(Z|S'=next). The action is accepted but does not enter the model.
scm::Dist observation_dist(const UcPomdpModel& model, StateId next, ActionId a);

double reward(const UcPomdpModel& model, StateId s, ActionId a, StateId next);

/// Table I-style draw inside the region, uniform over actions elsewhere.
ActionId sample_reactive_action(const UcPomdpModel& model, StateId s, int u, Rng& rng);

struct StepOutcome {
    StateId next = 0;
    ObservationId observation = 0;
    double reward = 0.0;

    bool operator==(const StepOutcome&) const = default;
};

/// Inverse-CDF determinized step: phi.first picks the successor, phi.second
/// the observation.
StepOutcome deterministic_step(const UcPomdpModel& model, StateId s, ActionId a, std::pair<double, double> phi,
                               TransitionMode mode);

/// Transition and observation distributions for one mode, precomputed for
/// every (s, a) and laid out for fast inverse-CDF stepping. Immutable.
class DynamicsTable {
public:
    DynamicsTable(const UcPomdpModel& model, TransitionMode mode, const InferenceOptions& options = {});

    TransitionMode mode() const noexcept { return mode_; }
    const scm::Dist& transition(StateId s, ActionId a) const;
    const scm::Dist& observation(StateId next) const;

    /// Same result as deterministic_step; terminal s stays put with reward 0.
    StepOutcome step(StateId s, ActionId a, double phi_transition, double phi_observation) const;

private:
    struct Entry {
        double cumulative;
        int value;
    };
    static int invert(const std::vector<Entry>& entries, double u);

    const UcPomdpModel* model_;
    TransitionMode mode_;
    int num_actions_;
    std::vector<scm::Dist> transitions_;
    std::vector<scm::Dist> observations_;
    std::vector<std::vector<Entry>> transition_cdf_;
    std::vector<std::vector<Entry>> observation_cdf_;
};

Belief belief_update(const UcPomdpModel& model, const Belief& b, ActionId a, ObservationId z,
                     TransitionMode mode);
Belief belief_update(const DynamicsTable& dynamics, const UcPomdpModel& model, const Belief& b, ActionId a,
                     ObservationId z);

}  // namespace cpomdp::pomdp
