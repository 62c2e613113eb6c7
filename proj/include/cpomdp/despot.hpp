#pragma once

// Anytime regularized DESPOT. The transition mode in the config decides
// whether scenario simulation uses observational or interventional dynamics.

#include <cstdint>
#include <utility>
#include <vector>

#include "cpomdp/ucpomdp.hpp"

namespace cpomdp::planner {

using pomdp::ActionId;
using pomdp::ObservationId;
using pomdp::StateId;

struct PlannerConfig {
    int scenarios = 500;
    int depth = 15;
    double discount = 0.95;
    double xi = 0.95;
    double lambda = 0.01;
    std::uint64_t max_trials = 10000;
    double time_budget_ms = 0.0;  // 0 disables the wall-clock limit
    pomdp::TransitionMode mode = pomdp::TransitionMode::Interventional;
    std::uint64_t seed = 0;

    /// Throws UsageError.
    void validate() const;
};

struct Scenario {
    int id = 0;
    StateId initial_state = 0;
    std::uint64_t seed = 0;

    /// (phi_transition, phi_observation) used at the given depth.
    std::pair<double, double> phi(int depth) const noexcept;

    bool operator==(const Scenario&) const = default;
};

std::vector<Scenario> sample_scenarios(const pomdp::Belief& b0, int count, std::uint64_t seed);

/// Everything a search needs that is fixed for its duration. Also owns the
/// rollout memo, so one context must not be shared by concurrent searches.
class PlanningContext {
public:
    PlanningContext(const pomdp::UcPomdpModel& model, const pomdp::DynamicsTable& dynamics,
                    const PlannerConfig& config, std::vector<Scenario> scenarios);

    const pomdp::UcPomdpModel& model() const noexcept { return *model_; }
    const pomdp::DynamicsTable& dynamics() const noexcept { return *dynamics_; }
    const PlannerConfig& config() const noexcept { return config_; }
    const std::vector<Scenario>& scenarios() const noexcept { return scenarios_; }

    std::pair<double, double> phi(int scenario, int depth) const {
        return phi_[static_cast<std::size_t>(scenario) * config_.depth + depth];
    }

    ActionId rollout_action(StateId s) const;
    /// Action the default policy takes after observing z.
    ActionId continuation_action(ObservationId z) const;
    /// Discounted return from depth to the horizon of taking `first`, then
    /// following the observation-driven default policy.
    double rollout_return(int scenario, StateId s, int depth, ActionId first) const;
    /// Optimistic return bound for one particle at the given depth.
    double particle_upper(StateId s, int depth) const;

private:
    const pomdp::UcPomdpModel* model_;
    const pomdp::DynamicsTable* dynamics_;
    PlannerConfig config_;
    std::vector<Scenario> scenarios_;
    std::vector<std::pair<double, double>> phi_;
    std::vector<double> upper_by_distance_;  // [distance * (depth+1) + remaining]
    std::vector<double> upper_generic_;      // [remaining]
    int max_distance_ = 0;
    mutable std::vector<double> rollout_memo_;
};

/// Upper bound assuming an unobstructed path of the given length.
double idealized_return(int distance, double discount, double step_reward = -1.0, double goal_reward = 99.0);

struct Particle {
    int scenario = 0;
    StateId state = 0;

    bool operator==(const Particle&) const = default;
};

struct ActionBranch {
    double reward_sum = 0.0;                           // over the node's particles
    std::vector<std::pair<ObservationId, int>> children;  // sorted by observation
    double lower = 0.0;                                // un-penalized Q bounds
    double upper = 0.0;
};

struct DespotNode {
    std::vector<Particle> particles;
    int depth = 0;
    int parent = -1;
    ActionId parent_action = -1;
    ObservationId parent_observation = -1;
    double default_lower = 0.0;
    double lower = 0.0;
    double upper = 0.0;
    bool closed = false;  // horizon reached or every particle terminal
    std::vector<ActionBranch> branches;

    bool expanded() const noexcept { return !branches.empty(); }
};

class DespotTree {
public:
    /// Root holds every scenario at its initial state.
    explicit DespotTree(const PlanningContext& ctx);

    std::size_t size() const noexcept { return nodes_.size(); }
    const DespotNode& node(int index) const { return nodes_.at(index); }
    const DespotNode& root() const { return nodes_.front(); }

    /// Creates the children of a leaf for every action. Returns false when
    /// the node is closed or already expanded.
    bool expand(int index, const PlanningContext& ctx);
    /// Recomputes bounds from index up to the root.
    void backup(int index, const PlanningContext& ctx);

    /// Weighted excess uncertainty of a node.
    double weu(int index, const PlanningContext& ctx) const;

private:
    int add_node(DespotNode node, const PlanningContext& ctx);
    void refresh(int index, const PlanningContext& ctx);

    std::vector<DespotNode> nodes_;
};

/// Greedy action at the most common particle state. One action for the whole
/// node, so the default policy depends on the history only.
ActionId default_first_action(const DespotNode& node, const PlanningContext& ctx);
/// Average rollout return over the node's particles, minus lambda.
double default_lower_bound(const DespotNode& node, const PlanningContext& ctx);
/// Average of the per-particle optimistic bounds.
double initial_upper_bound(const DespotNode& node, const PlanningContext& ctx);

struct TrialResult {
    bool expanded = false;
    int frontier = 0;  // node where the descent stopped
};

TrialResult run_trial(DespotTree& tree, const PlanningContext& ctx);

struct SearchResult {
    ActionId action = 0;
    double lower = 0.0;
    double upper = 0.0;
    std::uint64_t trials = 0;
    std::size_t nodes = 0;
    std::vector<double> action_lower;  // regularized, per root action; empty if never expanded
    std::vector<double> action_upper;
    std::vector<std::pair<double, double>> trajectory;  // root (lower, upper) after each trial
};

/// Action of the rollout policy at the most probable belief state.
ActionId default_action(const pomdp::UcPomdpModel& model, const pomdp::Belief& b);

SearchResult search(const pomdp::Belief& b0, const pomdp::UcPomdpModel& model, const pomdp::DynamicsTable& dynamics,
                    const PlannerConfig& config);
/// Builds the dynamics table for config.mode first.
SearchResult search(const pomdp::Belief& b0, const pomdp::UcPomdpModel& model, const PlannerConfig& config);

}  // namespace cpomdp::planner
