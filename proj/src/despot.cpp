#include "cpomdp/despot.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "cpomdp/error.hpp"

namespace cpomdp::planner {

void PlannerConfig::validate() const {
    if (scenarios < 1) {
        throw UsageError("scenario count must be at least 1");
    }
    if (depth < 1) {
        throw UsageError("search depth must be at least 1");
    }
    if (!(discount > 0.0 && discount < 1.0)) {
        throw UsageError("discount must lie in (0,1)");
    }
    if (!(xi > 0.0 && xi < 1.0)) {
        throw UsageError("xi must lie in (0,1)");
    }
    if (!(lambda >= 0.0)) {
        throw UsageError("lambda must be non-negative");
    }
    if (!(time_budget_ms >= 0.0)) {
        throw UsageError("time budget must be non-negative");
    }
}

std::pair<double, double> Scenario::phi(int depth) const noexcept {
    const auto d = static_cast<std::uint64_t>(depth);
    return {unit_interval(mix_seed(seed, 2 * d)), unit_interval(mix_seed(seed, 2 * d + 1))};
}

std::vector<Scenario> sample_scenarios(const pomdp::Belief& b0, int count, std::uint64_t seed) {
    if (count < 1) {
        throw UsageError("scenario count must be at least 1");
    }
    b0.check();
    std::vector<Scenario> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        const auto k = static_cast<std::uint64_t>(i);
        const double u = unit_interval(mix_seed(seed, 2 * k));
        out.push_back({i, sample_categorical(b0.probabilities, u), mix_seed(seed, 2 * k + 1)});
    }
    return out;
}

double idealized_return(int distance, double discount, double step_reward, double goal_reward) {
    if (distance <= 0) {
        return 0.0;
    }
    double total = 0.0;
    double g = 1.0;
    for (int t = 0; t + 1 < distance; ++t) {
        total += step_reward * g;
        g *= discount;
    }
    return total + g * goal_reward;
}

// ---------------------------------------------------------------------------
// PlanningContext

PlanningContext::PlanningContext(const pomdp::UcPomdpModel& model, const pomdp::DynamicsTable& dynamics,
                                 const PlannerConfig& config, std::vector<Scenario> scenarios)
    : model_(&model), dynamics_(&dynamics), config_(config), scenarios_(std::move(scenarios)) {
    config_.validate();
    if (dynamics.mode() != config_.mode) {
        throw UsageError("dynamics table mode does not match the planner mode");
    }
    if (scenarios_.empty()) {
        throw UsageError("planning needs at least one scenario");
    }
    const int depth = config_.depth;
    phi_.reserve(scenarios_.size() * depth);
    for (const Scenario& sc : scenarios_) {
        for (int d = 0; d < depth; ++d) {
            phi_.push_back(sc.phi(d));
        }
    }
    rollout_memo_.assign(scenarios_.size() * (depth + 1) * model.total_states() * model.num_actions,
                         std::numeric_limits<double>::quiet_NaN());

    // Reward extremes by successor class.
    constexpr double kNone = -std::numeric_limits<double>::infinity();
    double r_goal = kNone;
    double r_collide = kNone;
    double r_move = kNone;
    for (StateId s = 0; s < model.num_states; ++s) {
        for (ActionId a = 0; a < model.num_actions; ++a) {
            for (StateId n = 0; n < model.total_states(); ++n) {
                const double r = model.reward_entry(s, a, n);
                if (n == model.goal_state()) {
                    r_goal = std::max(r_goal, r);
                } else if (n == model.collided_state()) {
                    r_collide = std::max(r_collide, r);
                } else {
                    r_move = std::max(r_move, r);
                }
            }
        }
    }
    const double gamma = config_.discount;

    upper_generic_.assign(depth + 1, 0.0);
    for (int h = 1; h <= depth; ++h) {
        upper_generic_[h] = std::max({r_goal, r_collide, r_move + gamma * upper_generic_[h - 1]});
    }

    if (!model.hints.goal_distance.empty()) {
        max_distance_ = 1;
        for (int d : model.hints.goal_distance) {
            max_distance_ = std::max(max_distance_, d);
        }
        const int stride = depth + 1;
        upper_by_distance_.assign(static_cast<std::size_t>(max_distance_ + 1) * stride, 0.0);
        for (int h = 1; h <= depth; ++h) {
            for (int d = 1; d <= max_distance_; ++d) {
                const int closer = std::max(d - 1, 1);
                double v = std::max(r_collide, r_move + gamma * upper_by_distance_[closer * stride + h - 1]);
                if (d == 1) {
                    v = std::max(v, r_goal);
                }
                upper_by_distance_[d * stride + h] = v;
            }
        }
    }
}

ActionId PlanningContext::rollout_action(StateId s) const {
    const auto& hint = model_->hints.rollout_action;
    return hint.empty() ? 0 : hint[s];
}

ActionId PlanningContext::continuation_action(ObservationId z) const {
    const auto& hint = model_->hints.observation_action;
    return hint.empty() ? 0 : hint[z];
}

double PlanningContext::rollout_return(int scenario, StateId s, int depth, ActionId first) const {
    const int horizon = config_.depth;
    if (depth >= horizon || model_->is_terminal(s)) {
        return 0.0;
    }
    const std::size_t slot =
        ((static_cast<std::size_t>(scenario) * (horizon + 1) + depth) * model_->total_states() + s) *
            model_->num_actions +
        first;
    if (!std::isnan(rollout_memo_[slot])) {
        return rollout_memo_[slot];
    }
    const auto [phi_t, phi_z] = phi(scenario, depth);
    const pomdp::StepOutcome out = dynamics_->step(s, first, phi_t, phi_z);
    const double value = out.reward + config_.discount * rollout_return(scenario, out.next, depth + 1,
                                                                        continuation_action(out.observation));
    rollout_memo_[slot] = value;
    return value;
}

double PlanningContext::particle_upper(StateId s, int depth) const {
    const int remaining = config_.depth - depth;
    if (remaining <= 0 || model_->is_terminal(s)) {
        return 0.0;
    }
    if (upper_by_distance_.empty()) {
        return upper_generic_[remaining];
    }
    const int d = std::clamp(model_->hints.goal_distance[s], 1, max_distance_);
    return upper_by_distance_[static_cast<std::size_t>(d) * (config_.depth + 1) + remaining];
}

// ---------------------------------------------------------------------------
// Bounds

ActionId default_first_action(const DespotNode& node, const PlanningContext& ctx) {
    std::vector<int> counts(ctx.model().total_states(), 0);
    for (const Particle& p : node.particles) {
        ++counts[p.state];
    }
    const auto s = static_cast<StateId>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    return ctx.model().is_terminal(s) ? 0 : ctx.rollout_action(s);
}

double default_lower_bound(const DespotNode& node, const PlanningContext& ctx) {
    if (node.particles.empty()) {
        throw UsageError("default_lower_bound: node has no scenarios");
    }
    const ActionId first = default_first_action(node, ctx);
    double total = 0.0;
    for (const Particle& p : node.particles) {
        total += ctx.rollout_return(p.scenario, p.state, node.depth, first);
    }
    return total / static_cast<double>(node.particles.size()) - ctx.config().lambda;
}

double initial_upper_bound(const DespotNode& node, const PlanningContext& ctx) {
    if (node.particles.empty()) {
        throw UsageError("initial_upper_bound: node has no scenarios");
    }
    double total = 0.0;
    for (const Particle& p : node.particles) {
        total += ctx.particle_upper(p.state, node.depth);
    }
    return total / static_cast<double>(node.particles.size());
}

// ---------------------------------------------------------------------------
// DespotTree

DespotTree::DespotTree(const PlanningContext& ctx) {
    DespotNode root;
    for (const Scenario& sc : ctx.scenarios()) {
        root.particles.push_back({sc.id, sc.initial_state});
    }
    add_node(std::move(root), ctx);
}

int DespotTree::add_node(DespotNode node, const PlanningContext& ctx) {
    const auto& model = ctx.model();
    node.closed = node.depth >= ctx.config().depth ||
                  std::all_of(node.particles.begin(), node.particles.end(),
                              [&](const Particle& p) { return model.is_terminal(p.state); });
    node.default_lower = default_lower_bound(node, ctx);
    node.lower = node.default_lower;
    node.upper = initial_upper_bound(node, ctx);
    nodes_.push_back(std::move(node));
    return static_cast<int>(nodes_.size()) - 1;
}

bool DespotTree::expand(int index, const PlanningContext& ctx) {
    if (nodes_.at(index).closed || nodes_[index].expanded()) {
        return false;
    }
    const auto& model = ctx.model();
    const auto& dynamics = ctx.dynamics();
    const int depth = nodes_[index].depth;
    const std::vector<Particle> particles = nodes_[index].particles;

    std::vector<ActionBranch> branches(model.num_actions);
    for (ActionId a = 0; a < model.num_actions; ++a) {
        std::vector<std::pair<ObservationId, std::vector<Particle>>> groups;
        double reward_sum = 0.0;
        for (const Particle& p : particles) {
            const auto [phi_t, phi_z] = ctx.phi(p.scenario, depth);
            const pomdp::StepOutcome out = dynamics.step(p.state, a, phi_t, phi_z);
            reward_sum += out.reward;
            auto it = std::find_if(groups.begin(), groups.end(),
                                   [&](const auto& g) { return g.first == out.observation; });
            if (it == groups.end()) {
                groups.push_back({out.observation, {}});
                it = std::prev(groups.end());
            }
            it->second.push_back({p.scenario, out.next});
        }
        std::sort(groups.begin(), groups.end(), [](const auto& x, const auto& y) { return x.first < y.first; });
        branches[a].reward_sum = reward_sum;
        for (auto& [z, members] : groups) {
            DespotNode child;
            child.particles = std::move(members);
            child.depth = depth + 1;
            child.parent = index;
            child.parent_action = a;
            child.parent_observation = z;
            const int child_index = add_node(std::move(child), ctx);
            branches[a].children.emplace_back(z, child_index);
        }
    }
    nodes_[index].branches = std::move(branches);
    refresh(index, ctx);
    return true;
}

void DespotTree::refresh(int index, const PlanningContext& ctx) {
    DespotNode& node = nodes_[index];
    if (!node.expanded()) {
        return;
    }
    const double gamma = ctx.config().discount;
    const double n = static_cast<double>(node.particles.size());
    double best_lower = -std::numeric_limits<double>::infinity();
    double best_upper = -std::numeric_limits<double>::infinity();
    for (ActionBranch& branch : node.branches) {
        double lower = branch.reward_sum;
        double upper = branch.reward_sum;
        for (const auto& [z, child_index] : branch.children) {
            const DespotNode& child = nodes_[child_index];
            const double w = static_cast<double>(child.particles.size());
            lower += gamma * w * child.lower;
            upper += gamma * w * child.upper;
        }
        branch.lower = lower / n;
        branch.upper = upper / n;
        best_lower = std::max(best_lower, branch.lower);
        best_upper = std::max(best_upper, branch.upper);
    }
    node.lower = std::max(node.default_lower, best_lower - ctx.config().lambda);
    node.upper = best_upper;
}

void DespotTree::backup(int index, const PlanningContext& ctx) {
    for (int i = index; i >= 0; i = nodes_[i].parent) {
        refresh(i, ctx);
    }
}

double DespotTree::weu(int index, const PlanningContext& ctx) const {
    const DespotNode& node = nodes_.at(index);
    const DespotNode& root = nodes_.front();
    const auto& cfg = ctx.config();
    const double target = cfg.xi * std::pow(cfg.discount, -node.depth) * (root.upper - root.lower);
    const double share = static_cast<double>(node.particles.size()) / static_cast<double>(ctx.scenarios().size());
    return share * (node.upper - node.lower - target);
}

TrialResult run_trial(DespotTree& tree, const PlanningContext& ctx) {
    int current = 0;
    while (tree.node(current).expanded()) {
        const DespotNode& node = tree.node(current);
        std::size_t best_action = 0;
        for (std::size_t a = 1; a < node.branches.size(); ++a) {
            if (node.branches[a].upper > node.branches[best_action].upper) {
                best_action = a;
            }
        }
        int best_child = -1;
        double best_weu = 0.0;
        for (const auto& [z, child] : node.branches[best_action].children) {
            if (tree.node(child).closed) {
                continue;
            }
            const double w = tree.weu(child, ctx);
            if (best_child < 0 || w > best_weu) {
                best_child = child;
                best_weu = w;
            }
        }
        if (best_child < 0 || best_weu <= 0.0) {
            return {false, current};
        }
        current = best_child;
    }
    const bool expanded = tree.expand(current, ctx);
    if (expanded) {
        tree.backup(current, ctx);
    }
    return {expanded, current};
}

// ---------------------------------------------------------------------------
// Search

ActionId default_action(const pomdp::UcPomdpModel& model, const pomdp::Belief& b) {
    const StateId s = b.mode();
    if (model.is_terminal(s) || model.hints.rollout_action.empty()) {
        return 0;
    }
    return model.hints.rollout_action[s];
}

SearchResult search(const pomdp::Belief& b0, const pomdp::UcPomdpModel& model, const pomdp::DynamicsTable& dynamics,
                    const PlannerConfig& config) {
    config.validate();
    if (static_cast<int>(b0.probabilities.size()) != model.total_states()) {
        throw UsageError("search: belief has the wrong length");
    }
    const PlanningContext ctx(model, dynamics, config, sample_scenarios(b0, config.scenarios, config.seed));
    DespotTree tree(ctx);

    SearchResult result;
    result.trajectory.emplace_back(tree.root().lower, tree.root().upper);
    const double initial_gap = tree.root().upper - tree.root().lower;
    const auto started = std::chrono::steady_clock::now();
    auto out_of_time = [&] {
        if (config.time_budget_ms <= 0.0) {
            return false;
        }
        const std::chrono::duration<double, std::milli> elapsed = std::chrono::steady_clock::now() - started;
        return elapsed.count() >= config.time_budget_ms;
    };

    while (result.trials < config.max_trials && !out_of_time()) {
        const DespotNode& root = tree.root();
        if (root.upper - root.lower <= (1.0 - config.xi) * initial_gap) {
            break;
        }
        const TrialResult trial = run_trial(tree, ctx);
        ++result.trials;
        result.trajectory.emplace_back(tree.root().lower, tree.root().upper);
        if (!trial.expanded) {
            break;
        }
    }

    const DespotNode& root = tree.root();
    result.lower = root.lower;
    result.upper = root.upper;
    result.nodes = tree.size();
    if (!root.expanded()) {
        result.action = default_action(model, b0);
        return result;
    }
    for (const ActionBranch& branch : root.branches) {
        result.action_lower.push_back(branch.lower - config.lambda);
        result.action_upper.push_back(branch.upper);
    }
    result.action = static_cast<ActionId>(
        std::max_element(result.action_lower.begin(), result.action_lower.end()) - result.action_lower.begin());
    return result;
}

SearchResult search(const pomdp::Belief& b0, const pomdp::UcPomdpModel& model, const PlannerConfig& config) {
    const pomdp::DynamicsTable dynamics(model, config.mode);
    return search(b0, model, dynamics, config);
}

}  // namespace cpomdp::planner
