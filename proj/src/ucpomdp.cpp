#include "cpomdp/ucpomdp.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpomdp/error.hpp"

namespace cpomdp::pomdp {
namespace {

constexpr const char* kU = "U";
constexpr const char* kA = "A";
constexpr const char* kDs = "dS";
constexpr const char* kNext = "S'";

void require_nonterminal(const UcPomdpModel& model, StateId s, const char* op) {
    if (s < 0 || s >= model.num_states) {
        throw UsageError(std::string(op) + ": state " + std::to_string(s) + " is terminal or out of range");
    }
}

void require_action(const UcPomdpModel& model, ActionId a, const char* op) {
    if (a < 0 || a >= model.num_actions) {
        throw UsageError(std::string(op) + ": action " + std::to_string(a) + " out of range");
    }
}

void require_table(const scm::CategoricalTable& table, std::vector<int> parents, int arity, const char* what) {
    if (table.parent_arities() != parents || table.arity() != arity) {
        throw SpecificationError(std::string("model table ") + what + " has the wrong shape");
    }
}

}  // namespace

std::string_view to_string(TransitionMode mode) noexcept {
    return mode == TransitionMode::Observational ? "observational" : "interventional";
}

TransitionMode parse_mode(std::string_view text) {
    if (text == "observational") {
        return TransitionMode::Observational;
    }
    if (text == "interventional") {
        return TransitionMode::Interventional;
    }
    throw UsageError("unknown transition mode '" + std::string(text) + "'");
}

void UcPomdpModel::validate() const {
    if (num_states < 1 || num_actions < 1 || num_observations < 1 || num_relative < 1) {
        throw SpecificationError("model spaces must be non-empty");
    }
    const int nu = confounder_prior.arity();
    if (nu < 1) {
        throw SpecificationError("confounder prior is missing");
    }
    require_table(confounder_prior, {}, nu, "P(U)");
    require_table(reactive_policy, {nu}, num_actions, "P(A|U)");
    require_table(p_uc, {num_actions, nu}, num_relative, "P_UC(dS|A,U)");
    require_table(p_0, {num_actions}, num_relative, "P_0(dS|A)");
    require_table(observation, {total_states()}, num_observations, "P(Z|S')");
    if (static_cast<int>(confounded.size()) != num_states) {
        throw SpecificationError("confounded-region mask has the wrong length");
    }
    if (successor.size() != static_cast<std::size_t>(num_states) * num_relative) {
        throw SpecificationError("successor table has the wrong size");
    }
    for (StateId next : successor) {
        if (next < 0 || next >= total_states()) {
            throw SpecificationError("successor table references an unknown state");
        }
    }
    if (rewards.size() != static_cast<std::size_t>(num_states) * num_actions * total_states()) {
        throw SpecificationError("reward table has the wrong size");
    }
    if (!(discount > 0.0 && discount < 1.0)) {
        throw SpecificationError("discount must lie in (0,1)");
    }
    if (static_cast<int>(initial_belief.size()) != total_states()) {
        throw SpecificationError("initial belief has the wrong length");
    }
    Belief{initial_belief}.check();
    if (!hints.rollout_action.empty()) {
        if (static_cast<int>(hints.rollout_action.size()) != num_states) {
            throw SpecificationError("rollout hint has the wrong length");
        }
        for (ActionId a : hints.rollout_action) {
            if (a < 0 || a >= num_actions) {
                throw SpecificationError("rollout hint references an unknown action");
            }
        }
    }
    if (!hints.observation_action.empty()) {
        if (static_cast<int>(hints.observation_action.size()) != num_observations) {
            throw SpecificationError("observation-action hint has the wrong length");
        }
        for (ActionId a : hints.observation_action) {
            if (a < 0 || a >= num_actions) {
                throw SpecificationError("observation-action hint references an unknown action");
            }
        }
    }
    if (!hints.goal_distance.empty() && static_cast<int>(hints.goal_distance.size()) != num_states) {
        throw SpecificationError("goal-distance hint has the wrong length");
    }
}

// ---------------------------------------------------------------------------
// Belief

Belief Belief::point_mass(int total_states, StateId s) {
    Belief b{std::vector<double>(total_states, 0.0)};
    b.probabilities.at(s) = 1.0;
    return b;
}

Belief Belief::uniform_over(int total_states, const std::vector<StateId>& support) {
    if (support.empty()) {
        throw UsageError("uniform belief needs a non-empty support");
    }
    Belief b{std::vector<double>(total_states, 0.0)};
    for (StateId s : support) {
        b.probabilities.at(s) += 1.0 / static_cast<double>(support.size());
    }
    return b;
}

StateId Belief::mode() const {
    return static_cast<StateId>(std::max_element(probabilities.begin(), probabilities.end()) -
                                probabilities.begin());
}

void Belief::check() const {
    double sum = 0.0;
    for (double p : probabilities) {
        if (!(p >= 0.0)) {
            throw UsageError("belief has a negative or NaN entry");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > scm::kNormalizationTolerance) {
        throw UsageError("belief sums to " + std::to_string(sum));
    }
}

// ---------------------------------------------------------------------------
// Model operations

scm::ScmSpec step_scm(const UcPomdpModel& model, StateId s) {
    require_nonterminal(model, s, "step_scm");
    const int nu = model.confounder_arity();
    const int na = model.num_actions;
    const int nds = model.num_relative;

    std::vector<int> next_of(model.successor.begin() + static_cast<std::ptrdiff_t>(s) * nds,
                             model.successor.begin() + static_cast<std::ptrdiff_t>(s + 1) * nds);

    scm::ScmBuilder builder;
    builder.exogenous({kU, nu}, model.confounder_prior);
    if (model.confounded[s]) {
        builder.endogenous({kA, na}, {kU}, model.reactive_policy);
        builder.endogenous({kDs, nds}, {kA, kU}, model.p_uc);
    } else {
        builder.endogenous({kA, na}, {},
                           scm::CategoricalTable::root(std::vector<double>(na, 1.0 / na)));
        builder.endogenous({kDs, nds}, {kA}, model.p_0);
    }
    builder.endogenous({kNext, model.total_states()}, {kDs}, scm::DeterministicRule{std::move(next_of)});
    return builder.build();
}

namespace {

scm::Dist query_step(const UcPomdpModel& model, StateId s, ActionId a, TransitionMode mode,
                     const InferenceOptions& options, const char* target) {
    require_nonterminal(model, s, "transition_dist");
    require_action(model, a, "transition_dist");
    const scm::ScmSpec spec = step_scm(model, s);
    scm::Evidence ev;
    scm::Intervention iv;
    // Outside the region A has no back-door path to dS, so the observational
    // and interventional queries coincide; both take the interventional form.
    if (mode == TransitionMode::Observational && model.confounded[s]) {
        ev.assignments[kA] = a;
    } else {
        iv.assignments[kA] = a;
    }
    if (options.method == InferenceMethod::Importance) {
        Rng rng(mix_seed(options.seed, static_cast<std::uint64_t>(s) * 1315423911ULL + a * 2 +
                                           (mode == TransitionMode::Observational ? 1 : 0)));
        return scm::importance_query(spec, target, ev, iv, options.particles, rng);
    }
    return scm::exact_query(spec, target, ev, iv);
}

}  // namespace

scm::Dist relative_transition_dist(const UcPomdpModel& model, StateId s, ActionId a, TransitionMode mode,
                                   const InferenceOptions& options) {
    return query_step(model, s, a, mode, options, kDs);
}

scm::Dist transition_dist(const UcPomdpModel& model, StateId s, ActionId a, TransitionMode mode,
                          const InferenceOptions& options) {
    return query_step(model, s, a, mode, options, kNext);
}

scm::Dist observation_dist(const UcPomdpModel& model, StateId next, ActionId /*a*/) {
    if (next < 0 || next >= model.total_states()) {
        throw UsageError("observation_dist: state out of range");
    }
    auto row = model.observation.row(static_cast<std::size_t>(next));
    return {"Z", std::vector<double>(row.begin(), row.end())};
}

double reward(const UcPomdpModel& model, StateId s, ActionId a, StateId next) {
    require_nonterminal(model, s, "reward");
    require_action(model, a, "reward");
    if (next < 0 || next >= model.total_states()) {
        throw UsageError("reward: successor out of range");
    }
    return model.reward_entry(s, a, next);
}

ActionId sample_reactive_action(const UcPomdpModel& model, StateId s, int u, Rng& rng) {
    require_nonterminal(model, s, "sample_reactive_action");
    if (u < 0 || u >= model.confounder_arity()) {
        throw UsageError("sample_reactive_action: confounder value out of range");
    }
    if (model.confounded[s]) {
        return sample_categorical(model.reactive_policy.row(static_cast<std::size_t>(u)), rng.uniform());
    }
    const double draw = rng.uniform() * model.num_actions;
    return std::min(static_cast<ActionId>(draw), model.num_actions - 1);
}

StepOutcome deterministic_step(const UcPomdpModel& model, StateId s, ActionId a, std::pair<double, double> phi,
                               TransitionMode mode) {
    if (phi.first < 0.0 || phi.first >= 1.0 || phi.second < 0.0 || phi.second >= 1.0) {
        throw UsageError("deterministic_step: phi must lie in [0,1)");
    }
    const scm::Dist next_dist = transition_dist(model, s, a, mode);
    const StateId next = sample_categorical(next_dist.probabilities, phi.first);
    const scm::Dist z_dist = observation_dist(model, next, a);
    const ObservationId z = sample_categorical(z_dist.probabilities, phi.second);
    return {next, z, model.reward_entry(s, a, next)};
}

// ---------------------------------------------------------------------------
// DynamicsTable

DynamicsTable::DynamicsTable(const UcPomdpModel& model, TransitionMode mode, const InferenceOptions& options)
    : model_(&model), mode_(mode), num_actions_(model.num_actions) {
    model.validate();
    auto build_cdf = [](const std::vector<double>& p) {
        std::vector<Entry> entries;
        double c = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] > 0.0) {
                c += p[i];
                entries.push_back({c, static_cast<int>(i)});
            }
        }
        return entries;
    };
    for (StateId s = 0; s < model.num_states; ++s) {
        for (ActionId a = 0; a < model.num_actions; ++a) {
            transitions_.push_back(transition_dist(model, s, a, mode, options));
            transition_cdf_.push_back(build_cdf(transitions_.back().probabilities));
        }
    }
    for (StateId s = 0; s < model.total_states(); ++s) {
        observations_.push_back(observation_dist(model, s, 0));
        observation_cdf_.push_back(build_cdf(observations_.back().probabilities));
    }
}

const scm::Dist& DynamicsTable::transition(StateId s, ActionId a) const {
    return transitions_.at(static_cast<std::size_t>(s) * num_actions_ + a);
}

const scm::Dist& DynamicsTable::observation(StateId next) const {
    return observations_.at(static_cast<std::size_t>(next));
}

int DynamicsTable::invert(const std::vector<Entry>& entries, double u) {
    for (const Entry& e : entries) {
        if (u < e.cumulative) {
            return e.value;
        }
    }
    return entries.back().value;
}

StepOutcome DynamicsTable::step(StateId s, ActionId a, double phi_transition, double phi_observation) const {
    if (model_->is_terminal(s)) {
        return {s, invert(observation_cdf_[s], phi_observation), 0.0};
    }
    const StateId next = invert(transition_cdf_[static_cast<std::size_t>(s) * num_actions_ + a], phi_transition);
    const ObservationId z = invert(observation_cdf_[next], phi_observation);
    return {next, z, model_->reward_entry(s, a, next)};
}

// ---------------------------------------------------------------------------
// Belief update

namespace {

template <typename TransitionFn>
Belief bayes_update(const UcPomdpModel& model, const Belief& b, ActionId a, ObservationId z,
                    TransitionFn&& transition) {
    b.check();
    require_action(model, a, "belief_update");
    if (z < 0 || z >= model.num_observations) {
        throw UsageError("belief_update: observation out of range");
    }
    if (static_cast<int>(b.probabilities.size()) != model.total_states()) {
        throw UsageError("belief_update: belief has the wrong length");
    }
    std::vector<double> predicted(model.total_states(), 0.0);
    for (StateId s = 0; s < model.total_states(); ++s) {
        const double mass = b.probabilities[s];
        if (mass <= 0.0) {
            continue;
        }
        if (model.is_terminal(s)) {
            predicted[s] += mass;
            continue;
        }
        const auto& next = transition(s);
        for (StateId n = 0; n < model.total_states(); ++n) {
            predicted[n] += mass * next[n];
        }
    }
    double total = 0.0;
    for (StateId n = 0; n < model.total_states(); ++n) {
        predicted[n] *= model.observation.at(static_cast<std::size_t>(n), z);
        total += predicted[n];
    }
    if (!(total > 0.0)) {
        throw InconsistentObservationError("observation " + std::to_string(z) +
                                           " has probability zero under the belief");
    }
    for (double& p : predicted) {
        p /= total;
    }
    return Belief{std::move(predicted)};
}

}  // namespace

Belief belief_update(const UcPomdpModel& model, const Belief& b, ActionId a, ObservationId z,
                     TransitionMode mode) {
    return bayes_update(model, b, a, z, [&](StateId s) { return transition_dist(model, s, a, mode); });
}

Belief belief_update(const DynamicsTable& dynamics, const UcPomdpModel& model, const Belief& b, ActionId a,
                     ObservationId z) {
    return bayes_update(model, b, a, z, [&](StateId s) -> const scm::Dist& { return dynamics.transition(s, a); });
}

}  // namespace cpomdp::pomdp
