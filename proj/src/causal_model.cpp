#include "cpomdp/causal_model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <utility>

#include "cpomdp/error.hpp"

namespace cpomdp::scm {
namespace {

std::size_t product(std::span<const int> arities) {
    std::size_t p = 1;
    for (int a : arities) {
        p *= static_cast<std::size_t>(a);
    }
    return p;
}

void check_table(const std::vector<int>& parent_arities, int arity, const std::vector<double>& entries) {
    if (arity < 1) {
        throw SpecificationError("categorical table arity must be >= 1");
    }
    for (int a : parent_arities) {
        if (a < 1) {
            throw SpecificationError("categorical table parent arity must be >= 1");
        }
    }
    const std::size_t rows = product(parent_arities);
    if (entries.size() != rows * static_cast<std::size_t>(arity)) {
        throw SpecificationError("categorical table has " + std::to_string(entries.size()) +
                                 " entries, expected " + std::to_string(rows * arity));
    }
    for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (int k = 0; k < arity; ++k) {
            const double p = entries[r * arity + k];
            if (!std::isfinite(p) || p < 0.0 || p > 1.0 + kNormalizationTolerance) {
                throw SpecificationError("categorical table entry out of [0,1] in row " + std::to_string(r));
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > kNormalizationTolerance) {
            throw SpecificationError("categorical table row " + std::to_string(r) + " sums to " +
                                     std::to_string(sum));
        }
    }
}

// Comonotone coupling of all rows of a CPT: the union of every row's CDF
// breakpoints partitions [0,1) into intervals, one noise category each. Row r
// maps interval j to the category whose CDF step in row r contains it, so
// P(f(r, N) = k) reproduces the CPT exactly.
struct Desugared {
    CategoricalTable noise_prior;
    std::vector<int> lookup;  // [row * noise_arity + j]
};

Desugared desugar(const CategoricalTable& mechanism) {
    const int arity = mechanism.arity();
    const std::size_t rows = mechanism.row_count();
    std::vector<std::vector<double>> cdfs(rows, std::vector<double>(arity));
    std::vector<double> breakpoints{0.0, 1.0};
    for (std::size_t r = 0; r < rows; ++r) {
        auto row = mechanism.row(r);
        double c = 0.0;
        for (int k = 0; k < arity; ++k) {
            c += row[k];
            cdfs[r][k] = c;
        }
        cdfs[r][arity - 1] = 1.0;
        for (int k = 0; k + 1 < arity; ++k) {
            const double v = std::min(cdfs[r][k], 1.0);
            if (v > 0.0 && v < 1.0) {
                breakpoints.push_back(v);
            }
        }
    }
    std::sort(breakpoints.begin(), breakpoints.end());
    breakpoints.erase(std::unique(breakpoints.begin(), breakpoints.end()), breakpoints.end());

    const int noise_arity = static_cast<int>(breakpoints.size()) - 1;
    std::vector<double> weights(noise_arity);
    for (int j = 0; j < noise_arity; ++j) {
        weights[j] = breakpoints[j + 1] - breakpoints[j];
    }
    std::vector<int> lookup(rows * noise_arity);
    for (std::size_t r = 0; r < rows; ++r) {
        for (int j = 0; j < noise_arity; ++j) {
            const double mid = 0.5 * (breakpoints[j] + breakpoints[j + 1]);
            int k = 0;
            while (k + 1 < arity && !(mid < cdfs[r][k])) {
                ++k;
            }
            lookup[r * noise_arity + j] = k;
        }
    }
    return {CategoricalTable({}, noise_arity, std::move(weights)), std::move(lookup)};
}

std::vector<bool> ancestors_of(const ScmSpec& spec, const std::vector<int>& seeds) {
    std::vector<bool> marked(spec.size(), false);
    std::vector<int> stack(seeds.begin(), seeds.end());
    while (!stack.empty()) {
        const int v = stack.back();
        stack.pop_back();
        if (marked[v]) {
            continue;
        }
        marked[v] = true;
        for (int p : spec.variable(v).parents) {
            stack.push_back(p);
        }
    }
    return marked;
}

struct PreparedQuery {
    ScmSpec model;
    int target = -1;
    std::vector<std::pair<int, int>> evidence;  // (variable, category)
    std::vector<bool> relevant;
};

PreparedQuery prepare(const ScmSpec& spec, std::string_view target, const Evidence& ev,
                      const Intervention& iv) {
    PreparedQuery q{iv.assignments.empty() ? spec : mutilate(spec, iv), -1, {}, {}};
    if (iv.assignments.contains(target)) {
        throw UsageError("query target '" + std::string(target) + "' is intervened on");
    }
    q.target = q.model.index_of(target);
    std::vector<int> seeds{q.target};
    for (const auto& [name, value] : ev.assignments) {
        if (iv.assignments.contains(name)) {
            throw UsageError("variable '" + name + "' appears as both evidence and intervention");
        }
        const int index = q.model.index_of(name);
        if (value < 0 || value >= q.model.variable(index).id.arity) {
            throw UsageError("evidence value out of range for '" + name + "'");
        }
        q.evidence.emplace_back(index, value);
        seeds.push_back(index);
    }
    q.relevant = ancestors_of(q.model, seeds);
    return q;
}

}  // namespace

// ---------------------------------------------------------------------------
// CategoricalTable

CategoricalTable::CategoricalTable(std::vector<int> parent_arities, int arity, std::vector<double> entries)
    : parent_arities_(std::move(parent_arities)), arity_(arity), entries_(std::move(entries)) {
    check_table(parent_arities_, arity_, entries_);
}

CategoricalTable::CategoricalTable(std::vector<int> parent_arities, const std::vector<std::vector<double>>& rows)
    : parent_arities_(std::move(parent_arities)) {
    if (rows.empty()) {
        throw SpecificationError("categorical table needs at least one row");
    }
    arity_ = static_cast<int>(rows.front().size());
    for (const auto& row : rows) {
        if (static_cast<int>(row.size()) != arity_) {
            throw SpecificationError("categorical table rows have differing lengths");
        }
        entries_.insert(entries_.end(), row.begin(), row.end());
    }
    check_table(parent_arities_, arity_, entries_);
}

CategoricalTable CategoricalTable::root(std::vector<double> probabilities) {
    const int arity = static_cast<int>(probabilities.size());
    return CategoricalTable({}, arity, std::move(probabilities));
}

std::span<const double> CategoricalTable::row(std::size_t index) const {
    if (index >= row_count()) {
        throw UsageError("categorical table row index out of range");
    }
    return std::span<const double>(entries_).subspan(index * arity_, arity_);
}

double CategoricalTable::at(std::size_t row_index, int category) const {
    if (category < 0 || category >= arity_) {
        throw UsageError("categorical table category out of range");
    }
    return row(row_index)[category];
}

std::size_t CategoricalTable::row_index(std::span<const int> parent_values) const {
    if (parent_values.size() != parent_arities_.size()) {
        throw UsageError("wrong number of parent values for categorical table");
    }
    std::size_t code = 0;
    for (std::size_t i = 0; i < parent_values.size(); ++i) {
        if (parent_values[i] < 0 || parent_values[i] >= parent_arities_[i]) {
            throw UsageError("parent value out of range for categorical table");
        }
        code = code * parent_arities_[i] + parent_values[i];
    }
    return code;
}

// ---------------------------------------------------------------------------
// ScmSpec

std::optional<int> ScmSpec::find(std::string_view name) const {
    for (std::size_t i = 0; i < variables_.size(); ++i) {
        if (variables_[i].id.name == name) {
            return static_cast<int>(i);
        }
    }
    return std::nullopt;
}

int ScmSpec::index_of(std::string_view name) const {
    if (auto index = find(name)) {
        return *index;
    }
    throw UsageError("unknown variable '" + std::string(name) + "'");
}

bool ScmSpec::has_edge(std::string_view from, std::string_view to) const {
    const auto f = find(from);
    const auto t = find(to);
    if (!f || !t) {
        return false;
    }
    const auto& parents = variables_[*t].parents;
    return std::find(parents.begin(), parents.end(), *f) != parents.end();
}

std::size_t ScmSpec::parent_code(int index, std::span<const int> assignment) const {
    std::size_t code = 0;
    for (int p : variables_[index].parents) {
        code = code * variables_[p].id.arity + assignment[p];
    }
    return code;
}

ScmSpec ScmSpec::finalize(std::vector<Variable> variables) {
    const int n = static_cast<int>(variables.size());
    std::set<std::string, std::less<>> names;
    for (const auto& v : variables) {
        if (v.id.name.empty()) {
            throw SpecificationError("variable names must be non-empty");
        }
        if (!names.insert(v.id.name).second) {
            throw SpecificationError("duplicate variable name '" + v.id.name + "'");
        }
        if (v.id.arity < 1) {
            throw SpecificationError("variable '" + v.id.name + "' has arity < 1");
        }
    }
    std::vector<std::vector<int>> children(n);
    std::vector<int> in_degree(n, 0);
    for (int i = 0; i < n; ++i) {
        const auto& v = variables[i];
        if (v.exogenous) {
            if (!v.parents.empty()) {
                throw SpecificationError("exogenous variable '" + v.id.name + "' has parents");
            }
            if (!v.prior.parent_arities().empty() || v.prior.arity() != v.id.arity) {
                throw SpecificationError("prior of '" + v.id.name + "' does not match its arity");
            }
            continue;
        }
        std::vector<int> arities;
        for (int p : v.parents) {
            if (p < 0 || p >= n) {
                throw SpecificationError("variable '" + v.id.name + "' has a dangling parent");
            }
            arities.push_back(variables[p].id.arity);
            children[p].push_back(i);
            ++in_degree[i];
        }
        if (v.outputs.size() != product(arities)) {
            throw SpecificationError("assignment table of '" + v.id.name + "' has wrong size");
        }
        for (int out : v.outputs) {
            if (out < 0 || out >= v.id.arity) {
                throw SpecificationError("assignment of '" + v.id.name + "' produces an out-of-range value");
            }
        }
    }
    // Kahn's algorithm, always releasing the lowest ready index first.
    std::set<int> ready;
    for (int i = 0; i < n; ++i) {
        if (in_degree[i] == 0) {
            ready.insert(i);
        }
    }
    std::vector<int> order;
    while (!ready.empty()) {
        const int v = *ready.begin();
        ready.erase(ready.begin());
        order.push_back(v);
        for (int c : children[v]) {
            if (--in_degree[c] == 0) {
                ready.insert(c);
            }
        }
    }
    if (static_cast<int>(order.size()) != n) {
        throw SpecificationError("causal graph contains a cycle");
    }
    ScmSpec spec;
    spec.variables_ = std::move(variables);
    spec.order_ = std::move(order);
    return spec;
}

// ---------------------------------------------------------------------------
// ScmBuilder

ScmBuilder& ScmBuilder::exogenous(VariableId id, CategoricalTable prior) {
    pending_.push_back({std::move(id), true, {}, std::move(prior), std::nullopt});
    return *this;
}

ScmBuilder& ScmBuilder::endogenous(VariableId id, std::vector<std::string> parents, DeterministicRule rule) {
    pending_.push_back({std::move(id), false, std::move(parents), {}, std::move(rule)});
    return *this;
}

ScmBuilder& ScmBuilder::endogenous(VariableId id, std::vector<std::string> parents,
                                   CategoricalTable mechanism) {
    pending_.push_back({std::move(id), false, std::move(parents), std::move(mechanism), std::nullopt});
    return *this;
}

ScmSpec ScmBuilder::build() const {
    // Noise variables are placed immediately before their owner.
    std::vector<std::string> names;
    for (const auto& p : pending_) {
        if (!p.exogenous && !p.rule) {
            names.push_back("~" + p.id.name);
        }
        names.push_back(p.id.name);
    }
    auto lookup = [&](const std::string& name, const std::string& owner) {
        const auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) {
            throw SpecificationError("variable '" + owner + "' references unknown parent '" + name + "'");
        }
        return static_cast<int>(it - names.begin());
    };

    std::vector<ScmSpec::Variable> vars;
    for (const auto& p : pending_) {
        if (p.exogenous) {
            ScmSpec::Variable v;
            v.id = p.id;
            v.exogenous = true;
            v.prior = p.table;
            vars.push_back(std::move(v));
            continue;
        }
        ScmSpec::Variable v;
        v.id = p.id;
        for (const auto& parent : p.parents) {
            v.parents.push_back(lookup(parent, p.id.name));
        }
        if (p.rule) {
            v.outputs = p.rule->outputs;
            vars.push_back(std::move(v));
            continue;
        }
        if (p.table.arity() != p.id.arity) {
            throw SpecificationError("mechanism of '" + p.id.name + "' does not match its arity");
        }
        if (p.table.parent_arities().size() != p.parents.size()) {
            throw SpecificationError("mechanism of '" + p.id.name + "' has wrong parent count");
        }
        auto sugar = desugar(p.table);
        ScmSpec::Variable noise;
        noise.id = {"~" + p.id.name, sugar.noise_prior.arity()};
        noise.exogenous = true;
        noise.prior = std::move(sugar.noise_prior);
        noise.noise_owner = static_cast<int>(vars.size()) + 1;
        v.parents.push_back(static_cast<int>(vars.size()));
        v.outputs = std::move(sugar.lookup);
        v.mechanism = p.table;
        vars.push_back(std::move(noise));
        vars.push_back(std::move(v));
    }
    for (std::size_t i = 0; i < vars.size(); ++i) {
        if (!vars[i].mechanism) {
            continue;
        }
        const auto& declared = vars[i].mechanism->parent_arities();
        for (std::size_t k = 0; k < declared.size(); ++k) {
            const int parent = vars[i].parents[k];
            if (parent < 0 || parent >= static_cast<int>(vars.size()) ||
                vars[parent].id.arity != declared[k]) {
                throw SpecificationError("mechanism of '" + vars[i].id.name +
                                         "' disagrees with its parents' arities");
            }
        }
    }
    return ScmSpec::finalize(std::move(vars));
}

// ---------------------------------------------------------------------------
// Operations

std::vector<int> sample_world(const ScmSpec& spec, Rng& rng) {
    std::vector<int> world(spec.size(), 0);
    for (int v : spec.topological_order()) {
        const auto& var = spec.variable(v);
        if (var.exogenous) {
            world[v] = sample_categorical(var.prior.row(0), rng.uniform());
        } else {
            world[v] = var.outputs[spec.parent_code(v, world)];
        }
    }
    return world;
}

ScmSpec mutilate(const ScmSpec& spec, const Intervention& iv) {
    std::vector<ScmSpec::Variable> vars = spec.variables();
    std::vector<bool> drop(vars.size(), false);
    for (const auto& [name, value] : iv.assignments) {
        const int index = spec.index_of(name);
        auto& v = vars[index];
        if (v.exogenous) {
            throw UsageError("cannot intervene on exogenous variable '" + name + "'");
        }
        if (value < 0 || value >= v.id.arity) {
            throw UsageError("intervention value out of range for '" + name + "'");
        }
        v.parents.clear();
        v.outputs = {value};
        v.mechanism.reset();
        for (std::size_t j = 0; j < vars.size(); ++j) {
            if (vars[j].noise_owner == index) {
                drop[j] = true;
            }
        }
    }
    std::vector<int> remap(vars.size(), -1);
    std::vector<ScmSpec::Variable> kept;
    for (std::size_t i = 0; i < vars.size(); ++i) {
        if (!drop[i]) {
            remap[i] = static_cast<int>(kept.size());
            kept.push_back(std::move(vars[i]));
        }
    }
    for (auto& v : kept) {
        for (int& p : v.parents) {
            p = remap[p];
        }
        if (v.noise_owner >= 0) {
            v.noise_owner = remap[v.noise_owner];
        }
    }
    return ScmSpec::finalize(std::move(kept));
}

Dist exact_query(const ScmSpec& spec, std::string_view target, const Evidence& ev, const Intervention& iv,
                 const ExactOptions& options) {
    PreparedQuery q = prepare(spec, target, ev, iv);
    const ScmSpec& m = q.model;

    std::vector<int> exo;
    std::vector<int> endo;
    for (int v : m.topological_order()) {
        if (!q.relevant[v]) {
            continue;
        }
        (m.variable(v).exogenous ? exo : endo).push_back(v);
    }
    std::uint64_t combos = 1;
    for (int v : exo) {
        const auto arity = static_cast<std::uint64_t>(m.variable(v).id.arity);
        if (combos > options.enumeration_limit / arity) {
            throw CapacityError("exact query would enumerate more than " +
                                std::to_string(options.enumeration_limit) + " exogenous assignments");
        }
        combos *= arity;
    }

    std::vector<double> mass(m.variable(q.target).id.arity, 0.0);
    std::vector<int> world(m.size(), 0);
    bool done = false;
    while (!done) {
        double weight = 1.0;
        for (int v : exo) {
            weight *= m.variable(v).prior.entries()[world[v]];
        }
        if (weight > 0.0) {
            for (int v : endo) {
                world[v] = m.variable(v).outputs[m.parent_code(v, world)];
            }
            bool consistent = true;
            for (const auto& [v, value] : q.evidence) {
                if (world[v] != value) {
                    consistent = false;
                    break;
                }
            }
            if (consistent) {
                mass[world[q.target]] += weight;
            }
        }
        // Odometer over exogenous assignments, last variable fastest.
        done = true;
        for (auto it = exo.rbegin(); it != exo.rend(); ++it) {
            if (++world[*it] < m.variable(*it).id.arity) {
                done = false;
                break;
            }
            world[*it] = 0;
        }
    }
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (!(total > 0.0)) {
        throw ZeroProbabilityEvidenceError("evidence has probability zero in query for '" +
                                           std::string(target) + "'");
    }
    for (double& p : mass) {
        p /= total;
    }
    return {std::string(target), std::move(mass)};
}

Dist importance_query(const ScmSpec& spec, std::string_view target, const Evidence& ev, const Intervention& iv,
                      std::size_t n_particles, Rng& rng) {
    if (n_particles == 0) {
        throw UsageError("importance_query needs at least one particle");
    }
    PreparedQuery q = prepare(spec, target, ev, iv);
    const ScmSpec& m = q.model;

    std::vector<int> observed(m.size(), -1);
    for (const auto& [v, value] : q.evidence) {
        observed[v] = value;
    }
    // Noise of a clamped stochastic node is never consulted.
    std::vector<bool> skip(m.size(), false);
    for (const auto& [v, value] : q.evidence) {
        if (m.variable(v).mechanism) {
            skip[m.variable(v).parents.back()] = true;
        }
    }
    std::vector<int> order;
    for (int v : m.topological_order()) {
        if (q.relevant[v] && !skip[v]) {
            order.push_back(v);
        }
    }

    std::vector<double> mass(m.variable(q.target).id.arity, 0.0);
    std::vector<int> world(m.size(), 0);
    std::vector<int> mechanism_parents;
    for (std::size_t n = 0; n < n_particles; ++n) {
        double weight = 1.0;
        for (int v : order) {
            const auto& var = m.variable(v);
            if (var.exogenous) {
                if (observed[v] >= 0) {
                    world[v] = observed[v];
                    weight *= var.prior.entries()[observed[v]];
                } else {
                    world[v] = sample_categorical(var.prior.row(0), rng.uniform());
                }
            } else if (observed[v] >= 0 && var.mechanism) {
                mechanism_parents.clear();
                for (std::size_t k = 0; k + 1 < var.parents.size(); ++k) {
                    mechanism_parents.push_back(world[var.parents[k]]);
                }
                world[v] = observed[v];
                weight *= var.mechanism->at(var.mechanism->row_index(mechanism_parents), observed[v]);
            } else {
                world[v] = var.outputs[m.parent_code(v, world)];
                if (observed[v] >= 0 && world[v] != observed[v]) {
                    weight = 0.0;
                }
            }
            if (weight == 0.0) {
                break;
            }
        }
        if (weight > 0.0) {
            mass[world[q.target]] += weight;
        }
    }
    const double total = std::accumulate(mass.begin(), mass.end(), 0.0);
    if (!(total > 0.0)) {
        throw DegenerateEvidenceError("all " + std::to_string(n_particles) +
                                      " particles have zero weight for '" + std::string(target) + "'");
    }
    for (double& p : mass) {
        p /= total;
    }
    return {std::string(target), std::move(mass)};
}

double kl_divergence(std::span<const double> p, std::span<const double> q) {
    if (p.size() != q.size()) {
        throw UsageError("kl_divergence: supports differ in size");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) {
            continue;
        }
        if (q[i] <= 0.0) {
            return std::numeric_limits<double>::infinity();
        }
        sum += p[i] * std::log(p[i] / q[i]);
    }
    // Rounding can push an essentially-zero divergence below 0.
    return std::max(sum, 0.0);
}

double kl_divergence(const Dist& p, const Dist& q) {
    if (p.variable != q.variable) {
        throw UsageError("kl_divergence: distributions over different variables");
    }
    return kl_divergence(p.probabilities, q.probabilities);
}

double total_variation(const Dist& p, const Dist& q) {
    if (p.size() != q.size()) {
        throw UsageError("total_variation: supports differ in size");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        sum += std::abs(p[i] - q[i]);
    }
    return 0.5 * sum;
}

}  // namespace cpomdp::scm
