#pragma once

// Discrete structural causal models: exogenous categorical priors plus
// deterministic assignment functions over a DAG. Stochastic mechanisms are
// accepted at construction time and desugared into a private exogenous noise
// variable and a deterministic lookup, so every built ScmSpec is a pure
// u ~ P(U), v := f(u, pa) model.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cpomdp/random.hpp"

namespace cpomdp::scm {

inline constexpr double kNormalizationTolerance = 1e-9;
inline constexpr std::uint64_t kDefaultEnumerationLimit = 10'000'000;

struct VariableId {
    std::string name;
    int arity = 1;

    bool operator==(const VariableId&) const = default;
};

/// Conditional probability table. Rows are indexed by the mixed-radix code of
/// the parent assignment, first parent most significant.
class CategoricalTable {
public:
    CategoricalTable() = default;
    CategoricalTable(std::vector<int> parent_arities, int arity, std::vector<double> entries);
    CategoricalTable(std::vector<int> parent_arities, const std::vector<std::vector<double>>& rows);

    /// Parentless table with a single row.
    static CategoricalTable root(std::vector<double> probabilities);

    int arity() const noexcept { return arity_; }
    const std::vector<int>& parent_arities() const noexcept { return parent_arities_; }
    std::size_t row_count() const noexcept { return arity_ == 0 ? 0 : entries_.size() / arity_; }
    bool empty() const noexcept { return entries_.empty(); }

    std::span<const double> row(std::size_t index) const;
    double at(std::size_t row_index, int category) const;
    const std::vector<double>& entries() const noexcept { return entries_; }

    std::size_t row_index(std::span<const int> parent_values) const;

    bool operator==(const CategoricalTable&) const = default;

private:
    std::vector<int> parent_arities_;
    int arity_ = 0;
    std::vector<double> entries_;
};

/// Deterministic assignment: outputs[row] is the category for each parent
/// assignment code.
struct DeterministicRule {
    std::vector<int> outputs;

    bool operator==(const DeterministicRule&) const = default;
};

using Assignment = std::map<std::string, int, std::less<>>;

/// do(X = x) for each entry. Only endogenous variables may appear.
struct Intervention {
    Assignment assignments;
};

struct Evidence {
    Assignment assignments;
};

/// Distribution over the categories 0..n-1 of one variable.
struct Dist {
    std::string variable;
    std::vector<double> probabilities;

    std::size_t size() const noexcept { return probabilities.size(); }
    double operator[](std::size_t i) const { return probabilities[i]; }

    bool operator==(const Dist&) const = default;
};

class ScmSpec {
public:
    struct Variable {
        VariableId id;
        bool exogenous = false;
        std::vector<int> parents;
        CategoricalTable prior;                    // exogenous only
        std::vector<int> outputs;                  // endogenous only
        std::optional<CategoricalTable> mechanism; // original CPT of a desugared node
        int noise_owner = -1;                      // set on desugaring noise variables

        bool operator==(const Variable&) const = default;
    };

    std::size_t size() const noexcept { return variables_.size(); }
    const Variable& variable(int index) const { return variables_.at(index); }
    const std::vector<Variable>& variables() const noexcept { return variables_; }
    const std::vector<int>& topological_order() const noexcept { return order_; }

    std::optional<int> find(std::string_view name) const;
    /// Throws UsageError for unknown names.
    int index_of(std::string_view name) const;

    bool has_edge(std::string_view from, std::string_view to) const;

    /// Code of the assignment to `index`'s parents, read from a full assignment.
    std::size_t parent_code(int index, std::span<const int> assignment) const;

    bool operator==(const ScmSpec& other) const { return variables_ == other.variables_; }

private:
    friend class ScmBuilder;
    friend ScmSpec mutilate(const ScmSpec&, const Intervention&);

    static ScmSpec finalize(std::vector<Variable> variables);

    std::vector<Variable> variables_;
    std::vector<int> order_;
};

class ScmBuilder {
public:
    ScmBuilder& exogenous(VariableId id, CategoricalTable prior);
    ScmBuilder& endogenous(VariableId id, std::vector<std::string> parents, DeterministicRule rule);
    /// Stochastic node; desugared into a noise variable named "~<name>".
    ScmBuilder& endogenous(VariableId id, std::vector<std::string> parents, CategoricalTable mechanism);

    /// Validates names, arities, table shapes, normalization and acyclicity.
    /// Throws SpecificationError.
    ScmSpec build() const;

private:
    struct Pending {
        VariableId id;
        bool exogenous = false;
        std::vector<std::string> parents;
        CategoricalTable table;
        std::optional<DeterministicRule> rule;
    };
    std::vector<Pending> pending_;
};

/// One full draw: index i of the result is the value of spec.variable(i).
std::vector<int> sample_world(const ScmSpec& spec, Rng& rng);

/// Graph surgery: each intervened variable becomes a parentless constant and
/// loses its private noise variable. Throws UsageError for exogenous targets.
ScmSpec mutilate(const ScmSpec& spec, const Intervention& iv);

struct ExactOptions {
    std::uint64_t enumeration_limit = kDefaultEnumerationLimit;
};

/// P(target | evidence, do(iv)) by enumeration of the relevant exogenous
/// variables of the mutilated model.
Dist exact_query(const ScmSpec& spec, std::string_view target, const Evidence& ev,
                 const Intervention& iv, const ExactOptions& options = {});

/// Self-normalized likelihood weighting with the mutilated prior as proposal.
/// Evidence on a stochastic node is clamped and weighted by its mechanism.
Dist importance_query(const ScmSpec& spec, std::string_view target, const Evidence& ev,
                      const Intervention& iv, std::size_t n_particles, Rng& rng);

/// sum p ln(p/q), with 0 ln(0/q) = 0. Returns +infinity when p > 0 where q = 0.
double kl_divergence(std::span<const double> p, std::span<const double> q);
double kl_divergence(const Dist& p, const Dist& q);

double total_variation(const Dist& p, const Dist& q);

}  // namespace cpomdp::scm
