#pragma once

// Offline estimation of P(U), P_UC(dS|A,U) and P_0(dS|A) from records in
// which the confounder value is visible.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "cpomdp/causal_model.hpp"
#include "cpomdp/ucpomdp.hpp"

namespace cpomdp::learning {

struct Record {
    bool uc = false;
    int u = 0;
    int a = 0;
    int ds = 0;

    bool operator==(const Record&) const = default;
};

struct Dataset {
    std::vector<Record> records;
    std::uint64_t seed = 0;
    std::string model_id;
    int arity_u = 0;
    int arity_a = 0;
    int arity_ds = 0;

    std::size_t size() const noexcept { return records.size(); }

    bool operator==(const Dataset&) const = default;
};

Dataset generate_dataset(const pomdp::UcPomdpModel& truth, std::size_t n, std::uint64_t seed);

struct LearnedParams {
    scm::CategoricalTable p_u;
    scm::CategoricalTable p_uc;
    scm::CategoricalTable p_0;
    std::size_t n = 0;
    double smoothing = 1.0;
    std::uint64_t seed = 0;
    std::string model_id;
    // Observed records per row, before smoothing.
    std::vector<std::size_t> counts_u;
    std::vector<std::size_t> counts_uc;
    std::vector<std::size_t> counts_0;

    bool operator==(const LearnedParams&) const = default;
};

inline constexpr double kDefaultSmoothing = 1.0;

/// Smoothed counts: (count + s) / (row total + arity * s).
LearnedParams fit(const Dataset& dataset, double smoothing = kDefaultSmoothing);

/// Structure with the three learned tables substituted. Throws UsageError on
/// an arity mismatch.
pomdp::UcPomdpModel assemble_model(const pomdp::UcPomdpModel& structure, const LearnedParams& params);

/// Mean over (s, a, u) contexts of KL(truth row || learned row) for P(S'|s,a,u).
double eval_kl_full_transition(const pomdp::UcPomdpModel& learned, const pomdp::UcPomdpModel& truth);

struct ParamErrors {
    double p_u = 0.0;
    double p_uc = 0.0;
    double p_0 = 0.0;
};

/// Largest absolute entry difference per table.
ParamErrors max_abs_errors(const pomdp::UcPomdpModel& learned, const pomdp::UcPomdpModel& truth);

void write_dataset_csv(std::ostream& out, const Dataset& dataset);
/// Throws ParseError.
Dataset read_dataset_csv(std::istream& in);

void write_params(std::ostream& out, const LearnedParams& params);
/// Throws ParseError.
LearnedParams read_params(std::istream& in);

void save_dataset(const std::string& path, const Dataset& dataset);
Dataset load_dataset(const std::string& path);
void save_params(const std::string& path, const LearnedParams& params);
LearnedParams load_params(const std::string& path);

}  // namespace cpomdp::learning
