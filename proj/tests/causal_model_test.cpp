#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cpomdp/causal_model.hpp"
#include "cpomdp/error.hpp"
#include "cpomdp/gridworld.hpp"
#include "cpomdp/ucpomdp.hpp"

using namespace cpomdp;
using namespace cpomdp::scm;

namespace {

// Confounded-cell posterior P(u | A=UP) from the reactive table and prior.
constexpr double kUpGivenU[3] = {0.85, 0.05, 0.85};
constexpr double kPu[3] = {0.10, 0.80, 0.10};
constexpr double kUpMass = 0.85 * 0.10 + 0.05 * 0.80 + 0.85 * 0.10;  // 0.21

ScmSpec identity_spec() {
    return ScmBuilder()
        .exogenous({"U", 3}, CategoricalTable::root({0.1, 0.8, 0.1}))
        .endogenous({"V", 3}, {"U"}, DeterministicRule{{0, 1, 2}})
        .build();
}

// U -> X -> Y with U -> Y; X stochastic given U.
ScmSpec confounded_spec() {
    return ScmBuilder()
        .exogenous({"U", 2}, CategoricalTable::root({0.3, 0.7}))
        .endogenous({"X", 2}, {"U"}, CategoricalTable({2}, {{0.9, 0.1}, {0.2, 0.8}}))
        .endogenous({"Y", 2}, {"X", "U"}, CategoricalTable({2, 2}, {{0.6, 0.4}, {0.1, 0.9}, {0.5, 0.5}, {0.3, 0.7}}))
        .build();
}

pomdp::UcPomdpModel grid_model() { return grid::build_model(grid::default_map()); }

ScmSpec confounded_cell_scm() {
    const auto model = grid_model();
    for (int s = 0; s < model.num_states; ++s) {
        if (model.confounded[s]) {
            return pomdp::step_scm(model, s);
        }
    }
    throw std::logic_error("no confounded cell");
}

double sum(const Dist& d) { return std::accumulate(d.probabilities.begin(), d.probabilities.end(), 0.0); }

}  // namespace

TEST(CategoricalTable, RejectsUnnormalizedRows) {
    EXPECT_THROW(CategoricalTable::root({0.5, 0.6}), SpecificationError);
    EXPECT_THROW(CategoricalTable::root({1.2, -0.2}), SpecificationError);
    EXPECT_THROW(CategoricalTable({2}, 2, {0.5, 0.5, 1.0}), SpecificationError);
    EXPECT_NO_THROW(CategoricalTable::root({0.1, 0.2, 0.7}));
}

TEST(CategoricalTable, MixedRadixRowIndex) {
    const CategoricalTable t({2, 3}, 2, std::vector<double>(12, 0.5));
    const int pa[] = {1, 2};
    EXPECT_EQ(t.row_index(pa), 5u);
    EXPECT_EQ(t.row_count(), 6u);
}

TEST(ScmBuilder, RejectsCycles) {
    ScmBuilder b;
    b.exogenous({"U", 2}, CategoricalTable::root({0.5, 0.5}));
    b.endogenous({"A", 2}, {"B"}, DeterministicRule{{0, 1}});
    b.endogenous({"B", 2}, {"A"}, DeterministicRule{{0, 1}});
    EXPECT_THROW(b.build(), SpecificationError);
}

TEST(ScmBuilder, RejectsDanglingAndDuplicateNames) {
    EXPECT_THROW(ScmBuilder().endogenous({"A", 2}, {"missing"}, DeterministicRule{{0, 1}}).build(),
                 SpecificationError);
    EXPECT_THROW(ScmBuilder()
                     .exogenous({"U", 2}, CategoricalTable::root({0.5, 0.5}))
                     .exogenous({"U", 2}, CategoricalTable::root({0.5, 0.5}))
                     .build(),
                 SpecificationError);
    EXPECT_THROW(ScmBuilder()
                     .exogenous({"U", 2}, CategoricalTable::root({0.5, 0.5}))
                     .endogenous({"V", 2}, {"U"}, DeterministicRule{{0, 2}})
                     .build(),
                 SpecificationError);
}

TEST(ScmBuilder, StochasticNodeGetsPrivateNoise) {
    const ScmSpec spec = confounded_spec();
    ASSERT_TRUE(spec.find("~X").has_value());
    EXPECT_TRUE(spec.variable(*spec.find("~X")).exogenous);
    EXPECT_TRUE(spec.has_edge("~X", "X"));
    EXPECT_TRUE(spec.has_edge("U", "X"));
    EXPECT_FALSE(spec.variable(spec.index_of("X")).exogenous);
}

TEST(ScmBuilder, DesugaringPreservesJointDistribution) {
    const ScmSpec spec = confounded_spec();
    // P(Y=1) = sum_u P(u) sum_x P(x|u) P(Y=1|x,u)
    const double py1 = 0.3 * (0.9 * 0.4 + 0.1 * 0.5) + 0.7 * (0.2 * 0.9 + 0.8 * 0.7);
    const Dist y = exact_query(spec, "Y", {}, {});
    EXPECT_NEAR(y[1], py1, 1e-12);
    const Dist x = exact_query(spec, "X", {}, {});
    EXPECT_NEAR(x[1], 0.3 * 0.1 + 0.7 * 0.8, 1e-12);
}

TEST(SampleWorld, MatchesPriorFrequencies) {
    const ScmSpec spec = identity_spec();
    Rng rng(42);
    std::vector<int> counts(3, 0);
    constexpr int n = 1'000'000;
    const int u = spec.index_of("U");
    for (int i = 0; i < n; ++i) {
        ++counts[sample_world(spec, rng)[u]];
    }
    EXPECT_NEAR(counts[0] / double(n), 0.1, 0.005);
    EXPECT_NEAR(counts[1] / double(n), 0.8, 0.005);
    EXPECT_NEAR(counts[2] / double(n), 0.1, 0.005);
}

TEST(SampleWorld, IdentityAssignment) {
    const ScmSpec spec = identity_spec();
    Rng rng(7);
    for (int i = 0; i < 10000; ++i) {
        const auto w = sample_world(spec, rng);
        ASSERT_EQ(w[spec.index_of("V")], w[spec.index_of("U")]);
    }
}

TEST(SampleWorld, ConfoundedStepJointMatchesEnumeration) {
    const ScmSpec spec = confounded_cell_scm();
    const int iu = spec.index_of("U");
    const int ia = spec.index_of("A");
    const int ids = spec.index_of("dS");
    std::vector<double> counts(3 * 4 * 4, 0.0);
    Rng rng(2024);
    constexpr int n = 1'000'000;
    for (int i = 0; i < n; ++i) {
        const auto w = sample_world(spec, rng);
        counts[(w[iu] * 4 + w[ia]) * 4 + w[ids]] += 1.0;
    }
    const auto& table = grid::reactive_table();
    for (int u = 0; u < 3; ++u) {
        for (int a = 0; a < 4; ++a) {
            const auto rel = grid::relative_transition(static_cast<grid::Action>(a),
                                                       static_cast<grid::OrientationError>(u), true);
            for (int ds = 0; ds < 4; ++ds) {
                const double exact = kPu[u] * table[u][a] * rel[ds];
                EXPECT_NEAR(counts[(u * 4 + a) * 4 + ds] / n, exact, 0.01);
            }
        }
    }
}

TEST(Mutilate, RemovesIncomingEdges) {
    const ScmSpec spec = confounded_cell_scm();
    ASSERT_TRUE(spec.has_edge("U", "A"));
    const ScmSpec cut = mutilate(spec, Intervention{{{"A", 1}}});
    EXPECT_FALSE(cut.has_edge("U", "A"));
    EXPECT_TRUE(cut.has_edge("U", "dS"));
    EXPECT_FALSE(cut.find("~A").has_value());
}

TEST(Mutilate, EmptyInterventionIsIdentity) {
    const ScmSpec spec = confounded_spec();
    EXPECT_EQ(mutilate(spec, Intervention{}), spec);
}

TEST(Mutilate, Idempotent) {
    const ScmSpec spec = confounded_spec();
    const Intervention iv{{{"X", 1}}};
    const ScmSpec once = mutilate(spec, iv);
    EXPECT_EQ(mutilate(once, iv), once);
}

TEST(Mutilate, CommutesOverDisjointInterventions) {
    const ScmSpec spec = confounded_spec();
    const Intervention x{{{"X", 0}}};
    const Intervention y{{{"Y", 1}}};
    EXPECT_EQ(mutilate(mutilate(spec, x), y), mutilate(mutilate(spec, y), x));
    EXPECT_EQ(mutilate(mutilate(spec, x), y), mutilate(spec, Intervention{{{"X", 0}, {"Y", 1}}}));
}

TEST(Mutilate, RejectsExogenousTarget) {
    EXPECT_THROW(mutilate(confounded_spec(), Intervention{{{"U", 0}}}), UsageError);
}

TEST(ExactQuery, InterventionalForwardAtConfoundedCell) {
    const Dist d = exact_query(confounded_cell_scm(), "dS", {}, Intervention{{{"A", 1}}});
    // 0.8*0.9 + 0.1*0.05 + 0.1*0.05
    EXPECT_NEAR(d[0], 0.73, 1e-12);
    EXPECT_NEAR(d[1], 0.13, 1e-12);
    EXPECT_NEAR(d[2], 0.01, 1e-12);
    EXPECT_NEAR(d[3], 0.13, 1e-12);
}

TEST(ExactQuery, ObservationalForwardAtConfoundedCell) {
    const Dist d = exact_query(confounded_cell_scm(), "dS", Evidence{{{"A", 1}}}, {});
    double posterior[3];
    for (int u = 0; u < 3; ++u) {
        posterior[u] = kUpGivenU[u] * kPu[u] / kUpMass;
    }
    EXPECT_NEAR(posterior[0], 0.404762, 1e-6);
    EXPECT_NEAR(posterior[1], 0.190476, 1e-6);
    const double north = posterior[0] * 0.05 + posterior[1] * 0.90 + posterior[2] * 0.05;
    EXPECT_NEAR(d[0], north, 1e-12);
    EXPECT_NEAR(d[0], 0.211905, 1e-6);
    EXPECT_NEAR(d[1], 0.373810, 1e-6);
    EXPECT_NEAR(d[3], 0.373810, 1e-6);
    EXPECT_NEAR(d[2], 0.040476, 1e-6);
}

TEST(ExactQuery, RootMarginalIsPrior) {
    const Dist d = exact_query(identity_spec(), "U", {}, {});
    EXPECT_NEAR(d[0], 0.1, 1e-15);
    EXPECT_NEAR(d[1], 0.8, 1e-15);
    EXPECT_NEAR(d[2], 0.1, 1e-15);
}

TEST(ExactQuery, ZeroProbabilityEvidence) {
    const ScmSpec spec = ScmBuilder()
                             .exogenous({"U", 2}, CategoricalTable::root({1.0, 0.0}))
                             .endogenous({"V", 2}, {"U"}, DeterministicRule{{0, 1}})
                             .build();
    EXPECT_THROW(exact_query(spec, "U", Evidence{{{"V", 1}}}, {}), ZeroProbabilityEvidenceError);
}

TEST(ExactQuery, CapacityLimit) {
    // Eight ancestors of arity 10: 10^8 joint assignments.
    ScmBuilder b;
    std::vector<std::string> mids;
    for (int i = 0; i < 4; ++i) {
        const std::string l = "U" + std::to_string(2 * i);
        const std::string r = "U" + std::to_string(2 * i + 1);
        b.exogenous({l, 10}, CategoricalTable::root(std::vector<double>(10, 0.1)));
        b.exogenous({r, 10}, CategoricalTable::root(std::vector<double>(10, 0.1)));
        mids.push_back("M" + std::to_string(i));
        b.endogenous({mids.back(), 1}, {l, r}, DeterministicRule{std::vector<int>(100, 0)});
    }
    b.endogenous({"V", 1}, mids, DeterministicRule{{0}});
    const ScmSpec spec = b.build();
    EXPECT_THROW(exact_query(spec, "V", {}, {}), CapacityError);
    EXPECT_THROW(exact_query(spec, "M0", {}, {}, ExactOptions{99}), CapacityError);
    EXPECT_NO_THROW(exact_query(spec, "M0", {}, {}, ExactOptions{100}));
}

TEST(ExactQuery, UsageErrors) {
    const ScmSpec spec = confounded_spec();
    EXPECT_THROW(exact_query(spec, "X", {}, Intervention{{{"X", 0}}}), UsageError);
    EXPECT_THROW(exact_query(spec, "Y", Evidence{{{"X", 0}}}, Intervention{{{"X", 0}}}), UsageError);
    EXPECT_THROW(exact_query(spec, "nope", {}, {}), UsageError);
}

TEST(ExactQuery, NoConfoundingMeansDoEqualsSee) {
    // X has no parents, so conditioning and intervening agree.
    const ScmSpec spec = ScmBuilder()
                             .exogenous({"U", 2}, CategoricalTable::root({0.3, 0.7}))
                             .endogenous({"X", 3}, {}, CategoricalTable::root({0.2, 0.5, 0.3}))
                             .endogenous({"Y", 2}, {"X", "U"},
                                         CategoricalTable({3, 2}, {{0.6, 0.4},
                                                                   {0.1, 0.9},
                                                                   {0.5, 0.5},
                                                                   {0.3, 0.7},
                                                                   {0.8, 0.2},
                                                                   {0.25, 0.75}}))
                             .build();
    for (int x = 0; x < 3; ++x) {
        const Dist see = exact_query(spec, "Y", Evidence{{{"X", x}}}, {});
        const Dist act = exact_query(spec, "Y", {}, Intervention{{{"X", x}}});
        for (std::size_t i = 0; i < see.size(); ++i) {
            EXPECT_NEAR(see[i], act[i], 1e-12);
        }
    }
}

TEST(ExactQuery, OutputsAreNormalized) {
    const ScmSpec spec = confounded_cell_scm();
    for (int a = 0; a < 4; ++a) {
        EXPECT_NEAR(sum(exact_query(spec, "dS", {}, Intervention{{{"A", a}}})), 1.0, 1e-9);
        EXPECT_NEAR(sum(exact_query(spec, "dS", Evidence{{{"A", a}}}, {})), 1.0, 1e-9);
        EXPECT_NEAR(sum(exact_query(spec, "U", Evidence{{{"A", a}}}, {})), 1.0, 1e-9);
    }
}

TEST(ImportanceQuery, ConvergesAt5000Particles) {
    const ScmSpec spec = confounded_cell_scm();
    const Intervention iv{{{"A", 1}}};
    const Dist exact = exact_query(spec, "dS", {}, iv);
    double tv = 0.0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(seed);
        const Dist est = importance_query(spec, "dS", {}, iv, 5000, rng);
        EXPECT_NEAR(sum(est), 1.0, 1e-9);
        tv += total_variation(exact, est);
    }
    EXPECT_LE(tv / 20.0, 0.02);
}

TEST(ImportanceQuery, ObservationalEvidenceWeighting) {
    const ScmSpec spec = confounded_cell_scm();
    const Evidence ev{{{"A", 1}}};
    const Dist exact = exact_query(spec, "dS", ev, {});
    double tv = 0.0;
    for (int seed = 0; seed < 20; ++seed) {
        Rng rng(100 + seed);
        tv += total_variation(exact, importance_query(spec, "dS", ev, {}, 5000, rng));
    }
    EXPECT_LE(tv / 20.0, 0.02);
}

TEST(ImportanceQuery, NoEvidenceIsForwardSampling) {
    const ScmSpec spec = confounded_spec();
    const Dist exact = exact_query(spec, "Y", {}, {});
    Rng rng(5);
    const Dist est = importance_query(spec, "Y", {}, {}, 5000, rng);
    for (std::size_t i = 0; i < exact.size(); ++i) {
        EXPECT_NEAR(est[i], exact[i], 0.02);
    }
}

TEST(ImportanceQuery, MillionParticles) {
    const ScmSpec spec = confounded_cell_scm();
    const Intervention iv{{{"A", 1}}};
    Rng rng(99);
    EXPECT_LE(total_variation(exact_query(spec, "dS", {}, iv), importance_query(spec, "dS", {}, iv, 1'000'000, rng)),
              0.002);
}

TEST(ImportanceQuery, ErrorDecreasesWithParticles) {
    const ScmSpec spec = confounded_cell_scm();
    const Evidence ev{{{"A", 0}}};
    const Dist exact = exact_query(spec, "dS", ev, {});
    double previous = 1.0;
    for (std::size_t n : {100UL, 10'000UL, 1'000'000UL}) {
        double tv = 0.0;
        for (int seed = 0; seed < 20; ++seed) {
            Rng rng(1000 + seed);
            tv += total_variation(exact, importance_query(spec, "dS", ev, {}, n, rng));
        }
        tv /= 20.0;
        EXPECT_LT(tv, previous) << n;
        previous = tv;
    }
}

TEST(ImportanceQuery, DegenerateAndUsageErrors) {
    const ScmSpec spec = ScmBuilder()
                             .exogenous({"U", 2}, CategoricalTable::root({1.0, 0.0}))
                             .endogenous({"V", 2}, {"U"}, DeterministicRule{{0, 1}})
                             .build();
    Rng rng(1);
    EXPECT_THROW(importance_query(spec, "U", Evidence{{{"V", 1}}}, {}, 100, rng), DegenerateEvidenceError);
    EXPECT_THROW(importance_query(spec, "U", {}, {}, 0, rng), UsageError);
}

TEST(KlDivergence, SelfIsZero) {
    const std::vector<double> p{0.2, 0.3, 0.5};
    EXPECT_DOUBLE_EQ(kl_divergence(p, p), 0.0);
}

TEST(KlDivergence, KnownValue) {
    const std::vector<double> p{0.5, 0.5};
    const std::vector<double> q{0.25, 0.75};
    EXPECT_NEAR(kl_divergence(p, q), 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0), 1e-15);
    EXPECT_NEAR(kl_divergence(p, q), 0.143841, 1e-6);
}

TEST(KlDivergence, NonNegativeOnRandomPairs) {
    Rng rng(11);
    for (int i = 0; i < 1000; ++i) {
        const int k = 2 + static_cast<int>(rng.uniform() * 6);
        std::vector<double> p(k);
        std::vector<double> q(k);
        double sp = 0.0;
        double sq = 0.0;
        for (int j = 0; j < k; ++j) {
            p[j] = rng.uniform();
            q[j] = rng.uniform() + 1e-6;
            sp += p[j];
            sq += q[j];
        }
        for (int j = 0; j < k; ++j) {
            p[j] /= sp;
            q[j] /= sq;
        }
        ASSERT_GE(kl_divergence(p, q), 0.0);
    }
}

TEST(KlDivergence, SupportMismatchAndInfinity) {
    const std::vector<double> p{0.5, 0.5};
    const std::vector<double> q3{0.2, 0.3, 0.5};
    EXPECT_THROW(kl_divergence(p, q3), UsageError);
    const std::vector<double> q0{1.0, 0.0};
    EXPECT_TRUE(std::isinf(kl_divergence(p, q0)));
    // Zero mass in p contributes nothing.
    EXPECT_NEAR(kl_divergence(std::vector<double>{1.0, 0.0}, p), std::log(2.0), 1e-15);
}
