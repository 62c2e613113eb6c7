// Runs the seven acceptance criteria and prints one PASS/FAIL line each.
//
//   acceptance [--only N,...] [--expect-fail N,...] [--episodes N]
//
// Exit status is 0 when every criterion passes, or, with --expect-fail, when
// exactly the listed criteria fail.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "../support/small_model.hpp"
#include "cpomdp/causal_model.hpp"
#include "cpomdp/despot.hpp"
#include "cpomdp/error.hpp"
#include "cpomdp/episode.hpp"
#include "cpomdp/experiment.hpp"
#include "cpomdp/gridworld.hpp"
#include "cpomdp/learning.hpp"
#include "cpomdp/ucpomdp.hpp"

namespace {

using namespace cpomdp;
using pomdp::TransitionMode;
using Clock = std::chrono::steady_clock;

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail += (detail.empty() ? "" : "; ") + std::string("FAILED ") + what;
        }
    }
    void note(const std::string& text) { detail += (detail.empty() ? "" : "; ") + text; }
};

std::string f(const char* spec, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

const pomdp::UcPomdpModel& truth() {
    static const pomdp::UcPomdpModel model = grid::build_model(grid::default_map());
    return model;
}

pomdp::StateId cell_state(const grid::GridMap& map, grid::Cell c) {
    const auto cells = map.free_cells();
    return static_cast<pomdp::StateId>(std::find(cells.begin(), cells.end(), c) - cells.begin());
}

// Successor distribution at a region cell, summed by hand over U.
std::vector<double> hand_enumerated(const grid::GridMap& map, grid::Cell from, int a, TransitionMode mode) {
    const auto prior = grid::orientation_prior();
    const auto reactive = grid::reactive_table();
    const auto& model = truth();
    std::vector<double> out(model.total_states(), 0.0);
    double norm = 0.0;
    for (int u = 0; u < grid::kNumOrientationErrors; ++u) {
        double w = prior[u];
        if (mode == TransitionMode::Observational) {
            w *= reactive[u][a];
        }
        norm += w;
        const auto rel = grid::relative_transition(static_cast<grid::Action>(a), static_cast<grid::OrientationError>(u), true);
        for (int m = 0; m < grid::kNumMoves; ++m) {
            const auto r = grid::apply_move(map, from, static_cast<grid::Move>(m));
            const pomdp::StateId next = r.kind == grid::MoveResult::Kind::Goal        ? model.goal_state()
                                        : r.kind == grid::MoveResult::Kind::Collision ? model.collided_state()
                                                                                      : cell_state(map, r.cell);
            out[next] += w * rel[m];
        }
    }
    for (double& p : out) {
        p /= norm;
    }
    return out;
}

// 1. Exact inference reproduces the hand-enumerated confounded-cell table.
Verdict criterion1() {
    Verdict v;
    const auto t0 = Clock::now();
    const grid::GridMap map = grid::default_map();
    const pomdp::StateId s = cell_state(map, {0, 2});
    double worst = 0.0;
    for (auto mode : {TransitionMode::Interventional, TransitionMode::Observational}) {
        for (int a = 0; a < 4; ++a) {
            const auto exact = pomdp::transition_dist(truth(), s, a, mode);
            const auto oracle = hand_enumerated(map, {0, 2}, a, mode);
            for (std::size_t k = 0; k < oracle.size(); ++k) {
                worst = std::max(worst, std::abs(exact[k] - oracle[k]));
            }
        }
    }
    const double causal_up = pomdp::transition_dist(truth(), s, 1, TransitionMode::Interventional)[truth().goal_state()];
    const double seen_up = pomdp::transition_dist(truth(), s, 1, TransitionMode::Observational)[truth().goal_state()];
    v.require(worst <= 1e-12, "max |exact - enumerated| " + f("%.2e", worst));
    v.require(std::abs(causal_up - 0.73) <= 1e-12, "do(UP) forward " + f("%.12f", causal_up));
    v.require(std::abs(seen_up - 0.0445 / 0.21) <= 1e-12, "observational UP forward " + f("%.12f", seen_up));
    v.require(std::abs(causal_up - 0.7229) <= 0.03, "published do(UP) value");
    v.require(std::abs(seen_up - 0.1914) <= 0.03, "published observational value");
    const double secs = seconds_since(t0);
    v.require(secs < 1.0, "runtime");
    v.note("max diff " + f("%.1e", worst) + ", do(UP) fwd " + f("%.6f", causal_up) + " (ref 0.7229), obs UP fwd " +
           f("%.6f", seen_up) + " (ref 0.1914), " + f("%.2f s", secs));
    return v;
}

// 2. Likelihood weighting converges to exact inference.
Verdict criterion2() {
    Verdict v;
    const auto t0 = Clock::now();
    const pomdp::StateId s = cell_state(grid::default_map(), {0, 2});
    double mean_small = 0.0;
    double worst_large = 0.0;
    int queries = 0;
    for (auto mode : {TransitionMode::Interventional, TransitionMode::Observational}) {
        for (int a = 0; a < 4; ++a) {
            const auto exact = pomdp::transition_dist(truth(), s, a, mode);
            pomdp::InferenceOptions opt;
            opt.method = pomdp::InferenceMethod::Importance;
            opt.particles = 5000;
            double tv = 0.0;
            for (std::uint64_t seed = 0; seed < 20; ++seed) {
                opt.seed = seed;
                tv += scm::total_variation(exact, pomdp::transition_dist(truth(), s, a, mode, opt)) / 20;
            }
            mean_small = std::max(mean_small, tv);
            opt.particles = 1000000;
            opt.seed = 99;
            worst_large =
                std::max(worst_large, scm::total_variation(exact, pomdp::transition_dist(truth(), s, a, mode, opt)));
            ++queries;
        }
    }
    const double secs = seconds_since(t0);
    v.require(mean_small <= 0.02, "seed-averaged TV at 5000 particles");
    v.require(worst_large <= 0.002, "TV at 1e6 particles");
    v.require(secs < 30.0, "runtime");
    v.note(std::to_string(queries) + " queries, worst mean TV@5000 " + f("%.4f", mean_small) + ", worst TV@1e6 " +
           f("%.5f", worst_large) + ", " + f("%.1f s", secs));
    return v;
}

// 3. Learning fidelity at 800k and 100k records.
Verdict criterion3() {
    Verdict v;
    auto t0 = Clock::now();
    const auto big = experiment::learn_in_memory(truth(), 800000, 1.0, 1);
    const double big_secs = seconds_since(t0);
    const double worst_entry = std::max({big.errors.p_u, big.errors.p_uc, big.errors.p_0});
    v.require(big.kl <= 0.005, "KL at 800k " + f("%.5f", big.kl));
    v.require(big.errors.p_u <= 0.005, "P(U) recovery");
    v.require(worst_entry <= 0.01, "per-entry error " + f("%.4f", worst_entry) + " (P_UC " +
                                       f("%.4f", big.errors.p_uc) + ")");
    v.require(big_secs < 120.0, "800k runtime");

    t0 = Clock::now();
    const auto desk = experiment::learn_in_memory(truth(), 100000, 1.0, 1);
    const double desk_secs = seconds_since(t0);
    v.require(desk.kl <= 0.01, "KL at 100k " + f("%.5f", desk.kl));
    v.require(desk_secs < 15.0, "100k runtime");

    std::ostringstream p_u;
    for (int i = 0; i < 3; ++i) {
        p_u << (i ? "," : "") << f("%.4f", big.params.p_u.at(0, i));
    }
    v.note("800k: KL " + f("%.5f", big.kl) + ", P(U) [" + p_u.str() + "], max err P_U " + f("%.4f", big.errors.p_u) +
           " P_0 " + f("%.4f", big.errors.p_0) + " P_UC " + f("%.4f", big.errors.p_uc) + " region tables " +
           f("%.4f", big.region_error) + ", " + f("%.1f s", big_secs) + "; 100k: KL " + f("%.5f", desk.kl) + ", " +
           f("%.1f s", desk_secs));
    return v;
}

// 4. Interventional planning beats observational planning.
Verdict criterion4(int episodes) {
    Verdict v;
    const auto t0 = Clock::now();
    experiment::ExperimentConfig cfg;  // K=500, D=15, gamma .95, xi .95, lambda .01, 1e4 trials
    const pomdp::UcPomdpModel learned = [&] {
        cfg.plan_model = experiment::PlanModelSource::Learned;
        return experiment::planning_model(cfg, truth());
    }();
    for (auto source : {experiment::PlanModelSource::Truth, experiment::PlanModelSource::Learned}) {
        const pomdp::UcPomdpModel& plan = source == experiment::PlanModelSource::Truth ? truth() : learned;
        planner::PlannerConfig pc = cfg.planner;
        pc.mode = TransitionMode::Interventional;
        const auto causal = experiment::evaluate(plan, truth(), pc, episodes, cfg.max_steps, cfg.seed);
        pc.mode = TransitionMode::Observational;
        const auto observational = experiment::evaluate(plan, truth(), pc, episodes, cfg.max_steps, cfg.seed);

        std::vector<double> diff(episodes);
        int up_first = 0;
        int right_first = 0;
        for (int i = 0; i < episodes; ++i) {
            diff[i] = causal.episodes[i].total_discounted_reward - observational.episodes[i].total_discounted_reward;
            up_first += causal.episodes[i].actions.front() == static_cast<int>(grid::Action::Up);
            right_first += observational.episodes[i].actions.front() == static_cast<int>(grid::Action::Right);
        }
        const double n = episodes;
        const double mean = std::accumulate(diff.begin(), diff.end(), 0.0) / n;
        double ss = 0.0;
        for (double d : diff) {
            ss += (d - mean) * (d - mean);
        }
        const double se = std::sqrt(ss / (n - 1)) / std::sqrt(n);
        const std::string tag(experiment::to_string(source));
        v.require(causal.mean > observational.mean, tag + " mean ordering");
        v.require(mean - 1.96 * se > 0.0, tag + " paired difference at 95%");
        v.require(up_first >= 0.9 * n, tag + " interventional UP-first share");
        v.require(right_first > 0.5 * n, tag + " observational RIGHT-first share");
        v.note(tag + ": " + f("%.2f", causal.mean) + " vs " + f("%.2f", observational.mean) + ", paired diff " +
               f("%.2f", mean) + " +- " + f("%.2f", 1.96 * se) + ", UP-first " + f("%.0f%%", 100 * up_first / n) +
               ", RIGHT-first " + f("%.0f%%", 100 * right_first / n));
    }
    const double secs = seconds_since(t0);
    v.require(secs <= 3600.0, "runtime");
    v.note(std::to_string(episodes) + " paired episodes per source, " + f("%.0f s", secs));
    return v;
}

// 5. Converged planner equals exhaustive policy-tree search on a tiny model.
Verdict criterion5() {
    Verdict v;
    const auto t0 = Clock::now();
    const auto model = oracle::small_model();
    double worst = 0.0;
    int cases = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        for (int k : {1, 5, 50}) {
            planner::PlannerConfig cfg;
            cfg.scenarios = k;
            cfg.depth = 3;
            cfg.lambda = 0.0;
            cfg.xi = 1e-9;
            cfg.seed = seed;
            const pomdp::DynamicsTable dyn(model, cfg.mode);
            const planner::PlanningContext ctx(
                model, dyn, cfg, planner::sample_scenarios(pomdp::Belief{model.initial_belief}, k, seed));
            planner::DespotTree tree(ctx);
            oracle::run_to_convergence(tree, ctx);
            const double best = oracle::brute_force_policy_value(ctx);
            worst = std::max({worst, std::abs(tree.root().lower - best), std::abs(tree.root().upper - best)});
            ++cases;
        }
    }
    const double secs = seconds_since(t0);
    v.require(worst <= 1e-9, "root value vs enumeration");
    v.require(secs < 1.0, "runtime");
    v.note(std::to_string(cases) + " instances, max |root - optimum| " + f("%.1e", worst) + ", " + f("%.2f s", secs));
    return v;
}

// 6. Without confounding both modes write byte-identical traces.
Verdict criterion6() {
    Verdict v;
    const auto t0 = Clock::now();
    const auto dir = std::filesystem::temp_directory_path() / "cpomdp_acceptance_c6";
    std::filesystem::remove_all(dir);
    const std::string map_path = (dir / "plain.map").string();
    std::filesystem::create_directories(dir);
    std::ofstream(map_path) << grid::serialize_map(grid::unconfounded_map());
    auto slurp = [](const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        std::ostringstream buf;
        buf << in.rdbuf();
        return buf.str();
    };
    int compared = 0;
    int mismatched = 0;
    for (auto source : {experiment::PlanModelSource::Truth, experiment::PlanModelSource::Learned}) {
        for (std::uint64_t seed = 1; seed <= 10; ++seed) {
            experiment::ExperimentConfig cfg;
            cfg.map_path = map_path;
            cfg.plan_model = source;
            cfg.seed = seed;
            cfg.out_dir = (dir / "out").string();
            cfg.planner.mode = TransitionMode::Interventional;
            const auto a = experiment::run_simulate(cfg);
            cfg.planner.mode = TransitionMode::Observational;
            const auto b = experiment::run_simulate(cfg);
            mismatched += slurp(a.trace_path) != slurp(b.trace_path) || a.trace.empty();
            ++compared;
        }
    }
    std::filesystem::remove_all(dir);
    const double secs = seconds_since(t0);
    v.require(mismatched == 0, std::to_string(mismatched) + " trace pairs differ");
    v.require(secs < 60.0, "runtime");
    v.note(std::to_string(compared) + " trace pairs byte-equal check, " + f("%.1f s", secs));
    return v;
}

// 7. Property sweep over the invariants of every module.
Verdict criterion7() {
    Verdict v;
    const auto t0 = Clock::now();
    int checks = 0;
    auto check = [&](bool ok, const std::string& what) {
        ++checks;
        v.require(ok, what);
    };
    Rng rng(2718);

    // Normalization of every transition and observation row, both modes.
    for (const auto* model : {&truth()}) {
        for (auto mode : {TransitionMode::Interventional, TransitionMode::Observational}) {
            const pomdp::DynamicsTable dyn(*model, mode);
            for (pomdp::StateId s = 0; s < model->num_states; ++s) {
                for (pomdp::ActionId a = 0; a < model->num_actions; ++a) {
                    const auto& row = dyn.transition(s, a).probabilities;
                    check(std::abs(std::accumulate(row.begin(), row.end(), 0.0) - 1.0) < 1e-9, "normalization");
                }
            }
        }
    }

    // Mutilation: idempotent and commuting, on every per-cell step model.
    for (pomdp::StateId s = 0; s < truth().num_states; ++s) {
        const scm::ScmSpec spec = pomdp::step_scm(truth(), s);
        for (int a = 0; a < 4; ++a) {
            const scm::Intervention on_a{{{"A", a}}};
            const auto once = scm::mutilate(spec, on_a);
            check(scm::mutilate(once, on_a) == once, "mutilation idempotence");
            check(!once.has_edge("U", "A"), "mutilation removes U->A");
            const scm::Intervention on_ds{{{"dS", a}}};
            check(scm::mutilate(scm::mutilate(spec, on_a), on_ds) == scm::mutilate(scm::mutilate(spec, on_ds), on_a),
                  "mutilation commutes");
        }
    }

    // Bound sandwich, anytime monotonicity and scenario partition.
    for (auto mode : {TransitionMode::Interventional, TransitionMode::Observational}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            planner::PlannerConfig cfg;
            cfg.mode = mode;
            cfg.scenarios = 200;
            cfg.seed = seed;
            const pomdp::DynamicsTable dyn(truth(), mode);
            std::vector<pomdp::StateId> all(truth().num_states);
            std::iota(all.begin(), all.end(), 0);
            const auto b0 = pomdp::Belief::uniform_over(truth().total_states(), all);
            const planner::PlanningContext ctx(truth(), dyn, cfg, planner::sample_scenarios(b0, cfg.scenarios, seed));
            planner::DespotTree tree(ctx);
            double lo = tree.root().lower;
            double hi = tree.root().upper;
            bool monotone = true;
            for (int t = 0; t < 200 && planner::run_trial(tree, ctx).expanded; ++t) {
                monotone = monotone && tree.root().lower >= lo - 1e-9 && tree.root().upper <= hi + 1e-9;
                lo = tree.root().lower;
                hi = tree.root().upper;
            }
            check(monotone, "anytime monotonicity");
            for (std::size_t i = 0; i < tree.size(); ++i) {
                const auto& node = tree.node(static_cast<int>(i));
                check(node.lower <= node.upper + 1e-6, "bound sandwich");
                std::multiset<int> parent;
                for (const auto& p : node.particles) {
                    parent.insert(p.scenario);
                }
                for (const auto& branch : node.branches) {
                    std::multiset<int> kids;
                    for (const auto& [z, c] : branch.children) {
                        for (const auto& p : tree.node(c).particles) {
                            kids.insert(p.scenario);
                        }
                    }
                    check(kids == parent, "scenario partition");
                }
            }
        }
    }

    // KL nonnegativity on random distributions and on learned models.
    for (int i = 0; i < 1000; ++i) {
        std::vector<double> p(5);
        std::vector<double> q(5);
        for (int k = 0; k < 5; ++k) {
            p[k] = rng.uniform() + 1e-3;
            q[k] = rng.uniform() + 1e-3;
        }
        const double sp = std::accumulate(p.begin(), p.end(), 0.0);
        const double sq = std::accumulate(q.begin(), q.end(), 0.0);
        for (int k = 0; k < 5; ++k) {
            p[k] /= sp;
            q[k] /= sq;
        }
        check(scm::kl_divergence(p, q) >= 0.0, "KL nonnegativity");
    }
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        const auto m = learning::assemble_model(truth(), learning::fit(learning::generate_dataset(truth(), 2000, seed)));
        check(learning::eval_kl_full_transition(m, truth()) >= 0.0, "full-transition KL nonnegativity");
    }

    // Determinism of sampling, scenarios, search, learning and episodes.
    {
        const auto spec = pomdp::step_scm(truth(), cell_state(grid::default_map(), {0, 2}));
        Rng r1(5);
        Rng r2(5);
        bool same = true;
        for (int i = 0; i < 1000; ++i) {
            same = same && scm::sample_world(spec, r1) == scm::sample_world(spec, r2);
        }
        check(same, "sample_world determinism");
        const auto b0 = pomdp::Belief{truth().initial_belief};
        check(planner::sample_scenarios(b0, 100, 3) == planner::sample_scenarios(b0, 100, 3), "scenario determinism");
        planner::PlannerConfig cfg;
        cfg.scenarios = 200;
        cfg.seed = 8;
        const auto x = planner::search(b0, truth(), cfg);
        const auto y = planner::search(b0, truth(), cfg);
        check(x.action == y.action && x.trajectory == y.trajectory, "search determinism");
        check(learning::generate_dataset(truth(), 5000, 4) == learning::generate_dataset(truth(), 5000, 4),
              "dataset determinism");
        const auto e1 = planner::run_episode(truth(), truth(), cfg, 15, 17);
        const auto e2 = planner::run_episode(truth(), truth(), cfg, 15, 17);
        check(planner::format_trace(e1, truth()) == planner::format_trace(e2, truth()), "episode determinism");
        check(std::abs(planner::replay_return(e1.trace, truth().discount) - e1.total_discounted_reward) < 1e-12,
              "replayed return");
    }

    // Belief updates are normalized or rejected.
    {
        const pomdp::DynamicsTable dyn(truth(), TransitionMode::Observational);
        for (int i = 0; i < 200; ++i) {
            std::vector<double> p(truth().total_states(), 0.0);
            for (pomdp::StateId s = 0; s < truth().num_states; ++s) {
                p[s] = rng.uniform();
            }
            const double sum = std::accumulate(p.begin(), p.end(), 0.0);
            for (double& x : p) {
                x /= sum;
            }
            const int a = static_cast<int>(rng.uniform() * 4);
            const int z = static_cast<int>(rng.uniform() * truth().num_observations);
            try {
                const auto post = pomdp::belief_update(dyn, truth(), pomdp::Belief{p}, a, z);
                check(std::abs(std::accumulate(post.probabilities.begin(), post.probabilities.end(), 0.0) - 1.0) <
                          1e-9,
                      "belief normalization");
            } catch (const InconsistentObservationError&) {
                ++checks;
            }
        }
    }

    const double secs = seconds_since(t0);
    v.require(secs < 300.0, "runtime");
    v.note(std::to_string(checks) + " property checks, " + f("%.1f s", secs));
    return v;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> only;
    std::vector<int> expect_fail;
    int episodes = 1000;
    app.add_option("--only", only, "Run only these criteria")->delimiter(',')->check(CLI::Range(1, 7));
    app.add_option("--expect-fail", expect_fail, "Criteria documented as unattainable")
        ->delimiter(',')
        ->check(CLI::Range(1, 7));
    app.add_option("--episodes", episodes, "Paired episodes per plan-model source for criterion 4")
        ->check(CLI::Range(50, 100000));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
        {"inference oracle parity", criterion1},
        {"importance-sampling convergence", criterion2},
        {"learning fidelity", criterion3},
        {"planner ordering", [&] { return criterion4(episodes); }},
        {"small-instance optimality", criterion5},
        {"no-confounding equivalence", criterion6},
        {"invariant suites", criterion7},
    };

    std::set<int> failed;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) {
            continue;
        }
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        if (!v.pass) {
            failed.insert(id);
        }
        std::printf("AC%d %s  %s: %s\n", id, v.pass ? "PASS" : "FAIL", criteria[i].first, v.detail.c_str());
        std::fflush(stdout);
    }

    std::set<int> expected(expect_fail.begin(), expect_fail.end());
    if (!only.empty()) {
        std::set<int> chosen(only.begin(), only.end());
        std::erase_if(expected, [&](int id) { return !chosen.count(id); });
    }
    if (expect_fail.empty()) {
        return failed.empty() ? 0 : 1;
    }
    if (failed != expected) {
        std::printf("failures differ from the expected set\n");
        return 1;
    }
    return 0;
}
