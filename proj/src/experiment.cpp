#include "cpomdp/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "cpomdp/error.hpp"

namespace cpomdp::experiment {
namespace {

std::string fmt(double v, const char* spec = "%.17g") {
    char buf[48];
    std::snprintf(buf, sizeof buf, spec, v);
    return buf;
}

std::string quoted(const std::string& text) {
    return text.find(',') == std::string::npos ? text : '"' + text + '"';
}

std::filesystem::path prepare_out_dir(const ExperimentConfig& config) {
    std::filesystem::path dir(config.out_dir);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) {
        throw IoError("cannot create output directory '" + config.out_dir + "': " + ec.message());
    }
    return dir;
}

void write_file(const std::filesystem::path& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw IoError("cannot write '" + path.string() + "'");
    }
    out << contents;
    if (!out) {
        throw IoError("write to '" + path.string() + "' failed");
    }
}

std::string suffix(const ExperimentConfig& config) {
    return std::string(pomdp::to_string(config.planner.mode)) + "_" + std::string(to_string(config.plan_model));
}

}  // namespace

std::string_view to_string(PlanModelSource source) noexcept {
    return source == PlanModelSource::Learned ? "learned" : "truth";
}

PlanModelSource parse_plan_model(std::string_view text) {
    if (text == "learned") {
        return PlanModelSource::Learned;
    }
    if (text == "truth") {
        return PlanModelSource::Truth;
    }
    throw UsageError("unknown plan model '" + std::string(text) + "'");
}

void ExperimentConfig::validate() const {
    planner.validate();
    if (episodes < 1) {
        throw UsageError("episodes must be at least 1");
    }
    if (max_steps < 1) {
        throw UsageError("steps must be at least 1");
    }
    if (dataset_n < 1) {
        throw UsageError("dataset size must be at least 1");
    }
    if (!(smoothing > 0.0)) {
        throw UsageError("smoothing must be positive");
    }
    if (threads < 1) {
        throw UsageError("threads must be at least 1");
    }
}

grid::GridMap load_configured_map(const ExperimentConfig& config) {
    return config.map_path.empty() ? grid::default_map() : grid::load_map(config.map_path);
}

std::uint64_t episode_seed(std::uint64_t master, int index) noexcept {
    return mix_seed(master, static_cast<std::uint64_t>(index));
}

// ---------------------------------------------------------------------------
// Learning

namespace {

LearnReport fit_and_score(const pomdp::UcPomdpModel& truth, const learning::Dataset& data, double smoothing) {
    LearnReport report;
    report.params = learning::fit(data, smoothing);
    const pomdp::UcPomdpModel learned = learning::assemble_model(truth, report.params);
    report.kl = learning::eval_kl_full_transition(learned, truth);
    report.errors = learning::max_abs_errors(learned, truth);
    report.region_error = max_table_difference(transition_tables(learned, "learned"), transition_tables(truth, "truth"));
    return report;
}

}  // namespace

LearnReport learn_in_memory(const pomdp::UcPomdpModel& truth, std::size_t n, double smoothing, std::uint64_t seed) {
    return fit_and_score(truth, learning::generate_dataset(truth, n, seed), smoothing);
}

LearnReport run_learn(const ExperimentConfig& config) {
    config.validate();
    const pomdp::UcPomdpModel truth = grid::build_model(load_configured_map(config), config.planner.discount);
    const auto dir = prepare_out_dir(config);
    const learning::Dataset data = learning::generate_dataset(truth, config.dataset_n, config.seed);
    if (config.write_dataset) {
        learning::save_dataset((dir / "dataset.csv").string(), data);
    }
    const LearnReport report = fit_and_score(truth, data, config.smoothing);
    learning::save_params((dir / "params.txt").string(), report.params);

    std::ostringstream text;
    text << "n," << report.params.n << '\n'
         << "smoothing," << fmt(report.params.smoothing) << '\n'
         << "seed," << report.params.seed << '\n'
         << "kl_full_transition," << fmt(report.kl) << '\n'
         << "max_abs_error_p_u," << fmt(report.errors.p_u) << '\n'
         << "max_abs_error_p_uc," << fmt(report.errors.p_uc) << '\n'
         << "max_abs_error_p_0," << fmt(report.errors.p_0) << '\n'
         << "max_abs_error_region_tables," << fmt(report.region_error) << '\n';
    write_file(dir / "report.csv", text.str());
    return report;
}

pomdp::UcPomdpModel planning_model(const ExperimentConfig& config, const pomdp::UcPomdpModel& truth) {
    if (config.plan_model == PlanModelSource::Truth) {
        return truth;
    }
    if (!config.params_path.empty()) {
        return learning::assemble_model(truth, learning::load_params(config.params_path));
    }
    const learning::Dataset data = learning::generate_dataset(truth, config.dataset_n, config.seed);
    return learning::assemble_model(truth, learning::fit(data, config.smoothing));
}

// ---------------------------------------------------------------------------
// Tables

std::vector<TableRow> transition_tables(const pomdp::UcPomdpModel& model, const std::string& source) {
    std::vector<TableRow> rows;
    for (auto mode : {pomdp::TransitionMode::Interventional, pomdp::TransitionMode::Observational}) {
        for (pomdp::StateId s = 0; s < model.num_states; ++s) {
            if (!model.confounded[s]) {
                continue;
            }
            for (pomdp::ActionId a = 0; a < model.num_actions; ++a) {
                const scm::Dist d = pomdp::relative_transition_dist(model, s, a, mode);
                for (int o = 0; o < model.num_relative; ++o) {
                    rows.push_back({source, mode, s, a, o, d[o]});
                }
            }
        }
    }
    return rows;
}

double max_table_difference(const std::vector<TableRow>& a, const std::vector<TableRow>& b) {
    if (a.size() != b.size()) {
        throw UsageError("table dumps have different shapes");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (a[i].mode != b[i].mode || a[i].state != b[i].state || a[i].action != b[i].action ||
            a[i].outcome != b[i].outcome) {
            throw UsageError("table dumps are not aligned");
        }
        m = std::max(m, std::abs(a[i].probability - b[i].probability));
    }
    return m;
}

std::string format_tables(const std::vector<TableRow>& rows, const pomdp::UcPomdpModel& model) {
    std::ostringstream out;
    out << "source,mode,state,action,outcome,probability\n";
    for (const TableRow& r : rows) {
        out << r.source << ',' << pomdp::to_string(r.mode) << ',' << quoted(model.state_names.at(r.state)) << ','
            << model.action_names.at(r.action) << ',' << model.relative_names.at(r.outcome) << ','
            << fmt(r.probability, "%.6f") << '\n';
    }
    return out.str();
}

std::string run_tables(const ExperimentConfig& config) {
    config.validate();
    const pomdp::UcPomdpModel truth = grid::build_model(load_configured_map(config), config.planner.discount);
    std::vector<TableRow> rows = transition_tables(truth, "truth");
    if (config.plan_model == PlanModelSource::Learned) {
        if (config.params_path.empty()) {
            throw UsageError("tables with --plan-model learned needs --params");
        }
        const pomdp::UcPomdpModel learned =
            learning::assemble_model(truth, learning::load_params(config.params_path));
        const auto learned_rows = transition_tables(learned, "learned");
        rows.insert(rows.end(), learned_rows.begin(), learned_rows.end());
    }
    const std::string text = format_tables(rows, truth);
    write_file(prepare_out_dir(config) / "tables.csv", text);
    return text;
}

// ---------------------------------------------------------------------------
// Evaluation

EvalSummary summarize(std::vector<planner::EpisodeResult> episodes) {
    EvalSummary s;
    s.episodes = std::move(episodes);
    const double n = static_cast<double>(s.episodes.size());
    if (s.episodes.empty()) {
        return s;
    }
    double sum = 0.0;
    for (const auto& e : s.episodes) {
        sum += e.total_discounted_reward;
        switch (e.outcome) {
            case planner::Outcome::Goal: ++s.goals; break;
            case planner::Outcome::Collision: ++s.collisions; break;
            case planner::Outcome::Timeout: ++s.timeouts; break;
        }
        const double pos = (e.total_discounted_reward - kHistogramLow) / kHistogramWidth;
        const int bin = std::clamp(static_cast<int>(std::floor(pos)), 0, kHistogramBins - 1);
        ++s.histogram[bin];
    }
    s.mean = sum / n;
    if (s.episodes.size() > 1) {
        double ss = 0.0;
        for (const auto& e : s.episodes) {
            ss += (e.total_discounted_reward - s.mean) * (e.total_discounted_reward - s.mean);
        }
        s.std_error = std::sqrt(ss / (n - 1.0)) / std::sqrt(n);
    }
    return s;
}

EvalSummary evaluate(const pomdp::UcPomdpModel& plan_model, const pomdp::UcPomdpModel& exec_model,
                     const planner::PlannerConfig& planner_config, int episodes, int max_steps,
                     std::uint64_t master_seed, int threads) {
    if (episodes < 1) {
        throw UsageError("episodes must be at least 1");
    }
    const planner::EpisodeRunner runner(plan_model, exec_model, planner_config, max_steps);
    std::vector<planner::EpisodeResult> results(episodes);
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int i = next++; i < episodes; i = next++) {
            results[i] = runner.run(episode_seed(master_seed, i));
        }
    };
    const int n_threads = std::clamp(threads, 1, episodes);
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < n_threads; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& th : pool) {
            th.join();
        }
    }
    return summarize(std::move(results));
}

std::string format_episodes(const EvalSummary& summary, const pomdp::UcPomdpModel& model) {
    std::ostringstream out;
    out << "episode,seed,reward,outcome,steps,belief_resets,actions\n";
    for (std::size_t i = 0; i < summary.episodes.size(); ++i) {
        const auto& e = summary.episodes[i];
        out << i << ',' << e.seed << ',' << fmt(e.total_discounted_reward) << ',' << planner::to_string(e.outcome)
            << ',' << e.steps << ',' << e.belief_resets << ',';
        for (std::size_t k = 0; k < e.actions.size(); ++k) {
            out << (k ? " " : "") << model.action_names.at(e.actions[k]);
        }
        out << '\n';
    }
    return out.str();
}

std::string format_summary(const EvalSummary& s) {
    std::ostringstream out;
    out << "key,value\n"
        << "episodes," << s.episodes.size() << '\n'
        << "mean," << fmt(s.mean) << '\n'
        << "std_error," << fmt(s.std_error) << '\n'
        << "goal," << s.goals << '\n'
        << "collision," << s.collisions << '\n'
        << "timeout," << s.timeouts << '\n';
    return out.str();
}

std::string format_histogram(const EvalSummary& s) {
    std::ostringstream out;
    out << "bin_low,bin_high,count\n";
    for (int b = 0; b < kHistogramBins; ++b) {
        const double lo = kHistogramLow + b * kHistogramWidth;
        out << fmt(lo, "%g") << ',' << fmt(lo + kHistogramWidth, "%g") << ',' << s.histogram[b] << '\n';
    }
    return out.str();
}

EvalSummary run_eval(const ExperimentConfig& config) {
    config.validate();
    const pomdp::UcPomdpModel truth = grid::build_model(load_configured_map(config), config.planner.discount);
    const pomdp::UcPomdpModel plan = planning_model(config, truth);
    const auto dir = prepare_out_dir(config);
    EvalSummary s =
        evaluate(plan, truth, config.planner, config.episodes, config.max_steps, config.seed, config.threads);
    const std::string tag = suffix(config);
    write_file(dir / ("episodes_" + tag + ".csv"), format_episodes(s, truth));
    write_file(dir / ("summary_" + tag + ".csv"), format_summary(s));
    write_file(dir / ("histogram_" + tag + ".csv"), format_histogram(s));
    return s;
}

SimulateResult run_simulate(const ExperimentConfig& config) {
    config.validate();
    const pomdp::UcPomdpModel truth = grid::build_model(load_configured_map(config), config.planner.discount);
    const pomdp::UcPomdpModel plan = planning_model(config, truth);
    SimulateResult r;
    r.episode = planner::run_episode(plan, truth, config.planner, config.max_steps, config.seed);
    r.trace = planner::format_trace(r.episode, truth);
    const auto path = prepare_out_dir(config) / ("trace_" + suffix(config) + ".csv");
    write_file(path, r.trace);
    r.trace_path = path.string();
    return r;
}

std::string compare_traces(const std::string& stored, const std::string& fresh) {
    std::istringstream a(stored);
    std::istringstream b(fresh);
    std::string la;
    std::string lb;
    int line = 0;
    while (true) {
        const bool ha = static_cast<bool>(std::getline(a, la));
        const bool hb = static_cast<bool>(std::getline(b, lb));
        ++line;
        if (!ha && !hb) {
            return {};
        }
        if (ha != hb) {
            return "line " + std::to_string(line) + ": traces have different lengths";
        }
        if (la != lb) {
            return "line " + std::to_string(line) + ": stored '" + la + "' vs replayed '" + lb + "'";
        }
    }
}

}  // namespace cpomdp::experiment
