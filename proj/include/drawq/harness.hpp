#pragma once

#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "drawq/drawsim.hpp"
#include "drawq/errors.hpp"
#include "drawq/mdp.hpp"
#include "drawq/neural.hpp"
#include "drawq/observer.hpp"
#include "drawq/oracle.hpp"
#include "drawq/parallel.hpp"
#include "drawq/qlearn.hpp"
#include "drawq/rng.hpp"

namespace drawq {

/// Everything one experiment run needs. Field defaults are the evaluation
/// setting; the config file overrides them key by key.
struct RunConfig {
    std::uint64_t master_seed = 1;
    ObservabilityMode scenario = ObservabilityMode::partial;
    long episodes = 2500;
    LearnerConfig learner{};
    int eval_rollouts = 1;
    bool eval_noise = false;
    EnvironmentConfig env{};
    int nominal_bin = 2;  // 1-based bin of the nominal friction 0.028
    std::string out_dir = "out";
    std::string calibration_path;  // empty: <out>/calibration.txt
    int calibration_samples = 100;
    int threads = 1;
    std::vector<double> sweep_alphas = {0.3, 0.5, 0.7, 0.9};
    std::vector<double> sweep_epsilons = {0.1, 0.2, 0.3, 0.4};
    int sweep_seeds = 10;

    std::string calibration_file() const {
        return calibration_path.empty() ? out_dir + "/calibration.txt" : calibration_path;
    }

    void validate() const {
        learner.validate();
        env.validate();
        if (episodes < 1) throw config_error("RunConfig: episodes must be >= 1");
        if (episodes < learner.warmup)
            throw config_error("RunConfig: episodes must be >= warmup");
        if (eval_rollouts < 1) throw config_error("RunConfig: eval_rollouts must be >= 1");
        if (calibration_samples < 2)
            throw config_error("RunConfig: calibration_samples must be >= 2");
        if (threads < 1) throw config_error("RunConfig: threads must be >= 1");
        if (nominal_bin < 1 || nominal_bin > env.friction.bins)
            throw config_error("RunConfig: nominal_bin out of range");
        if (sweep_alphas.empty() || sweep_epsilons.empty() || sweep_seeds < 1)
            throw config_error("RunConfig: empty sweep grid");
    }
};

namespace detail {

inline std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    const auto b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline double parse_double(const std::string& v, const std::string& where) {
    std::size_t pos = 0;
    double x = 0.0;
    try {
        x = std::stod(v, &pos);
    } catch (const std::exception&) {
        throw config_error(where + ": expected a number, got '" + v + "'");
    }
    if (pos != v.size()) throw config_error(where + ": expected a number, got '" + v + "'");
    return x;
}

inline long parse_long(const std::string& v, const std::string& where) {
    std::size_t pos = 0;
    long x = 0;
    try {
        x = std::stol(v, &pos);
    } catch (const std::exception&) {
        throw config_error(where + ": expected an integer, got '" + v + "'");
    }
    if (pos != v.size()) throw config_error(where + ": expected an integer, got '" + v + "'");
    return x;
}

inline std::uint64_t parse_uint64(const std::string& v, const std::string& where) {
    std::size_t pos = 0;
    unsigned long long x = 0;
    try {
        x = std::stoull(v, &pos);
    } catch (const std::exception&) {
        throw config_error(where + ": expected an unsigned integer, got '" + v + "'");
    }
    if (pos != v.size() || v[0] == '-')
        throw config_error(where + ": expected an unsigned integer, got '" + v + "'");
    return static_cast<std::uint64_t>(x);
}

inline bool parse_bool(const std::string& v, const std::string& where) {
    if (v == "true" || v == "on" || v == "1") return true;
    if (v == "false" || v == "off" || v == "0") return false;
    throw config_error(where + ": expected a boolean, got '" + v + "'");
}

inline std::vector<double> parse_double_list(const std::string& v, const std::string& where) {
    std::vector<double> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(parse_double(trim(item), where));
    if (out.empty()) throw config_error(where + ": empty list");
    return out;
}

}  // namespace detail

/// Line-based key=value configuration. Empty lines and lines starting with
/// '#' are skipped; unknown keys are rejected with the offending line
/// number; absent keys keep their defaults.
inline RunConfig parse_config(std::istream& in, const std::string& source) {
    RunConfig cfg;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = detail::trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const auto eq = stripped.find('=');
        const std::string where = source + ":" + std::to_string(lineno);
        if (eq == std::string::npos)
            throw config_error(where + ": expected key=value, got '" + stripped + "'");
        const std::string key = detail::trim(stripped.substr(0, eq));
        const std::string val = detail::trim(stripped.substr(eq + 1));

        if (key == "seed") cfg.master_seed = detail::parse_uint64(val, where);
        else if (key == "scenario") cfg.scenario = parse_mode(val);
        else if (key == "episodes") cfg.episodes = detail::parse_long(val, where);
        else if (key == "alpha") cfg.learner.alpha = detail::parse_double(val, where);
        else if (key == "gamma") cfg.learner.gamma = detail::parse_double(val, where);
        else if (key == "epsilon0") cfg.learner.epsilon0 = detail::parse_double(val, where);
        else if (key == "decay") cfg.learner.decay = detail::parse_double(val, where);
        else if (key == "retrain_interval") cfg.learner.retrain_interval = static_cast<int>(detail::parse_long(val, where));
        else if (key == "warmup") cfg.learner.warmup = static_cast<int>(detail::parse_long(val, where));
        else if (key == "folds") cfg.learner.folds = static_cast<int>(detail::parse_long(val, where));
        else if (key == "q1_hidden") cfg.learner.q1_hidden = static_cast<int>(detail::parse_long(val, where));
        else if (key == "q_hidden") cfg.learner.q_hidden = static_cast<int>(detail::parse_long(val, where));
        else if (key == "l2") cfg.learner.train.l2 = detail::parse_double(val, where);
        else if (key == "grad_tol") cfg.learner.train.grad_tol = detail::parse_double(val, where);
        else if (key == "max_iterations") cfg.learner.train.max_iterations = static_cast<int>(detail::parse_long(val, where));
        else if (key == "init_scale") cfg.learner.train.init_scale = detail::parse_double(val, where);
        else if (key == "restarts") cfg.learner.train.restarts = static_cast<int>(detail::parse_long(val, where));
        else if (key == "eval_rollouts") cfg.eval_rollouts = static_cast<int>(detail::parse_long(val, where));
        else if (key == "eval_noise") cfg.eval_noise = detail::parse_bool(val, where);
        else if (key == "noise") cfg.env.noise = detail::parse_bool(val, where);
        else if (key == "out") cfg.out_dir = val;
        else if (key == "calibration") cfg.calibration_path = val;
        else if (key == "calibration_samples") cfg.calibration_samples = static_cast<int>(detail::parse_long(val, where));
        else if (key == "threads") cfg.threads = static_cast<int>(detail::parse_long(val, where));
        else if (key == "nominal_bin") cfg.nominal_bin = static_cast<int>(detail::parse_long(val, where));
        else if (key == "sweep_alphas") cfg.sweep_alphas = detail::parse_double_list(val, where);
        else if (key == "sweep_epsilons") cfg.sweep_epsilons = detail::parse_double_list(val, where);
        else if (key == "sweep_seeds") cfg.sweep_seeds = static_cast<int>(detail::parse_long(val, where));
        else throw config_error(where + ": unknown key '" + key + "'");
    }
    return cfg;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("load_config: cannot open " + path);
    return parse_config(in, path);
}

/// One metrics line per episode. The expected greedy reward and the CV
/// scores are filled only on episodes that end a retraining.
struct MetricsRow {
    long episode = 0;
    double epsilon = 0.0;
    double reward = 0.0;
    double friction = 0.0;
    std::optional<double> expected_reward;
    std::array<std::optional<double>, 4> r2{};
    std::string scenario;
    std::uint64_t seed = 0;
};

inline const char* metrics_header() {
    return "episode,epsilon,reward,friction,expected_reward,r2_t1,r2_t2,r2_t3,r2_t4,scenario,seed";
}

inline void write_metrics_row(std::ostream& out, const MetricsRow& r) {
    out << r.episode << ',' << detail::format_full(r.epsilon) << ','
        << detail::format_full(r.reward) << ',' << detail::format_full(r.friction) << ',';
    if (r.expected_reward) out << detail::format_full(*r.expected_reward);
    for (const auto& v : r.r2) {
        out << ',';
        if (v) out << detail::format_full(*v);
    }
    out << ',' << r.scenario << ',' << r.seed << '\n';
}

inline std::vector<MetricsRow> parse_metrics_csv(std::istream& in, const std::string& source) {
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != metrics_header())
        throw config_error(source + ": bad metrics header");
    std::vector<MetricsRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (detail::trim(line).empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) f.push_back(cell);
        if (line.back() == ',') f.push_back("");
        const std::string where = source + ":" + std::to_string(lineno);
        if (f.size() != 11) throw config_error(where + ": expected 11 fields");
        MetricsRow r;
        r.episode = detail::parse_long(f[0], where);
        r.epsilon = detail::parse_double(f[1], where);
        r.reward = detail::parse_double(f[2], where);
        r.friction = detail::parse_double(f[3], where);
        if (!f[4].empty()) r.expected_reward = detail::parse_double(f[4], where);
        for (std::size_t i = 0; i < 4; ++i)
            if (!f[5 + i].empty()) r.r2[i] = detail::parse_double(f[5 + i], where);
        r.scenario = f[9];
        r.seed = detail::parse_uint64(f[10], where);
        rows.push_back(std::move(r));
    }
    return rows;
}

inline std::vector<MetricsRow> load_metrics_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("load_metrics_csv: cannot open " + path);
    return parse_metrics_csv(in, path);
}

struct RetrainEvent {
    long episodes_completed = 0;
    double expected_reward = 0.0;
    std::vector<double> cv_r2;
};

struct TrainResult {
    std::vector<MetricsRow> rows;
    std::vector<RetrainEvent> retrains;
    bool has_ensemble = false;
    NeuralEnsemble ensemble;
};

/// The full learning loop: warmup random episodes, epsilon-greedy acting,
/// from-scratch retraining every `retrain_interval` episodes, and a
/// noise-off greedy evaluation at each retraining. One metrics row per
/// episode, flushed immediately when a stream is given; `on_row` sees each
/// row as it is produced.
inline TrainResult run_training(const RunConfig& cfg, const Calibration& cal,
                                std::ostream* metrics_out = nullptr,
                                const std::function<void(const MetricsRow&)>& on_row = {}) {
    cfg.validate();
    cal.validate();
    const int T = cfg.env.horizon;
    const int A = cfg.env.action_count();
    std::vector<double> action_norms(static_cast<std::size_t>(A));
    for (int a = 0; a < A; ++a) action_norms[static_cast<std::size_t>(a)] = cfg.env.action_norm(a);

    Environment env(cfg.env, cal, rng_substream(cfg.master_seed, "friction"),
                    rng_substream(cfg.master_seed, "noise"));
    RngStream explore = rng_substream(cfg.master_seed, "explore");
    ReplayMemory memory(T);
    NeuralTrainer trainer{cfg.learner.q1_hidden, cfg.learner.q_hidden, cfg.learner.train,
                          cfg.threads};

    TrainResult result;
    if (metrics_out) *metrics_out << metrics_header() << '\n' << std::flush;

    int retrain_count = 0;
    for (long i = 0; i < cfg.episodes; ++i) {
        const double eps = epsilon(cfg.learner.epsilon0, cfg.learner.decay, i);
        auto policy = [&](int t, const Eigen::VectorXd& x, RngStream& rng) {
            if (!result.has_ensemble) return rng.uniform_int(A);
            return select_action(result.ensemble, x, t, eps, rng, action_norms);
        };
        env.reset();
        EpisodeResult ep = run_episode(env, policy, cfg.scenario, explore);
        memory.append_episode(std::move(ep.transitions));

        MetricsRow row;
        row.episode = i;
        row.epsilon = eps;
        row.reward = ep.terminal_reward;
        row.friction = ep.friction;
        row.scenario = to_string(cfg.scenario);
        row.seed = cfg.master_seed;

        const long done = i + 1;
        if (done >= cfg.learner.warmup &&
            (done - cfg.learner.warmup) % cfg.learner.retrain_interval == 0) {
            auto rr = retrain(memory, cfg.learner, cfg.scenario,
                              result.has_ensemble ? &result.ensemble : nullptr, trainer,
                              action_norms,
                              rng_substream(cfg.master_seed,
                                            "retrain/" + std::to_string(retrain_count)));
            result.ensemble = std::move(rr.ensemble);
            result.has_ensemble = true;
            const double value = expected_greedy_reward(
                result.ensemble, cfg.env, cal, EvalConfig{cfg.eval_rollouts, cfg.eval_noise},
                rng_substream(cfg.master_seed, "eval/" + std::to_string(retrain_count)),
                cfg.threads);
            RetrainEvent ev;
            ev.episodes_completed = done;
            ev.expected_reward = value;
            ev.cv_r2 = rr.cv_r2;
            row.expected_reward = value;
            for (std::size_t t = 0; t + 1 < static_cast<std::size_t>(T) && t < 4; ++t)
                row.r2[t] = rr.cv_r2[t];
            result.retrains.push_back(std::move(ev));
            ++retrain_count;
        }
        if (metrics_out) {
            write_metrics_row(*metrics_out, row);
            metrics_out->flush();
        }
        if (on_row) on_row(row);
        result.rows.push_back(std::move(row));
    }
    return result;
}

/// Loads the configured calibration file, computing and saving it first if
/// it does not exist yet (seeded from the master seed's "calib" stream).
inline Calibration ensure_calibration(const RunConfig& cfg) {
    const std::string path = cfg.calibration_file();
    if (std::filesystem::exists(path)) return load_calibration(path);
    const Calibration cal =
        calibrate_extrema(cfg.env, cfg.calibration_samples, rng_substream(cfg.master_seed, "calib"));
    std::filesystem::create_directories(std::filesystem::path(path).parent_path().empty()
                                            ? "."
                                            : std::filesystem::path(path).parent_path().string());
    save_calibration(cal, path);
    return cal;
}

inline void cmd_calibrate(const RunConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    const Calibration cal = calibrate_extrema(cfg.env, cfg.calibration_samples,
                                              rng_substream(cfg.master_seed, "calib"));
    save_calibration(cal, cfg.calibration_file());
}

inline void cmd_train(const RunConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    const Calibration cal = ensure_calibration(cfg);
    std::ofstream metrics(cfg.out_dir + "/metrics.csv");
    if (!metrics) throw config_error("cmd_train: cannot open metrics.csv under " + cfg.out_dir);
    const TrainResult result = run_training(cfg, cal, &metrics);
    if (result.has_ensemble) save_ensemble(result.ensemble, cfg.out_dir + "/ensemble.txt");
}

inline void cmd_oracle(const RunConfig& cfg, bool write_matrix = false) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    const Calibration cal = ensure_calibration(cfg);
    const RewardMatrix mat = enumerate_rewards(cfg.env, cal);
    const auto masses = friction_masses(cfg.env.friction);
    const OracleSummary summary = oracle_summary(mat, masses, cfg.nominal_bin - 1);
    save_oracle_summary_csv(summary, cfg.out_dir + "/oracle_summary.csv");
    if (write_matrix) save_reward_matrix_csv(mat, cfg.out_dir + "/reward_matrix.csv");
}

inline void cmd_evaluate(const RunConfig& cfg, const std::string& ensemble_path = "") {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    const Calibration cal = ensure_calibration(cfg);
    const std::string path =
        ensemble_path.empty() ? cfg.out_dir + "/ensemble.txt" : ensemble_path;
    const NeuralEnsemble ens = load_ensemble(path);
    const double value =
        expected_greedy_reward(ens, cfg.env, cal, EvalConfig{cfg.eval_rollouts, cfg.eval_noise},
                               rng_substream(cfg.master_seed, "eval"), cfg.threads);
    std::ofstream out(cfg.out_dir + "/evaluation.csv");
    if (!out) throw config_error("cmd_evaluate: cannot open evaluation.csv");
    out << "key,value\n";
    out << "expected_reward," << detail::format_full(value) << '\n';
    out << "scenario," << to_string(ens.mode) << '\n';
    out << "eval_noise," << (cfg.eval_noise ? "true" : "false") << '\n';
    out << "eval_rollouts," << cfg.eval_rollouts << '\n';
}

struct SweepCell {
    double alpha = 0.0;
    double epsilon0 = 0.0;
    int seed_index = 0;
    std::uint64_t derived_seed = 0;
    std::string rel_dir;
};

/// Deterministic sweep plan: one run per (alpha, epsilon0, seed index) with
/// a sub-seed derived from the master seed and the cell coordinates.
inline std::vector<SweepCell> sweep_plan(const RunConfig& cfg) {
    std::vector<SweepCell> plan;
    for (std::size_t ai = 0; ai < cfg.sweep_alphas.size(); ++ai)
        for (std::size_t ei = 0; ei < cfg.sweep_epsilons.size(); ++ei)
            for (int s = 0; s < cfg.sweep_seeds; ++s) {
                SweepCell cell;
                cell.alpha = cfg.sweep_alphas[ai];
                cell.epsilon0 = cfg.sweep_epsilons[ei];
                cell.seed_index = s;
                const std::string tag = "sweep/a" + std::to_string(ai) + "/e" +
                                        std::to_string(ei) + "/s" + std::to_string(s);
                cell.derived_seed =
                    detail::splitmix64(cfg.master_seed ^ detail::fnv1a64(tag));
                char a_buf[32], e_buf[32];
                std::snprintf(a_buf, sizeof(a_buf), "%g", cell.alpha);
                std::snprintf(e_buf, sizeof(e_buf), "%g", cell.epsilon0);
                cell.rel_dir = std::string("sweep/a") + a_buf + "_e" + e_buf + "/seed" +
                               std::to_string(s);
                plan.push_back(std::move(cell));
            }
    return plan;
}

struct WindowMeans {
    std::optional<double> first;  // episodes [0, 250)
    std::optional<double> mid;    // episodes [1250, 1500)
    std::optional<double> last;   // episodes [N-250, N)
};

inline WindowMeans reward_windows(const std::vector<MetricsRow>& rows) {
    const long n = static_cast<long>(rows.size());
    auto mean_over = [&rows](long lo, long hi) -> std::optional<double> {
        lo = std::max<long>(lo, 0);
        hi = std::min<long>(hi, static_cast<long>(rows.size()));
        if (hi <= lo) return std::nullopt;
        double s = 0.0;
        for (long i = lo; i < hi; ++i) s += rows[static_cast<std::size_t>(i)].reward;
        return s / static_cast<double>(hi - lo);
    };
    WindowMeans w;
    w.first = mean_over(0, 250);
    w.mid = mean_over(1250, 1500);
    w.last = mean_over(n - 250, n);
    return w;
}

/// Runs every sweep cell (failures are recorded, not fatal), then
/// aggregates the per-cell reward windows across seeds into
/// sweep_summary.csv. Cells run concurrently; each writes only its own
/// directory.
inline void cmd_sweep(const RunConfig& cfg) {
    cfg.validate();
    std::filesystem::create_directories(cfg.out_dir);
    const Calibration cal = ensure_calibration(cfg);
    const std::vector<SweepCell> plan = sweep_plan(cfg);
    const int n = static_cast<int>(plan.size());
    std::vector<std::string> failure(static_cast<std::size_t>(n));
    std::vector<WindowMeans> windows(static_cast<std::size_t>(n));

    parallel_for(n, cfg.threads, [&](int i) {
        const SweepCell& cell = plan[static_cast<std::size_t>(i)];
        RunConfig run = cfg;
        run.learner.alpha = cell.alpha;
        run.learner.epsilon0 = cell.epsilon0;
        run.master_seed = cell.derived_seed;
        run.out_dir = cfg.out_dir + "/" + cell.rel_dir;
        run.calibration_path = cfg.calibration_file();
        run.threads = 1;
        try {
            std::filesystem::create_directories(run.out_dir);
            std::ofstream metrics(run.out_dir + "/metrics.csv");
            if (!metrics) throw config_error("cmd_sweep: cannot open metrics.csv");
            const TrainResult result = run_training(run, cal, &metrics);
            windows[static_cast<std::size_t>(i)] = reward_windows(result.rows);
        } catch (const std::exception& e) {
            failure[static_cast<std::size_t>(i)] = e.what();
        }
    });

    std::ofstream out(cfg.out_dir + "/sweep_summary.csv");
    if (!out) throw config_error("cmd_sweep: cannot open sweep_summary.csv");
    out << "alpha,epsilon0,seeds_ok,seeds_failed,mean_reward_first250,mean_reward_1250_1500,"
           "mean_reward_last250\n";
    const int per_cell = cfg.sweep_seeds;
    for (std::size_t ai = 0; ai < cfg.sweep_alphas.size(); ++ai)
        for (std::size_t ei = 0; ei < cfg.sweep_epsilons.size(); ++ei) {
            const std::size_t base = (ai * cfg.sweep_epsilons.size() + ei) *
                                     static_cast<std::size_t>(per_cell);
            int ok = 0, failed = 0;
            double first = 0.0, mid = 0.0, last = 0.0;
            int n_first = 0, n_mid = 0, n_last = 0;
            for (int s = 0; s < per_cell; ++s) {
                const std::size_t i = base + static_cast<std::size_t>(s);
                if (!failure[i].empty()) {
                    ++failed;
                    continue;
                }
                ++ok;
                if (windows[i].first) { first += *windows[i].first; ++n_first; }
                if (windows[i].mid) { mid += *windows[i].mid; ++n_mid; }
                if (windows[i].last) { last += *windows[i].last; ++n_last; }
            }
            out << detail::format_full(cfg.sweep_alphas[ai]) << ','
                << detail::format_full(cfg.sweep_epsilons[ei]) << ',' << ok << ',' << failed << ',';
            if (n_first) out << detail::format_full(first / n_first);
            out << ',';
            if (n_mid) out << detail::format_full(mid / n_mid);
            out << ',';
            if (n_last) out << detail::format_full(last / n_last);
            out << '\n';
        }
    for (int i = 0; i < n; ++i)
        if (!failure[static_cast<std::size_t>(i)].empty())
            std::cerr << "sweep cell " << plan[static_cast<std::size_t>(i)].rel_dir
                      << " failed: " << failure[static_cast<std::size_t>(i)] << '\n';
}

}  // namespace drawq
