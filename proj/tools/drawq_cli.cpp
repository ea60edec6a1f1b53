// Command-line harness: calibrate | oracle | train | evaluate | sweep.
// Exit codes: 0 success, 2 configuration error, 3 numerical error,
// 4 contract violation.

#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "drawq/drawq.hpp"

namespace {

struct CommonFlags {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<std::string> scenario;
    std::optional<long> episodes;
    bool no_noise = false;
};

void add_common(CLI::App* cmd, CommonFlags& flags) {
    cmd->add_option("--config", flags.config_path, "key=value configuration file");
    cmd->add_option("--seed", flags.seed, "master seed (overrides config)");
    cmd->add_option("--out", flags.out, "output directory (overrides config)");
    cmd->add_option("--scenario", flags.scenario, "observability: full, partial or blind")
        ->check(CLI::IsMember({"full", "partial", "blind"}));
    cmd->add_option("--episodes", flags.episodes, "number of training episodes");
    cmd->add_flag("--no-noise", flags.no_noise, "disable observation noise");
}

drawq::RunConfig make_config(const CommonFlags& flags) {
    drawq::RunConfig cfg;
    if (!flags.config_path.empty()) cfg = drawq::load_config(flags.config_path);
    if (flags.seed) cfg.master_seed = *flags.seed;
    if (flags.out) cfg.out_dir = *flags.out;
    if (flags.scenario) cfg.scenario = drawq::parse_mode(*flags.scenario);
    if (flags.episodes) cfg.episodes = *flags.episodes;
    if (flags.no_noise) cfg.env.noise = false;
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Fitted Q-learning for fixed-horizon deep-drawing control"};
    app.require_subcommand(1);

    CommonFlags calibrate_flags, oracle_flags, train_flags, evaluate_flags, sweep_flags;
    bool oracle_matrix = false;
    std::string evaluate_ensemble;

    CLI::App* calibrate = app.add_subcommand("calibrate", "sample reward-term extrema");
    add_common(calibrate, calibrate_flags);
    CLI::App* oracle = app.add_subcommand("oracle", "enumerate rewards, baseline and bounds");
    add_common(oracle, oracle_flags);
    oracle->add_flag("--matrix", oracle_matrix, "also export the full reward matrix CSV");
    CLI::App* train = app.add_subcommand("train", "run the learning loop");
    add_common(train, train_flags);
    CLI::App* evaluate = app.add_subcommand("evaluate", "expected greedy reward of a saved ensemble");
    add_common(evaluate, evaluate_flags);
    evaluate->add_option("--ensemble", evaluate_ensemble, "ensemble file (default <out>/ensemble.txt)");
    CLI::App* sweep = app.add_subcommand("sweep", "learning-rate / exploration grid");
    add_common(sweep, sweep_flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (calibrate->parsed()) drawq::cmd_calibrate(make_config(calibrate_flags));
        if (oracle->parsed()) drawq::cmd_oracle(make_config(oracle_flags), oracle_matrix);
        if (train->parsed()) drawq::cmd_train(make_config(train_flags));
        if (evaluate->parsed()) drawq::cmd_evaluate(make_config(evaluate_flags), evaluate_ensemble);
        if (sweep->parsed()) drawq::cmd_sweep(make_config(sweep_flags));
    } catch (const drawq::config_error& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const drawq::numerical_error& e) {
        std::cerr << "numerical error: " << e.what() << '\n';
        return 3;
    } catch (const drawq::contract_error& e) {
        std::cerr << "contract violation: " << e.what() << '\n';
        return 4;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
