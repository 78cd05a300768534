#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "partialseg/experiment.hpp"

namespace {

partialseg::ExperimentConfig load_config(const std::string& config_path) {
    if (config_path.empty()) return {};
    return partialseg::ExperimentConfig::from_json_file(config_path);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint segmentation training on unions of fully and partially labeled phantoms"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    app.add_option("--config", config_path, "Experiment config JSON")->capture_default_str();

    // generate
    auto* generate = app.add_subcommand("generate", "Write the synthetic phantom datasets");
    std::string generate_out;
    std::uint64_t generate_seed = 0;
    bool generate_seed_set = false, generate_size_set = false;
    int generate_size = 0;
    generate->add_option("--out", generate_out, "Output data directory")->required();
    generate->add_option("--seed", generate_seed, "Generator master seed")
        ->each([&](const std::string&) { generate_seed_set = true; });
    generate->add_option("--size", generate_size, "Image side length in pixels")
        ->each([&](const std::string&) { generate_size_set = true; });

    // train
    auto* train = app.add_subcommand("train", "Train the configured networks");
    std::string train_out, train_data;
    std::uint64_t train_seed = 0;
    bool train_seed_set = false, resume = false, paranoid = false;
    train->add_option("--data", train_data, "Data directory (overrides config)");
    train->add_option("--out", train_out, "Results directory (overrides config)");
    train->add_option("--seed", train_seed, "Train a single seed instead of the config list")
        ->each([&](const std::string&) { train_seed_set = true; });
    train->add_flag("--resume", resume, "Continue from the last checkpoint epoch");
    train->add_flag("--paranoid", paranoid, "Spot-gradcheck sampled batches while training");

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score checkpoints on the test splits");
    std::string eval_out, eval_data;
    evaluate->add_option("--data", eval_data, "Data directory (overrides config)");
    evaluate->add_option("--out", eval_out, "Results directory (overrides config)");

    // sweep
    auto* sweep = app.add_subcommand("sweep", "Loss-weight ratio or annotation-budget sweeps");
    std::string sweep_mode = "weights", sweep_out, sweep_data;
    sweep->add_option("--mode", sweep_mode, "weights | sensitivity")
        ->check(CLI::IsMember({"weights", "sensitivity"}));
    sweep->add_option("--data", sweep_data, "Data directory (overrides config)");
    sweep->add_option("--out", sweep_out, "Results directory (overrides config)");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference checks for all losses");
    std::vector<std::string> gradcheck_losses;
    int gradcheck_trials = 100;
    std::uint64_t gradcheck_seed = 20240901;
    gradcheck->add_option("--losses", gradcheck_losses, "Subset of losses to check")
        ->delimiter(',');
    gradcheck->add_option("--trials", gradcheck_trials, "Random configurations per loss");
    gradcheck->add_option("--seed", gradcheck_seed, "Trial RNG seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : partialseg::kExitUsage;
    }

    try {
        partialseg::ExperimentConfig config = load_config(config_path);

        if (generate->parsed()) {
            config.data_dir = generate_out;
            if (generate_seed_set) config.data_seed = generate_seed;
            if (generate_size_set) config.image_size = generate_size;
            return partialseg::cmd_generate(config, std::cout);
        }
        if (train->parsed()) {
            if (!train_data.empty()) config.data_dir = train_data;
            if (!train_out.empty()) config.out_dir = train_out;
            if (train_seed_set) config.seeds = {train_seed};
            return partialseg::cmd_train(config, resume, paranoid, std::cout);
        }
        if (evaluate->parsed()) {
            if (!eval_data.empty()) config.data_dir = eval_data;
            if (!eval_out.empty()) config.out_dir = eval_out;
            return partialseg::cmd_evaluate(config, std::cout);
        }
        if (sweep->parsed()) {
            if (!sweep_data.empty()) config.data_dir = sweep_data;
            if (!sweep_out.empty()) config.out_dir = sweep_out;
            return partialseg::cmd_sweep(config,
                                         sweep_mode == "weights"
                                             ? partialseg::SweepMode::Weights
                                             : partialseg::SweepMode::Sensitivity,
                                         std::cout);
        }
        if (gradcheck->parsed())
            return partialseg::cmd_gradcheck(gradcheck_losses, gradcheck_trials, gradcheck_seed,
                                             std::cout);
    } catch (const partialseg::ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return partialseg::kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return partialseg::kExitRuntime;
    }
    return partialseg::kExitUsage;
}
