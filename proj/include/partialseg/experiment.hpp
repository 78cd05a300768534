#pragma once

#include <filesystem>
#include <map>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "partialseg/metrics.hpp"
#include "partialseg/trainer.hpp"

namespace partialseg {

// Exit codes shared by every subcommand.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitCheckFailed = 3;

// Experiment description: which data, which networks (dataset unions), which
// seeds, and the training configuration. Networks are written as dataset ids
// joined by '+' ("F", "F+P2"), with "All" meaning the union of everything.
struct ExperimentConfig {
    std::string data_dir = "data";
    std::string out_dir = "results";
    std::vector<std::string> networks{"F", "All"};
    std::vector<std::uint64_t> seeds{1, 2, 3};
    TrainConfig train;
    std::vector<std::pair<double, double>> sweep_ratios{{4, 1}, {3, 1}, {2, 1}, {1, 1}, {1, 2},
                                                        {1, 3}, {1, 4}, {1, 0}, {0, 1}};
    std::vector<std::pair<int, int>> sensitivity_splits{
        {24, 0}, {19, 5}, {14, 10}, {9, 15}, {4, 20}};
    int image_size = 64;
    std::uint64_t data_seed = 7;

    static ExperimentConfig from_json_file(const std::filesystem::path& path);
    static ExperimentConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
    std::string config_hash() const;  // hex FNV of the canonical dump
};

// Dataset ids making up a network, fully labeled dataset first.
std::vector<std::string> resolve_network(const std::string& network, const PhantomData& data);

LabelMask predict(const PixelModel& model, const PixelField& features);

// Scores a model on every dataset's test split.
struct NetworkEvaluation {
    std::map<std::string, MetricsReport> by_dataset;
    double overall_mean_dice = 0.0;  // mean over all (dataset, class) rows
    double overall_mean_hd = 0.0;    // sentinel rows excluded
};

NetworkEvaluation evaluate_network(const PhantomData& data, const FeatureExtractor& extractor,
                                   const PixelModel& model);

// Worker-thread cap for independent runs: PARTIALSEG_THREADS, else hardware
// concurrency, never more than `runs`.
int worker_thread_cap(std::size_t runs);

// Subcommand cores. Each returns a process exit code; the CLI binary is a
// thin argument-parsing wrapper around these.
int cmd_generate(const ExperimentConfig& config, std::ostream& out);
int cmd_train(const ExperimentConfig& config, bool resume, bool paranoid, std::ostream& out);
int cmd_evaluate(const ExperimentConfig& config, std::ostream& out);

enum class SweepMode { Weights, Sensitivity };
int cmd_sweep(const ExperimentConfig& config, SweepMode mode, std::ostream& out);

int cmd_gradcheck(const std::vector<std::string>& losses, int trials, std::uint64_t seed,
                  std::ostream& out);

}  // namespace partialseg
