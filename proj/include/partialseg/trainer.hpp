#pragma once

#include <deque>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "partialseg/features.hpp"
#include "partialseg/losses.hpp"
#include "partialseg/model.hpp"
#include "partialseg/synthdata.hpp"

namespace partialseg {

struct TrainConfig {
    int stage1_epochs = 40;
    int stage2_epochs = 40;
    int batch_size = 2;
    int patches_per_epoch = 50;  // quota drawn from each dataset per epoch
    double foreground_min_fraction = 0.33;
    double initial_lr = 0.1;
    int plateau_patience = 10;
    double plateau_min_delta = 1e-3;
    double decay_factor = 0.8;
    LossWeights weights;
    OptimizerKind optimizer = OptimizerKind::Adam;
    int hidden_width = 20;
    FeatureConfig features;
    std::uint64_t seed = 1;
    bool paranoid = false;
    int paranoid_interval = 25;  // spot gradcheck every K batches

    void validate() const;
};

struct EpochRecord {
    int stage = 0;
    int epoch = 0;  // global epoch index, continuous across stages
    double lr = 0.0;
    double loss_total = 0.0;
    LossTerms terms;
    double wall_seconds = 0.0;
};

struct TrainLog {
    std::vector<EpochRecord> epochs;
};

// CSV with one row per epoch; `header` lines are prefixed with '#'.
void write_train_log_csv(std::ostream& out, const TrainLog& log,
                         const std::vector<std::string>& header);

// Decays the learning rate by `factor` whenever the best loss seen in a full
// window improves on the window's start by less than min_delta (strict
// comparison). The window clears after a decay, so consecutive decays are at
// least `patience` epochs apart.
class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, int patience, double min_delta, double factor);

    double lr() const { return lr_; }
    int decay_count() const { return decays_; }
    void observe(double epoch_loss);
    void reset_window() { window_.clear(); }
    void restart(double lr) {
        lr_ = lr;
        window_.clear();
    }

    std::vector<double> serialize() const;
    void restore(const std::vector<double>& state);

private:
    double lr_;
    int patience_;
    double min_delta_;
    double factor_;
    int decays_ = 0;
    std::deque<double> window_;
};

// Pure decision rule behind the scheduler, applied to a window of the most
// recent `patience` epoch-mean losses (oldest first).
double plateau_decision(const std::vector<double>& window, double current_lr, double min_delta,
                        double factor);

// One dataset prepared for training: train-split samples with cached feature
// planes and a foreground index for biased batch sampling.
struct TrainDataset {
    const DatasetDescriptor* descriptor = nullptr;
    std::vector<const Sample*> samples;
    std::vector<PixelField> features;  // parallel to samples
    std::vector<int> with_foreground;  // indices into samples
    int background_group = 0;
};

TrainDataset prepare_train_dataset(const PhantomData& data, const std::string& dataset_id,
                                   const FeatureExtractor& extractor);

// Drawn indices into dataset.samples; at least
// ceil(foreground_min_fraction * batch_size) of them contain foreground in
// their visible mask.
std::vector<int> sample_batch(const TrainDataset& dataset, const TrainConfig& config, Rng& rng);

// Owns the model, optimizer, scheduler, RNG streams and log of one training
// run, so a checkpoint can capture the entire state and resume exactly.
class Trainer {
public:
    Trainer(const TrainConfig& config, const ExclusionMap& exclusion, int feature_dim,
            int num_classes);

    // Stage 1: regular losses on the fully annotated dataset only.
    void train_stage1(const TrainDataset& full_dataset);

    // Stage 2: joint training on the dataset union with provenance-dispatched
    // losses. An empty partial list behaves like continued stage 1.
    void train_stage2(const std::vector<const TrainDataset*>& datasets);

    const PixelModel& model() const { return model_; }
    const TrainLog& log() const { return log_; }
    const TrainConfig& config() const { return config_; }
    double current_lr() const { return scheduler_.lr(); }
    int stage1_done() const { return stage1_done_; }
    int stage2_done() const { return stage2_done_; }

    // On resume the experiment config governs how far to train; the
    // checkpoint only supplies state.
    void adopt_stage_targets(const TrainConfig& config) {
        config_.stage1_epochs = config.stage1_epochs;
        config_.stage2_epochs = config.stage2_epochs;
        config_.paranoid = config.paranoid;
    }

    // Checkpoint written after every completed epoch when set.
    void set_checkpoint_path(std::filesystem::path path) { checkpoint_path_ = std::move(path); }
    void save_checkpoint(const std::filesystem::path& path) const;
    static Trainer load_checkpoint(const std::filesystem::path& path,
                                   const ExclusionMap& exclusion);

    // Provenance recorded in checkpoint headers and log files.
    void set_provenance(std::string config_hash, std::string manifest_hash);
    const std::string& config_hash() const { return config_hash_; }
    const std::string& manifest_hash() const { return manifest_hash_; }

private:
    void run_epochs(int stage, int target_epochs, int& done_counter,
                    const std::vector<const TrainDataset*>& datasets);
    double run_batch(const TrainDataset& dataset, const std::vector<int>& batch,
                     LossTerms& term_sums, int& term_samples_full, int& term_samples_partial);
    void spot_gradcheck(const TrainDataset& dataset, int sample_index);

    TrainConfig config_;
    ExclusionMap exclusion_;
    PixelModel model_;
    Optimizer optimizer_;
    PlateauScheduler scheduler_;
    Rng sample_rng_;
    Rng paranoid_rng_;
    TrainLog log_;
    int stage1_done_ = 0;
    int stage2_done_ = 0;
    long batch_counter_ = 0;
    std::optional<std::filesystem::path> checkpoint_path_;
    std::string config_hash_ = "0";
    std::string manifest_hash_ = "0";

    Trainer(TrainConfig config, const ExclusionMap& exclusion, PixelModel model);
};

}  // namespace partialseg
