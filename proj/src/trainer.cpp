#include "partialseg/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "partialseg/gradcheck.hpp"

namespace partialseg {

using nlohmann::json;

void TrainConfig::validate() const {
    if (stage1_epochs < 0 || stage2_epochs < 0) throw ConfigError("epoch counts must be >= 0");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (patches_per_epoch < 1) throw ConfigError("patches_per_epoch must be >= 1");
    if (foreground_min_fraction < 0.0 || foreground_min_fraction > 1.0)
        throw ConfigError("foreground_min_fraction must be in [0, 1]");
    if (initial_lr <= 0.0) throw ConfigError("initial_lr must be positive");
    if (plateau_patience < 1) throw ConfigError("plateau_patience must be >= 1");
    if (plateau_min_delta < 0.0) throw ConfigError("plateau_min_delta must be >= 0");
    if (decay_factor <= 0.0 || decay_factor >= 1.0)
        throw ConfigError("decay_factor must be in (0, 1)");
    if (hidden_width < 0) throw ConfigError("hidden_width must be >= 0");
    if (paranoid_interval < 1) throw ConfigError("paranoid_interval must be >= 1");
    weights.validate();
}

void write_train_log_csv(std::ostream& out, const TrainLog& log,
                         const std::vector<std::string>& header) {
    for (const auto& line : header) out << "# " << line << "\n";
    out << "stage,epoch,lr,loss_total,regular_ce,regular_dice,marginal_ce,marginal_dice,"
           "exclusion_ce,exclusion_dice,wall_seconds\n";
    char buffer[512];
    for (const EpochRecord& r : log.epochs) {
        std::snprintf(buffer, sizeof(buffer),
                      "%d,%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f\n", r.stage,
                      r.epoch, r.lr, r.loss_total, r.terms.regular_ce, r.terms.regular_dice,
                      r.terms.marginal_ce, r.terms.marginal_dice, r.terms.exclusion_ce,
                      r.terms.exclusion_dice, r.wall_seconds);
        out << buffer;
    }
}

double plateau_decision(const std::vector<double>& window, double current_lr, double min_delta,
                        double factor) {
    if (window.size() < 2) return current_lr;
    double best_rest = window[1];
    for (std::size_t i = 2; i < window.size(); ++i) best_rest = std::min(best_rest, window[i]);
    const double improvement = window.front() - best_rest;
    return improvement < min_delta ? current_lr * factor : current_lr;
}

PlateauScheduler::PlateauScheduler(double initial_lr, int patience, double min_delta,
                                   double factor)
    : lr_(initial_lr), patience_(patience), min_delta_(min_delta), factor_(factor) {}

void PlateauScheduler::observe(double epoch_loss) {
    window_.push_back(epoch_loss);
    if (static_cast<int>(window_.size()) > patience_) window_.pop_front();
    if (static_cast<int>(window_.size()) < patience_) return;
    const std::vector<double> window(window_.begin(), window_.end());
    const double next = plateau_decision(window, lr_, min_delta_, factor_);
    if (next < lr_) {
        lr_ = next;
        ++decays_;
        window_.clear();
    }
}

std::vector<double> PlateauScheduler::serialize() const {
    std::vector<double> state{lr_, static_cast<double>(decays_)};
    state.insert(state.end(), window_.begin(), window_.end());
    return state;
}

void PlateauScheduler::restore(const std::vector<double>& state) {
    if (state.size() < 2) throw VersionMismatch("scheduler state too short");
    lr_ = state[0];
    decays_ = static_cast<int>(state[1]);
    window_.assign(state.begin() + 2, state.end());
}

TrainDataset prepare_train_dataset(const PhantomData& data, const std::string& dataset_id,
                                   const FeatureExtractor& extractor) {
    TrainDataset out;
    out.descriptor = &data.descriptor(dataset_id);
    out.background_group = out.descriptor->partition.group_of(0);
    out.samples = data.train_samples(dataset_id);
    out.features.reserve(out.samples.size());
    for (std::size_t i = 0; i < out.samples.size(); ++i) {
        out.features.push_back(extractor.extract(out.samples[i]->image));
        if (out.samples[i]->visible_has_foreground(out.background_group))
            out.with_foreground.push_back(static_cast<int>(i));
    }
    return out;
}

std::vector<int> sample_batch(const TrainDataset& dataset, const TrainConfig& config, Rng& rng) {
    if (dataset.samples.empty()) throw ConfigError("sample_batch on an empty dataset");
    const int needed =
        static_cast<int>(std::ceil(config.foreground_min_fraction * config.batch_size));
    if (needed > 0 && dataset.with_foreground.empty())
        throw NoForegroundAvailable("dataset '" + dataset.descriptor->id +
                                    "' has no samples with visible foreground");

    std::vector<int> batch(config.batch_size);
    for (int b = 0; b < config.batch_size; ++b)
        batch[b] = static_cast<int>(rng.below(dataset.samples.size()));

    auto has_fg = [&dataset](int index) {
        return std::binary_search(dataset.with_foreground.begin(), dataset.with_foreground.end(),
                                  index);
    };
    int have = 0;
    for (int index : batch) have += has_fg(index);
    for (int b = 0; b < config.batch_size && have < needed; ++b) {
        if (has_fg(batch[b])) continue;
        batch[b] = dataset.with_foreground[rng.below(dataset.with_foreground.size())];
        ++have;
    }
    return batch;
}

namespace {

PixelModel init_model(const TrainConfig& config, int feature_dim, int num_classes) {
    Rng init_rng = Rng(config.seed).split(1);
    return PixelModel(ModelConfig{feature_dim, config.hidden_width, num_classes}, init_rng);
}

}  // namespace

Trainer::Trainer(const TrainConfig& config, const ExclusionMap& exclusion, int feature_dim,
                 int num_classes)
    : config_(config), exclusion_(exclusion),
      model_(init_model(config, feature_dim, num_classes)),
      optimizer_(config.optimizer, model_.params().size()),
      scheduler_(config.initial_lr, config.plateau_patience, config.plateau_min_delta,
                 config.decay_factor),
      sample_rng_(Rng(config.seed).split(2)), paranoid_rng_(Rng(config.seed).split(3)) {
    config_.validate();
}

Trainer::Trainer(TrainConfig config, const ExclusionMap& exclusion, PixelModel model)
    : config_(std::move(config)), exclusion_(exclusion), model_(std::move(model)),
      optimizer_(config_.optimizer, model_.params().size()),
      scheduler_(config_.initial_lr, config_.plateau_patience, config_.plateau_min_delta,
                 config_.decay_factor),
      sample_rng_(Rng(config_.seed).split(2)), paranoid_rng_(Rng(config_.seed).split(3)) {}

void Trainer::train_stage1(const TrainDataset& full_dataset) {
    if (!full_dataset.descriptor->fully_labeled())
        throw ConfigError("stage 1 requires the fully labeled dataset");
    run_epochs(1, config_.stage1_epochs, stage1_done_, {&full_dataset});
}

void Trainer::train_stage2(const std::vector<const TrainDataset*>& datasets) {
    if (datasets.empty()) throw ConfigError("stage 2 needs at least one dataset");
    // Joint training is a fresh phase: the loss scale changes with the new
    // terms, so the schedule restarts from the initial rate.
    if (stage2_done_ == 0) scheduler_.restart(config_.initial_lr);
    run_epochs(2, config_.stage2_epochs, stage2_done_, datasets);
}

void Trainer::run_epochs(int stage, int target_epochs, int& done_counter,
                         const std::vector<const TrainDataset*>& datasets) {
    const int batches_per_dataset =
        (config_.patches_per_epoch + config_.batch_size - 1) / config_.batch_size;

    while (done_counter < target_epochs) {
        const auto start = std::chrono::steady_clock::now();
        const double epoch_lr = scheduler_.lr();

        double loss_sum = 0.0;
        int batches = 0;
        LossTerms term_sums;
        int samples_full = 0, samples_partial = 0;

        for (int round = 0; round < batches_per_dataset; ++round) {
            for (const TrainDataset* dataset : datasets) {
                const std::vector<int> batch = sample_batch(*dataset, config_, sample_rng_);
                loss_sum += run_batch(*dataset, batch, term_sums, samples_full, samples_partial);
                ++batches;
            }
        }

        const double epoch_loss = loss_sum / batches;
        EpochRecord record;
        record.stage = stage;
        record.epoch = stage1_done_ + stage2_done_ + 1;
        record.lr = epoch_lr;
        record.loss_total = epoch_loss;
        if (samples_full > 0) {
            record.terms.regular_ce = term_sums.regular_ce / samples_full;
            record.terms.regular_dice = term_sums.regular_dice / samples_full;
        }
        if (samples_partial > 0) {
            record.terms.marginal_ce = term_sums.marginal_ce / samples_partial;
            record.terms.marginal_dice = term_sums.marginal_dice / samples_partial;
            record.terms.exclusion_ce = term_sums.exclusion_ce / samples_partial;
            record.terms.exclusion_dice = term_sums.exclusion_dice / samples_partial;
        }
        record.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        log_.epochs.push_back(record);

        scheduler_.observe(epoch_loss);
        ++done_counter;
        if (checkpoint_path_) save_checkpoint(*checkpoint_path_);
    }
}

double Trainer::run_batch(const TrainDataset& dataset, const std::vector<int>& batch,
                          LossTerms& term_sums, int& samples_full, int& samples_partial) {
    std::vector<double> grad(model_.params().size(), 0.0);
    double batch_loss = 0.0;

    for (int index : batch) {
        const Sample& sample = *dataset.samples[index];
        const PixelField& features = dataset.features[index];
        const LabelMask& target =
            dataset.descriptor->fully_labeled() ? sample.gt_full : sample.gt_visible;

        const auto diverged = [&](const std::string& detail) {
            return DivergedLoss("training diverged in dataset '" + dataset.descriptor->id +
                                "', sample '" + sample.id + "', epoch " +
                                std::to_string(stage1_done_ + stage2_done_ + 1) + ", lr " +
                                std::to_string(scheduler_.lr()) + ": " + detail);
        };

        LossTerms terms;
        LossReport report;
        try {
            const LogitMap logits = model_.forward(features);
            report = combined_loss(logits, target, *dataset.descriptor, exclusion_,
                                   config_.weights, &terms);
        } catch (const NonFiniteInput& e) {
            throw diverged(e.what());
        }
        if (!std::isfinite(report.value)) throw diverged("non-finite loss value");

        batch_loss += report.value;
        term_sums += terms;
        if (dataset.descriptor->fully_labeled())
            ++samples_full;
        else
            ++samples_partial;
        model_.backward(features, report.gradient, grad);
    }

    if (config_.paranoid && batch_counter_ % config_.paranoid_interval == 0)
        spot_gradcheck(dataset, batch.front());
    ++batch_counter_;

    const double inv = 1.0 / batch.size();
    for (double& g : grad) g *= inv;
    optimizer_.step(model_.params(), grad, scheduler_.lr());
    return batch_loss * inv;
}

void Trainer::spot_gradcheck(const TrainDataset& dataset, int sample_index) {
    const Sample& sample = *dataset.samples[sample_index];
    const LabelMask& target =
        dataset.descriptor->fully_labeled() ? sample.gt_full : sample.gt_visible;
    const LogitMap logits = model_.forward(dataset.features[sample_index]);

    LossReportFn fn = [&](const LogitMap& a) {
        return combined_loss(a, target, *dataset.descriptor, exclusion_, config_.weights);
    };
    std::vector<Coordinate> coords;
    for (int k = 0; k < 8; ++k)
        coords.push_back({paranoid_rng_.uniform_int(0, logits.height() - 1),
                          paranoid_rng_.uniform_int(0, logits.width() - 1),
                          paranoid_rng_.uniform_int(0, logits.channels() - 1)});
    const GradCheckReport report = check_at(fn, logits, coords);
    if (!report.passed)
        throw Error("paranoid gradcheck failed on dataset '" + dataset.descriptor->id +
                    "', sample '" + sample.id + "': max_rel_error " +
                    std::to_string(report.max_rel_error));
}

void Trainer::set_provenance(std::string config_hash, std::string manifest_hash) {
    config_hash_ = std::move(config_hash);
    manifest_hash_ = std::move(manifest_hash);
}

namespace {

constexpr char kCheckpointMagic[8] = {'P', 'S', 'E', 'G', 'C', 'K', 'P', '1'};

json config_to_json(const TrainConfig& c) {
    return {{"stage1_epochs", c.stage1_epochs},
            {"stage2_epochs", c.stage2_epochs},
            {"batch_size", c.batch_size},
            {"patches_per_epoch", c.patches_per_epoch},
            {"foreground_min_fraction", c.foreground_min_fraction},
            {"initial_lr", c.initial_lr},
            {"plateau_patience", c.plateau_patience},
            {"plateau_min_delta", c.plateau_min_delta},
            {"decay_factor", c.decay_factor},
            {"optimizer", to_string(c.optimizer)},
            {"hidden_width", c.hidden_width},
            {"feature_windows", c.features.windows},
            {"seed", c.seed},
            {"paranoid", c.paranoid},
            {"paranoid_interval", c.paranoid_interval},
            {"weights",
             {{"regular", c.weights.regular_weight},
              {"marginal", c.weights.marginal_weight},
              {"exclusion", c.weights.exclusion_weight},
              {"ce", c.weights.ce_weight},
              {"dice", c.weights.dice_weight}}}};
}

TrainConfig config_from_json(const json& doc) {
    TrainConfig c;
    c.stage1_epochs = doc.at("stage1_epochs").get<int>();
    c.stage2_epochs = doc.at("stage2_epochs").get<int>();
    c.batch_size = doc.at("batch_size").get<int>();
    c.patches_per_epoch = doc.at("patches_per_epoch").get<int>();
    c.foreground_min_fraction = doc.at("foreground_min_fraction").get<double>();
    c.initial_lr = doc.at("initial_lr").get<double>();
    c.plateau_patience = doc.at("plateau_patience").get<int>();
    c.plateau_min_delta = doc.at("plateau_min_delta").get<double>();
    c.decay_factor = doc.at("decay_factor").get<double>();
    c.optimizer = optimizer_from_string(doc.at("optimizer").get<std::string>());
    c.hidden_width = doc.at("hidden_width").get<int>();
    c.features.windows = doc.at("feature_windows").get<std::vector<int>>();
    c.seed = doc.at("seed").get<std::uint64_t>();
    c.paranoid = doc.at("paranoid").get<bool>();
    c.paranoid_interval = doc.at("paranoid_interval").get<int>();
    const auto& w = doc.at("weights");
    c.weights.regular_weight = w.at("regular").get<double>();
    c.weights.marginal_weight = w.at("marginal").get<double>();
    c.weights.exclusion_weight = w.at("exclusion").get<double>();
    c.weights.ce_weight = w.at("ce").get<double>();
    c.weights.dice_weight = w.at("dice").get<double>();
    return c;
}

void write_doubles(std::ofstream& out, const std::vector<double>& values) {
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size() * sizeof(double)));
}

std::vector<double> read_doubles(std::ifstream& in, std::size_t count,
                                 const std::filesystem::path& path) {
    std::vector<double> values(count);
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(count * sizeof(double)));
    if (static_cast<std::size_t>(in.gcount()) != count * sizeof(double))
        throw CorruptFile(path.string() + ": truncated checkpoint payload");
    return values;
}

}  // namespace

void Trainer::save_checkpoint(const std::filesystem::path& path) const {
    json header;
    header["format_version"] = 1;
    header["model"] = {{"feature_dim", model_.config().feature_dim},
                       {"hidden_width", model_.config().hidden_width},
                       {"num_classes", model_.config().num_classes}};
    header["train_config"] = config_to_json(config_);
    header["stage1_done"] = stage1_done_;
    header["stage2_done"] = stage2_done_;
    header["batch_counter"] = batch_counter_;
    header["scheduler"] = scheduler_.serialize();
    header["config_hash"] = config_hash_;
    header["manifest_hash"] = manifest_hash_;
    for (const char* name : {"sample_rng", "paranoid_rng"}) {
        const auto state = std::string(name) == "sample_rng" ? sample_rng_.state()
                                                             : paranoid_rng_.state();
        json words = json::array();
        for (std::uint64_t w : state) words.push_back(w);
        header[name] = words;
    }
    json log_rows = json::array();
    for (const EpochRecord& r : log_.epochs)
        log_rows.push_back({r.stage, r.epoch, r.lr, r.loss_total, r.terms.regular_ce,
                            r.terms.regular_dice, r.terms.marginal_ce, r.terms.marginal_dice,
                            r.terms.exclusion_ce, r.terms.exclusion_dice, r.wall_seconds});
    header["log"] = log_rows;

    const std::vector<double> opt_state = optimizer_.serialize();
    header["param_count"] = model_.params().size();
    header["opt_state_count"] = opt_state.size();

    const std::string header_text = header.dump();
    const auto tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw Error("cannot write checkpoint " + path.string());
        out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
        const std::uint32_t len = static_cast<std::uint32_t>(header_text.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
        write_doubles(out, model_.params());
        write_doubles(out, opt_state);
        if (!out) throw Error("short write to checkpoint " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

Trainer Trainer::load_checkpoint(const std::filesystem::path& path,
                                 const ExclusionMap& exclusion) {
    if (!std::filesystem::exists(path))
        throw MissingCheckpoint("no checkpoint at " + path.string());
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingCheckpoint("cannot open checkpoint " + path.string());

    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw VersionMismatch(path.string() + ": not a checkpoint of a supported version");

    std::uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string header_text(len, '\0');
    in.read(header_text.data(), len);
    if (!in) throw CorruptFile(path.string() + ": truncated checkpoint header");

    json header;
    try {
        header = json::parse(header_text);
        if (header.at("format_version").get<int>() != 1)
            throw VersionMismatch(path.string() + ": unsupported checkpoint version");

        TrainConfig config = config_from_json(header.at("train_config"));
        ModelConfig mc{header.at("model").at("feature_dim").get<int>(),
                       header.at("model").at("hidden_width").get<int>(),
                       header.at("model").at("num_classes").get<int>()};
        const auto params =
            read_doubles(in, header.at("param_count").get<std::size_t>(), path);
        const auto opt_state =
            read_doubles(in, header.at("opt_state_count").get<std::size_t>(), path);

        Trainer trainer(std::move(config), exclusion, PixelModel(mc, params));
        trainer.optimizer_.restore(opt_state);
        trainer.scheduler_.restore(header.at("scheduler").get<std::vector<double>>());
        trainer.stage1_done_ = header.at("stage1_done").get<int>();
        trainer.stage2_done_ = header.at("stage2_done").get<int>();
        trainer.batch_counter_ = header.at("batch_counter").get<long>();
        trainer.config_hash_ = header.at("config_hash").get<std::string>();
        trainer.manifest_hash_ = header.at("manifest_hash").get<std::string>();

        std::array<std::uint64_t, 4> words{};
        for (int i = 0; i < 4; ++i) words[i] = header.at("sample_rng")[i].get<std::uint64_t>();
        trainer.sample_rng_.set_state(words);
        for (int i = 0; i < 4; ++i) words[i] = header.at("paranoid_rng")[i].get<std::uint64_t>();
        trainer.paranoid_rng_.set_state(words);

        for (const auto& row : header.at("log")) {
            EpochRecord r;
            r.stage = row[0].get<int>();
            r.epoch = row[1].get<int>();
            r.lr = row[2].get<double>();
            r.loss_total = row[3].get<double>();
            r.terms.regular_ce = row[4].get<double>();
            r.terms.regular_dice = row[5].get<double>();
            r.terms.marginal_ce = row[6].get<double>();
            r.terms.marginal_dice = row[7].get<double>();
            r.terms.exclusion_ce = row[8].get<double>();
            r.terms.exclusion_dice = row[9].get<double>();
            r.wall_seconds = row[10].get<double>();
            trainer.log_.epochs.push_back(r);
        }
        return trainer;
    } catch (const json::exception& e) {
        throw CorruptFile(path.string() + ": malformed checkpoint header: " + e.what());
    }
}

}  // namespace partialseg
