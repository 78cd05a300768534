#include "partialseg/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "partialseg/gradcheck.hpp"
#include "partialseg/hashing.hpp"

namespace partialseg {

using nlohmann::json;

namespace {

json train_config_to_json(const TrainConfig& c) {
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
            {"weights",
             {{"regular", c.weights.regular_weight},
              {"marginal", c.weights.marginal_weight},
              {"exclusion", c.weights.exclusion_weight},
              {"ce", c.weights.ce_weight},
              {"dice", c.weights.dice_weight}}}};
}

void train_config_from_json(const json& doc, TrainConfig& c) {
    c.stage1_epochs = doc.value("stage1_epochs", c.stage1_epochs);
    c.stage2_epochs = doc.value("stage2_epochs", c.stage2_epochs);
    c.batch_size = doc.value("batch_size", c.batch_size);
    c.patches_per_epoch = doc.value("patches_per_epoch", c.patches_per_epoch);
    c.foreground_min_fraction = doc.value("foreground_min_fraction", c.foreground_min_fraction);
    c.initial_lr = doc.value("initial_lr", c.initial_lr);
    c.plateau_patience = doc.value("plateau_patience", c.plateau_patience);
    c.plateau_min_delta = doc.value("plateau_min_delta", c.plateau_min_delta);
    c.decay_factor = doc.value("decay_factor", c.decay_factor);
    if (doc.contains("optimizer"))
        c.optimizer = optimizer_from_string(doc.at("optimizer").get<std::string>());
    c.hidden_width = doc.value("hidden_width", c.hidden_width);
    if (doc.contains("feature_windows"))
        c.features.windows = doc.at("feature_windows").get<std::vector<int>>();
    if (doc.contains("weights")) {
        const auto& w = doc.at("weights");
        c.weights.regular_weight = w.value("regular", c.weights.regular_weight);
        c.weights.marginal_weight = w.value("marginal", c.weights.marginal_weight);
        c.weights.exclusion_weight = w.value("exclusion", c.weights.exclusion_weight);
        c.weights.ce_weight = w.value("ce", c.weights.ce_weight);
        c.weights.dice_weight = w.value("dice", c.weights.dice_weight);
    }
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return from_json_text(buffer.str());
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    ExperimentConfig config;
    try {
        config.data_dir = doc.value("data", config.data_dir);
        config.out_dir = doc.value("out", config.out_dir);
        if (doc.contains("networks"))
            config.networks = doc.at("networks").get<std::vector<std::string>>();
        if (doc.contains("seeds"))
            config.seeds = doc.at("seeds").get<std::vector<std::uint64_t>>();
        if (doc.contains("train")) train_config_from_json(doc.at("train"), config.train);
        if (doc.contains("sweep_ratios"))
            config.sweep_ratios =
                doc.at("sweep_ratios").get<std::vector<std::pair<double, double>>>();
        if (doc.contains("sensitivity_splits"))
            config.sensitivity_splits =
                doc.at("sensitivity_splits").get<std::vector<std::pair<int, int>>>();
        config.image_size = doc.value("image_size", config.image_size);
        config.data_seed = doc.value("data_seed", config.data_seed);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config: ") + e.what());
    }
    if (config.seeds.empty()) throw ConfigError("config needs a non-empty seeds list");
    return config;
}

std::string ExperimentConfig::to_json_text() const {
    json doc;
    doc["data"] = data_dir;
    doc["out"] = out_dir;
    doc["networks"] = networks;
    doc["seeds"] = seeds;
    doc["train"] = train_config_to_json(train);
    doc["sweep_ratios"] = sweep_ratios;
    doc["sensitivity_splits"] = sensitivity_splits;
    doc["image_size"] = image_size;
    doc["data_seed"] = data_seed;
    return doc.dump(2);
}

std::string ExperimentConfig::config_hash() const { return hash_hex(fnv1a(to_json_text())); }

std::vector<std::string> resolve_network(const std::string& network, const PhantomData& data) {
    std::vector<std::string> ids;
    if (network == "All") {
        for (const auto& desc : data.descriptors)
            if (desc.fully_labeled()) ids.push_back(desc.id);
        for (const auto& desc : data.descriptors)
            if (!desc.fully_labeled()) ids.push_back(desc.id);
    } else {
        std::stringstream stream(network);
        std::string part;
        while (std::getline(stream, part, '+'))
            if (!part.empty()) ids.push_back(part);
        std::stable_sort(ids.begin(), ids.end(),
                         [&data](const std::string& a, const std::string& b) {
                             return data.descriptor(a).fully_labeled() >
                                    data.descriptor(b).fully_labeled();
                         });
    }
    if (ids.empty() || !data.descriptor(ids.front()).fully_labeled())
        throw ConfigError("network '" + network +
                          "' must include the fully labeled dataset for stage 1");
    for (const auto& id : ids) data.descriptor(id);  // validates existence
    return ids;
}

LabelMask predict(const PixelModel& model, const PixelField& features) {
    return argmax_predict(softmax(model.forward(features)));
}

NetworkEvaluation evaluate_network(const PhantomData& data, const FeatureExtractor& extractor,
                                   const PixelModel& model) {
    NetworkEvaluation evaluation;
    double dice_sum = 0.0, hd_sum = 0.0;
    int dice_rows = 0, hd_rows = 0;
    for (const auto& desc : data.descriptors) {
        const auto samples = data.test_samples(desc.id);
        std::vector<LabelMask> predictions;
        predictions.reserve(samples.size());
        for (const Sample* sample : samples)
            predictions.push_back(predict(model, extractor.extract(sample->image)));
        MetricsReport report = evaluate_dataset(predictions, samples, desc);
        for (const auto& [cls, dice] : report.per_class_dice) {
            dice_sum += dice;
            ++dice_rows;
        }
        for (const auto& [cls, hd] : report.per_class_hausdorff) {
            hd_sum += hd;
            ++hd_rows;
        }
        evaluation.by_dataset.emplace(desc.id, std::move(report));
    }
    if (dice_rows > 0) evaluation.overall_mean_dice = dice_sum / dice_rows;
    if (hd_rows > 0) evaluation.overall_mean_hd = hd_sum / hd_rows;
    return evaluation;
}

int worker_thread_cap(std::size_t runs) {
    int cap = 0;
    if (const char* env = std::getenv("PARTIALSEG_THREADS")) cap = std::atoi(env);
    if (cap <= 0) cap = static_cast<int>(std::thread::hardware_concurrency());
    if (cap <= 0) cap = 1;
    return std::min<int>(cap, static_cast<int>(std::max<std::size_t>(runs, 1)));
}

namespace {

// Runs `tasks` on up to worker_thread_cap threads; rethrows the first error.
void run_parallel(const std::vector<std::function<void()>>& tasks) {
    const int workers = worker_thread_cap(tasks.size());
    if (workers <= 1) {
        for (const auto& task : tasks) task();
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t index = next.fetch_add(1);
                if (index >= tasks.size()) return;
                try {
                    tasks[index]();
                } catch (...) {
                    std::lock_guard<std::mutex> lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& thread : pool) thread.join();
    if (error) std::rethrow_exception(error);
}

struct RunSpec {
    std::string network;
    std::uint64_t seed = 0;
    LossWeights weights;
    std::filesystem::path dir;
};

std::filesystem::path run_dir(const ExperimentConfig& config, const std::string& network,
                              std::uint64_t seed) {
    return std::filesystem::path(config.out_dir) / network / ("seed" + std::to_string(seed));
}

// Shared cache of prepared training datasets and test features.
struct Workspace {
    PhantomData data;
    FeatureExtractor extractor;
    std::map<std::string, TrainDataset> train_datasets;

    Workspace(const ExperimentConfig& config)
        : data(load(config.data_dir)), extractor(config.train.features) {
        for (const auto& desc : data.descriptors)
            train_datasets.emplace(desc.id, prepare_train_dataset(data, desc.id, extractor));
    }
};

void execute_run(const Workspace& workspace, const ExperimentConfig& config, const RunSpec& run,
                 bool resume, bool paranoid) {
    std::filesystem::create_directories(run.dir);
    const auto checkpoint_path = run.dir / "checkpoint.bin";

    TrainConfig train_config = config.train;
    train_config.seed = run.seed;
    train_config.weights = run.weights;
    train_config.paranoid = paranoid;

    const std::vector<std::string> ids = resolve_network(run.network, workspace.data);

    std::optional<Trainer> trainer;
    if (resume && std::filesystem::exists(checkpoint_path)) {
        trainer.emplace(Trainer::load_checkpoint(checkpoint_path, workspace.data.exclusion));
        trainer->adopt_stage_targets(train_config);
    } else {
        trainer.emplace(train_config, workspace.data.exclusion, workspace.extractor.dim(),
                        workspace.data.space.num_classes());
    }
    trainer->set_provenance(config.config_hash(), hash_hex(workspace.data.manifest_hash));
    trainer->set_checkpoint_path(checkpoint_path);

    const TrainDataset& full = workspace.train_datasets.at(ids.front());
    std::vector<const TrainDataset*> all;
    for (const auto& id : ids) all.push_back(&workspace.train_datasets.at(id));

    trainer->train_stage1(full);
    if (all.size() > 1) trainer->train_stage2(all);

    std::ofstream log_out(run.dir / "trainlog.csv");
    write_train_log_csv(log_out, trainer->log(),
                        {"config_hash=" + config.config_hash(),
                         "manifest_hash=" + hash_hex(workspace.data.manifest_hash),
                         "network=" + run.network, "seed=" + std::to_string(run.seed)});
}

double mean_of(const std::vector<double>& values) {
    if (values.empty()) return 0.0;
    double sum = 0.0;
    for (double v : values) sum += v;
    return sum / static_cast<double>(values.size());
}

double stddev_of(const std::vector<double>& values) {
    if (values.size() < 2) return 0.0;
    const double mean = mean_of(values);
    double sum = 0.0;
    for (double v : values) sum += (v - mean) * (v - mean);
    return std::sqrt(sum / static_cast<double>(values.size() - 1));
}

std::string format_double(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.6f", value);
    return buffer;
}

}  // namespace

int cmd_generate(const ExperimentConfig& config, std::ostream& out) {
    PhantomSpec spec = PhantomSpec::defaults(config.data_seed);
    spec.image_size = config.image_size;
    const PhantomData data = generate(spec, default_dataset_plans(), config.data_dir);
    std::size_t total = 0;
    for (const auto& [id, samples] : data.samples) total += samples.size();
    out << "generated " << data.descriptors.size() << " datasets, " << total << " samples under "
        << config.data_dir << " (manifest hash " << hash_hex(data.manifest_hash) << ")\n";
    return kExitOk;
}

int cmd_train(const ExperimentConfig& config, bool resume, bool paranoid, std::ostream& out) {
    const Workspace workspace(config);

    std::vector<RunSpec> runs;
    for (const auto& network : config.networks) {
        resolve_network(network, workspace.data);  // fail fast on bad names
        for (std::uint64_t seed : config.seeds)
            runs.push_back({network, seed, config.train.weights,
                            run_dir(config, network, seed)});
    }

    std::vector<std::function<void()>> tasks;
    for (const RunSpec& run : runs)
        tasks.push_back([&workspace, &config, &run, resume, paranoid] {
            execute_run(workspace, config, run, resume, paranoid);
        });
    run_parallel(tasks);

    out << "trained " << runs.size() << " runs into " << config.out_dir << "\n";
    return kExitOk;
}

int cmd_evaluate(const ExperimentConfig& config, std::ostream& out) {
    const Workspace workspace(config);

    // network -> seed -> evaluation
    std::map<std::string, std::map<std::uint64_t, NetworkEvaluation>> evaluations;
    for (const auto& network : config.networks) {
        for (std::uint64_t seed : config.seeds) {
            const auto checkpoint_path = run_dir(config, network, seed) / "checkpoint.bin";
            const Trainer trainer =
                Trainer::load_checkpoint(checkpoint_path, workspace.data.exclusion);
            evaluations[network][seed] =
                evaluate_network(workspace.data, workspace.extractor, trainer.model());
        }
    }

    std::filesystem::create_directories(config.out_dir);
    const std::vector<std::string> provenance{
        "config_hash=" + config.config_hash(),
        "manifest_hash=" + hash_hex(workspace.data.manifest_hash)};

    // per-(sample, class) rows
    {
        std::ofstream csv(std::filesystem::path(config.out_dir) / "metrics.csv");
        for (const auto& line : provenance) csv << "# " << line << "\n";
        csv << "network,seed,dataset,sample,class,class_name,dice,hausdorff,hd_sentinel\n";
        for (const auto& [network, by_seed] : evaluations)
            for (const auto& [seed, evaluation] : by_seed)
                for (const auto& [dataset, report] : evaluation.by_dataset)
                    for (const auto& row : report.rows)
                        csv << network << "," << seed << "," << dataset << "," << row.sample_id
                            << "," << row.cls << "," << workspace.data.space.name(row.cls) << ","
                            << format_double(row.dice) << "," << format_double(row.hausdorff)
                            << "," << (row.hd_sentinel ? 1 : 0) << "\n";
    }

    // summary with mean +/- std across seeds
    json summary;
    summary["config_hash"] = config.config_hash();
    summary["manifest_hash"] = hash_hex(workspace.data.manifest_hash);
    for (const auto& [network, by_seed] : evaluations) {
        json network_doc;
        std::vector<double> overall_dice, overall_hd;
        std::map<std::string, std::map<int, std::vector<double>>> class_dice, class_hd;
        for (const auto& [seed, evaluation] : by_seed) {
            overall_dice.push_back(evaluation.overall_mean_dice);
            overall_hd.push_back(evaluation.overall_mean_hd);
            for (const auto& [dataset, report] : evaluation.by_dataset) {
                for (const auto& [cls, dice] : report.per_class_dice)
                    class_dice[dataset][cls].push_back(dice);
                for (const auto& [cls, hd] : report.per_class_hausdorff)
                    class_hd[dataset][cls].push_back(hd);
            }
        }
        network_doc["mean_dice"] = mean_of(overall_dice);
        network_doc["std_dice"] = stddev_of(overall_dice);
        network_doc["mean_hd"] = mean_of(overall_hd);
        network_doc["std_hd"] = stddev_of(overall_hd);
        json rows = json::array();
        for (const auto& [dataset, by_class] : class_dice)
            for (const auto& [cls, values] : by_class) {
                json row = {{"dataset", dataset},
                            {"class", cls},
                            {"class_name", workspace.data.space.name(cls)},
                            {"dice_mean", mean_of(values)},
                            {"dice_std", stddev_of(values)}};
                const auto hd_it = class_hd[dataset].find(cls);
                if (hd_it != class_hd[dataset].end()) {
                    row["hd_mean"] = mean_of(hd_it->second);
                    row["hd_std"] = stddev_of(hd_it->second);
                }
                rows.push_back(row);
            }
        network_doc["per_dataset_class"] = rows;
        summary["networks"][network] = network_doc;
    }

    // head-to-head deltas against the fully-supervised baseline
    if (evaluations.count("F") && evaluations.count("All")) {
        json deltas = json::array();
        std::map<int, std::vector<double>> f_by_class, all_by_class;
        for (const auto& [seed, evaluation] : evaluations.at("F"))
            for (const auto& [dataset, report] : evaluation.by_dataset)
                for (const auto& [cls, dice] : report.per_class_dice)
                    f_by_class[cls].push_back(dice);
        for (const auto& [seed, evaluation] : evaluations.at("All"))
            for (const auto& [dataset, report] : evaluation.by_dataset)
                for (const auto& [cls, dice] : report.per_class_dice)
                    all_by_class[cls].push_back(dice);
        for (const auto& [cls, f_values] : f_by_class) {
            if (!all_by_class.count(cls)) continue;
            deltas.push_back({{"class", cls},
                              {"class_name", workspace.data.space.name(cls)},
                              {"dice_F", mean_of(f_values)},
                              {"dice_All", mean_of(all_by_class[cls])},
                              {"delta", mean_of(all_by_class[cls]) - mean_of(f_values)}});
        }
        summary["all_vs_f"] = deltas;
    }

    std::ofstream summary_out(std::filesystem::path(config.out_dir) / "summary.json");
    summary_out << summary.dump(2) << "\n";

    for (const auto& [network, by_seed] : evaluations) {
        std::vector<double> overall;
        for (const auto& [seed, evaluation] : by_seed)
            overall.push_back(evaluation.overall_mean_dice);
        out << network << ": mean dice " << format_double(mean_of(overall)) << " +/- "
            << format_double(stddev_of(overall)) << " over " << overall.size() << " seeds\n";
    }
    return kExitOk;
}

namespace {

// Rebuilds the fully labeled dataset as a (full_count full + partial_count
// single-label) mixture, the single-label remainder cycling through the
// foreground classes. Derived samples re-project their visible masks.
struct SensitivityData {
    std::vector<DatasetDescriptor> descriptors;
    std::vector<std::vector<Sample>> samples;  // parallel to descriptors
};

SensitivityData make_sensitivity_split(const PhantomData& data, int full_count,
                                       int partial_count) {
    const DatasetDescriptor* full_desc = nullptr;
    for (const auto& desc : data.descriptors)
        if (desc.fully_labeled()) full_desc = &desc;
    if (full_desc == nullptr) throw ConfigError("sensitivity split needs a fully labeled dataset");

    const auto train = data.train_samples(full_desc->id);
    if (full_count + partial_count > static_cast<int>(train.size()))
        throw ConfigError("sensitivity split larger than the fully labeled train set");

    SensitivityData out;

    DatasetDescriptor fsub(full_desc->id + "sub", DatasetRole::Full, full_desc->kept,
                           identity_partition(data.space));
    std::vector<Sample> fsub_samples;
    for (int i = 0; i < full_count; ++i) {
        fsub.train_samples.push_back(train[i]->id);
        fsub_samples.push_back(*train[i]);
    }
    fsub.test_samples = full_desc->test_samples;
    out.descriptors.push_back(std::move(fsub));
    out.samples.push_back(std::move(fsub_samples));

    const int organ_classes = data.space.num_classes() - 1;
    for (int c = 1; c <= organ_classes; ++c) {
        DatasetDescriptor part(full_desc->id + "single" + std::to_string(c), DatasetRole::Partial,
                               {c}, single_organ_partition(data.space, {c}));
        std::vector<Sample> part_samples;
        for (int i = full_count + (c - 1); i < full_count + partial_count; i += organ_classes) {
            Sample derived = *train[i];
            derived.gt_visible = project_labels(derived.gt_full, part.partition);
            part.train_samples.push_back(derived.id);
            part_samples.push_back(std::move(derived));
        }
        if (part_samples.empty()) continue;
        out.descriptors.push_back(std::move(part));
        out.samples.push_back(std::move(part_samples));
    }
    return out;
}

TrainDataset prepare_from_samples(const DatasetDescriptor& desc,
                                  const std::vector<Sample>& samples,
                                  const FeatureExtractor& extractor) {
    TrainDataset out;
    out.descriptor = &desc;
    out.background_group = desc.partition.group_of(0);
    for (const Sample& sample : samples) {
        out.samples.push_back(&sample);
        out.features.push_back(extractor.extract(sample.image));
        if (sample.visible_has_foreground(out.background_group))
            out.with_foreground.push_back(static_cast<int>(out.samples.size()) - 1);
    }
    return out;
}

}  // namespace

int cmd_sweep(const ExperimentConfig& config, SweepMode mode, std::ostream& out) {
    const Workspace workspace(config);
    std::filesystem::create_directories(config.out_dir);

    struct SweepRow {
        std::string label;
        std::uint64_t seed;
        double mean_dice;
        double mean_hd;
    };
    std::vector<SweepRow> rows;
    std::mutex rows_mutex;

    std::vector<std::function<void()>> tasks;

    if (mode == SweepMode::Weights) {
        for (const auto& ratio : config.sweep_ratios) {
            for (std::uint64_t seed : config.seeds) {
                tasks.push_back([&workspace, &config, ratio, seed, &rows, &rows_mutex] {
                    std::ostringstream label;
                    label << ratio.first << ":" << ratio.second;

                    RunSpec run;
                    run.network = "All";
                    run.seed = seed;
                    run.weights = config.train.weights;
                    run.weights.marginal_weight = ratio.first;
                    run.weights.exclusion_weight = ratio.second;
                    run.dir = std::filesystem::path(config.out_dir) / "sweep" /
                              ("m" + std::to_string(ratio.first) + "_e" +
                               std::to_string(ratio.second)) /
                              ("seed" + std::to_string(seed));
                    execute_run(workspace, config, run, false, false);

                    const Trainer trainer = Trainer::load_checkpoint(run.dir / "checkpoint.bin",
                                                                     workspace.data.exclusion);
                    const NetworkEvaluation evaluation =
                        evaluate_network(workspace.data, workspace.extractor, trainer.model());
                    std::lock_guard<std::mutex> lock(rows_mutex);
                    rows.push_back({label.str(), seed, evaluation.overall_mean_dice,
                                    evaluation.overall_mean_hd});
                });
            }
        }
    } else {
        for (const auto& split : config.sensitivity_splits) {
            for (std::uint64_t seed : config.seeds) {
                tasks.push_back([&workspace, &config, split, seed, &rows, &rows_mutex] {
                    const SensitivityData sens =
                        make_sensitivity_split(workspace.data, split.first, split.second);
                    std::vector<TrainDataset> datasets;
                    datasets.reserve(sens.descriptors.size());
                    for (std::size_t i = 0; i < sens.descriptors.size(); ++i)
                        datasets.push_back(prepare_from_samples(sens.descriptors[i],
                                                                sens.samples[i],
                                                                workspace.extractor));

                    TrainConfig train_config = config.train;
                    train_config.seed = seed;
                    Trainer trainer(train_config, workspace.data.exclusion,
                                    workspace.extractor.dim(),
                                    workspace.data.space.num_classes());
                    trainer.train_stage1(datasets.front());
                    if (datasets.size() > 1) {
                        std::vector<const TrainDataset*> pointers;
                        for (const auto& d : datasets) pointers.push_back(&d);
                        trainer.train_stage2(pointers);
                    }

                    // score on the fully labeled test split only
                    const DatasetDescriptor* full_desc = nullptr;
                    for (const auto& desc : workspace.data.descriptors)
                        if (desc.fully_labeled()) full_desc = &desc;
                    const auto test = workspace.data.test_samples(full_desc->id);
                    std::vector<LabelMask> predictions;
                    for (const Sample* sample : test)
                        predictions.push_back(
                            predict(trainer.model(), workspace.extractor.extract(sample->image)));
                    const MetricsReport report = evaluate_dataset(predictions, test, *full_desc);

                    double hd_mean = 0.0;
                    int hd_rows = 0;
                    for (const auto& [cls, hd] : report.per_class_hausdorff) {
                        hd_mean += hd;
                        ++hd_rows;
                    }
                    if (hd_rows > 0) hd_mean /= hd_rows;

                    std::ostringstream label;
                    label << split.first << "/" << split.second;
                    std::lock_guard<std::mutex> lock(rows_mutex);
                    rows.push_back({label.str(), seed, report.mean_dice, hd_mean});
                });
            }
        }
    }

    run_parallel(tasks);

    std::stable_sort(rows.begin(), rows.end(), [](const SweepRow& a, const SweepRow& b) {
        return a.label != b.label ? a.label < b.label : a.seed < b.seed;
    });

    const char* filename = mode == SweepMode::Weights ? "sweep.csv" : "sensitivity.csv";
    std::ofstream csv(std::filesystem::path(config.out_dir) / filename);
    csv << "# config_hash=" << config.config_hash() << "\n";
    csv << "# manifest_hash=" << hash_hex(workspace.data.manifest_hash) << "\n";
    csv << (mode == SweepMode::Weights ? "ratio" : "split") << ",seed,mean_dice,mean_hd\n";
    for (const SweepRow& row : rows)
        csv << row.label << "," << row.seed << "," << format_double(row.mean_dice) << ","
            << format_double(row.mean_hd) << "\n";

    out << "sweep finished: " << rows.size() << " rows in " << filename << "\n";
    return kExitOk;
}

int cmd_gradcheck(const std::vector<std::string>& losses, int trials, std::uint64_t seed,
                  std::ostream& out) {
    const std::vector<std::string>& selected = losses.empty() ? kAllLossNames : losses;
    for (const auto& name : selected)
        if (std::find(kAllLossNames.begin(), kAllLossNames.end(), name) == kAllLossNames.end())
            throw ConfigError("unknown loss '" + name + "'");

    bool all_passed = true;
    json reports = json::array();
    for (const auto& name : selected) {
        const LossTrialSummary summary = run_loss_trials(name, trials, seed);
        reports.push_back({{"loss", summary.loss},
                           {"trials", summary.trials},
                           {"passed", summary.passed},
                           {"max_rel_error", summary.max_rel_error},
                           {"max_abs_error", summary.max_abs_error},
                           {"worst",
                            {{"pixel", {summary.worst.y, summary.worst.x}},
                             {"class", summary.worst.c}}}});
        all_passed = all_passed && summary.passed;
    }
    out << reports.dump(2) << "\n";
    return all_passed ? kExitOk : kExitCheckFailed;
}

}  // namespace partialseg
