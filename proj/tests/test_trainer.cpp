#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

#include "partialseg/experiment.hpp"
#include "partialseg/trainer.hpp"

using namespace partialseg;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) {
        path = fs::temp_directory_path() / ("partialseg_trainer_" + name);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

PhantomData tiny_data(const fs::path& dir, std::uint64_t seed = 7) {
    PhantomSpec spec = PhantomSpec::defaults(seed);
    spec.image_size = 32;
    return generate(spec,
                    {{"F", true, {1, 2, 3, 4, 5}, 6, 2},
                     {"P1", false, {1}, 6, 2},
                     {"P4", false, {4, 5}, 6, 2}},
                    dir);
}

TrainConfig fast_config(std::uint64_t seed = 1) {
    TrainConfig config;
    config.stage1_epochs = 2;
    config.stage2_epochs = 2;
    config.patches_per_epoch = 6;
    config.hidden_width = 4;
    config.seed = seed;
    return config;
}

// hand-built minimal dataset for batch sampling tests
struct BatchFixture {
    LabelSpace space{std::vector<std::string>{"background", "organ"}};
    DatasetDescriptor descriptor{"P", DatasetRole::Partial, {1},
                                 single_organ_partition(space, {1})};
    std::vector<Sample> storage;
    TrainDataset dataset;

    explicit BatchFixture(int total, int with_fg) {
        for (int i = 0; i < total; ++i) {
            Sample sample;
            sample.id = "s" + std::to_string(i);
            sample.image = PixelField(2, 2, 1);
            sample.gt_full = LabelMask(2, 2, 2);
            if (i < with_fg) sample.gt_full.labels[0] = 1;
            sample.gt_visible = project_labels(sample.gt_full, descriptor.partition);
            storage.push_back(std::move(sample));
        }
        dataset.descriptor = &descriptor;
        dataset.background_group = descriptor.partition.group_of(0);
        for (int i = 0; i < total; ++i) {
            dataset.samples.push_back(&storage[i]);
            dataset.features.push_back(storage[i].image);  // placeholder planes
            if (storage[i].visible_has_foreground(dataset.background_group))
                dataset.with_foreground.push_back(i);
        }
    }
};

}  // namespace

TEST_CASE("plateau scheduler follows the 10-epoch / 1e-3 / x0.8 rule") {
    SUBCASE("flat losses decay once per full window") {
        PlateauScheduler scheduler(0.1, 10, 1e-3, 0.8);
        for (int i = 0; i < 9; ++i) {
            scheduler.observe(i == 0 ? 1.0 : 0.9999);
            CHECK(scheduler.lr() == 0.1);
        }
        scheduler.observe(0.9999);  // 10th sample completes the window
        CHECK(scheduler.lr() == doctest::Approx(0.08));
        CHECK(scheduler.decay_count() == 1);
    }

    SUBCASE("steady improvement never decays") {
        PlateauScheduler scheduler(0.1, 10, 1e-3, 0.8);
        double loss = 1.0;
        for (int i = 0; i < 40; ++i) {
            scheduler.observe(loss);
            loss -= 0.01;
        }
        CHECK(scheduler.lr() == 0.1);
        CHECK(scheduler.decay_count() == 0);
    }

    SUBCASE("two consecutive plateaus compound") {
        PlateauScheduler scheduler(0.1, 10, 1e-3, 0.8);
        for (int i = 0; i < 20; ++i) scheduler.observe(0.5);
        CHECK(scheduler.lr() == doctest::Approx(0.064));
        CHECK(scheduler.decay_count() == 2);
    }

    SUBCASE("pure decision rule") {
        CHECK(plateau_decision({1.0, 0.9999, 0.9999}, 0.1, 1e-3, 0.8) ==
              doctest::Approx(0.08));
        CHECK(plateau_decision({1.0, 0.99, 0.98}, 0.1, 1e-3, 0.8) == 0.1);
        // strict comparison: improvement of exactly min_delta keeps the lr
        CHECK(plateau_decision({1.0, 1.0 - 1e-3}, 0.1, 1e-3, 0.8) == 0.1);
    }
}

TEST_CASE("sample_batch enforces the foreground quota") {
    TrainConfig config;
    config.batch_size = 2;
    config.foreground_min_fraction = 0.33;

    SUBCASE("at least one foreground sample per batch, 1000-batch sweep") {
        BatchFixture fixture(10, 3);
        Rng rng(99);
        for (int i = 0; i < 1000; ++i) {
            const auto batch = sample_batch(fixture.dataset, config, rng);
            REQUIRE(batch.size() == 2);
            int fg = 0;
            for (int index : batch) fg += index < 3;
            CHECK(fg >= 1);
        }
    }

    SUBCASE("fraction 1.0 forces every sample to contain foreground") {
        BatchFixture fixture(10, 4);
        config.foreground_min_fraction = 1.0;
        config.batch_size = 3;
        Rng rng(17);
        for (int i = 0; i < 200; ++i) {
            for (int index : sample_batch(fixture.dataset, config, rng)) CHECK(index < 4);
        }
    }

    SUBCASE("all-background dataset cannot satisfy the rule") {
        BatchFixture fixture(5, 0);
        Rng rng(3);
        CHECK_THROWS_AS(sample_batch(fixture.dataset, config, rng), NoForegroundAvailable);
    }

    SUBCASE("fraction 0 never needs foreground") {
        BatchFixture fixture(5, 0);
        config.foreground_min_fraction = 0.0;
        Rng rng(3);
        CHECK_NOTHROW(sample_batch(fixture.dataset, config, rng));
    }
}

TEST_CASE("zero-epoch stages leave the model untouched") {
    TempDir dir("zero_epochs");
    const PhantomData data = tiny_data(dir.path);
    TrainConfig config = fast_config();
    config.stage1_epochs = 0;
    config.stage2_epochs = 0;

    const FeatureExtractor extractor(config.features);
    const TrainDataset full = prepare_train_dataset(data, "F", extractor);

    Trainer trainer(config, data.exclusion, extractor.dim(), data.space.num_classes());
    const std::vector<double> before = trainer.model().params();
    trainer.train_stage1(full);
    trainer.train_stage2({&full});
    CHECK(trainer.model().params() == before);
    CHECK(trainer.log().epochs.empty());
}

TEST_CASE("training is deterministic given config, seed and data") {
    TempDir dir("determinism");
    const PhantomData data = tiny_data(dir.path);
    const TrainConfig config = fast_config(5);
    const FeatureExtractor extractor(config.features);
    const TrainDataset full = prepare_train_dataset(data, "F", extractor);
    const TrainDataset p1 = prepare_train_dataset(data, "P1", extractor);

    auto run = [&] {
        Trainer trainer(config, data.exclusion, extractor.dim(), data.space.num_classes());
        trainer.train_stage1(full);
        trainer.train_stage2({&full, &p1});
        return trainer;
    };
    const Trainer a = run();
    const Trainer b = run();

    CHECK(a.model().params() == b.model().params());
    REQUIRE(a.log().epochs.size() == b.log().epochs.size());
    for (std::size_t i = 0; i < a.log().epochs.size(); ++i) {
        CHECK(a.log().epochs[i].loss_total == b.log().epochs[i].loss_total);
        CHECK(a.log().epochs[i].lr == b.log().epochs[i].lr);
        CHECK(a.log().epochs[i].terms.marginal_ce == b.log().epochs[i].terms.marginal_ce);
    }

    SUBCASE("a different seed moves the parameters") {
        TrainConfig other = config;
        other.seed = 6;
        Trainer c(other, data.exclusion, extractor.dim(), data.space.num_classes());
        c.train_stage1(full);
        CHECK(c.model().params() != a.model().params());
    }
}

TEST_CASE("loss dispatch is visible in the per-term log columns") {
    TempDir dir("dispatch");
    const PhantomData data = tiny_data(dir.path);
    const TrainConfig config = fast_config(11);
    const FeatureExtractor extractor(config.features);
    const TrainDataset full = prepare_train_dataset(data, "F", extractor);
    const TrainDataset p1 = prepare_train_dataset(data, "P1", extractor);

    SUBCASE("stage 1 and full-only stage 2 never incur marginal or exclusion terms") {
        Trainer trainer(config, data.exclusion, extractor.dim(), data.space.num_classes());
        trainer.train_stage1(full);
        trainer.train_stage2({&full});
        for (const EpochRecord& r : trainer.log().epochs) {
            CHECK(r.terms.regular_ce > 0.0);
            CHECK(r.terms.marginal_ce == 0.0);
            CHECK(r.terms.marginal_dice == 0.0);
            CHECK(r.terms.exclusion_ce == 0.0);
            CHECK(r.terms.exclusion_dice == 0.0);
        }
    }

    SUBCASE("partial-only training never incurs regular terms") {
        TrainConfig stage2_only = config;
        stage2_only.stage1_epochs = 0;
        Trainer trainer(stage2_only, data.exclusion, extractor.dim(), data.space.num_classes());
        trainer.train_stage2({&p1});
        for (const EpochRecord& r : trainer.log().epochs) {
            CHECK(r.terms.regular_ce == 0.0);
            CHECK(r.terms.regular_dice == 0.0);
            CHECK(r.terms.marginal_ce > 0.0);
            CHECK(r.terms.exclusion_ce >= 0.0);
            CHECK(r.stage == 2);
        }
    }

    SUBCASE("joint stage 2 shows both families and a non-increasing lr") {
        Trainer trainer(config, data.exclusion, extractor.dim(), data.space.num_classes());
        trainer.train_stage1(full);
        trainer.train_stage2({&full, &p1});
        double last_lr = config.initial_lr;
        bool saw_stage2 = false;
        for (const EpochRecord& r : trainer.log().epochs) {
            CHECK(r.lr <= last_lr + 1e-15);
            if (r.lr < last_lr)
                CHECK(r.lr == doctest::Approx(last_lr * 0.8));
            last_lr = r.lr;
            if (r.stage == 2) {
                saw_stage2 = true;
                CHECK(r.terms.regular_ce > 0.0);
                CHECK(r.terms.marginal_ce > 0.0);
            }
        }
        CHECK(saw_stage2);
    }
}

TEST_CASE("divergence aborts with context") {
    TempDir dir("diverged");
    const PhantomData data = tiny_data(dir.path);
    const TrainConfig config = fast_config(13);
    const FeatureExtractor extractor(config.features);
    TrainDataset full = prepare_train_dataset(data, "F", extractor);

    // poison one cached feature plane; the forward pass then goes non-finite
    full.features[0].data()[0] = std::numeric_limits<double>::quiet_NaN();
    Trainer trainer(config, data.exclusion, extractor.dim(), data.space.num_classes());
    CHECK_THROWS_AS(trainer.train_stage1(full), DivergedLoss);
}

TEST_CASE("paranoid spot checks pass on healthy losses") {
    TempDir dir("paranoid");
    const PhantomData data = tiny_data(dir.path);
    TrainConfig config = fast_config(17);
    config.stage1_epochs = 1;
    config.stage2_epochs = 1;
    config.paranoid = true;
    config.paranoid_interval = 2;
    const FeatureExtractor extractor(config.features);
    const TrainDataset full = prepare_train_dataset(data, "F", extractor);
    const TrainDataset p4 = prepare_train_dataset(data, "P4", extractor);

    Trainer trainer(config, data.exclusion, extractor.dim(), data.space.num_classes());
    CHECK_NOTHROW(trainer.train_stage1(full));
    CHECK_NOTHROW(trainer.train_stage2({&full, &p4}));
}

TEST_CASE("checkpoints resume exactly") {
    TempDir dir("resume");
    const PhantomData data = tiny_data(dir.path);
    const FeatureExtractor extractor(FeatureConfig{});
    const TrainDataset full = prepare_train_dataset(data, "F", extractor);
    const TrainDataset p1 = prepare_train_dataset(data, "P1", extractor);

    TrainConfig full_config = fast_config(23);
    full_config.stage1_epochs = 4;
    full_config.stage2_epochs = 3;

    // uninterrupted reference run
    Trainer reference(full_config, data.exclusion, extractor.dim(), data.space.num_classes());
    reference.train_stage1(full);
    reference.train_stage2({&full, &p1});

    // interrupted run: half the epochs, checkpoint, reload, adopt the full
    // budget, continue
    TrainConfig half = full_config;
    half.stage1_epochs = 2;
    half.stage2_epochs = 0;
    Trainer interrupted(half, data.exclusion, extractor.dim(), data.space.num_classes());
    interrupted.train_stage1(full);
    const auto checkpoint = dir.path / "checkpoint.bin";
    interrupted.save_checkpoint(checkpoint);

    Trainer resumed = Trainer::load_checkpoint(checkpoint, data.exclusion);
    resumed.adopt_stage_targets(full_config);
    resumed.train_stage1(full);
    resumed.train_stage2({&full, &p1});

    CHECK(resumed.model().params() == reference.model().params());
    REQUIRE(resumed.log().epochs.size() == reference.log().epochs.size());
    for (std::size_t i = 0; i < reference.log().epochs.size(); ++i) {
        CHECK(resumed.log().epochs[i].epoch == reference.log().epochs[i].epoch);
        CHECK(resumed.log().epochs[i].loss_total == reference.log().epochs[i].loss_total);
        CHECK(resumed.log().epochs[i].lr == reference.log().epochs[i].lr);
    }
    // log continuity: epochs are 1..K without gaps or duplicates
    for (std::size_t i = 0; i < resumed.log().epochs.size(); ++i)
        CHECK(resumed.log().epochs[i].epoch == static_cast<int>(i) + 1);

    SUBCASE("missing checkpoint") {
        CHECK_THROWS_AS(Trainer::load_checkpoint(dir.path / "nope.bin", data.exclusion),
                        MissingCheckpoint);
    }
    SUBCASE("corrupt checkpoint magic") {
        const auto bad = dir.path / "bad.bin";
        std::ofstream out(bad, std::ios::binary);
        out << "garbage";
        out.close();
        CHECK_THROWS_AS(Trainer::load_checkpoint(bad, data.exclusion), VersionMismatch);
    }
}

TEST_CASE("stage 1 learns a separable phantom to dice >= 0.9") {
    TempDir dir("learning");
    // easy variant of the default phantom: disjoint intensity bands, little
    // noise, no global brightness jitter
    PhantomSpec spec = PhantomSpec::defaults(7);
    spec.image_size = 40;
    spec.noise_sigma = 0.02;
    spec.brightness = {0.0, 0.0};
    const double bands[5][2] = {{0.45, 0.5}, {0.58, 0.63}, {0.7, 0.75}, {0.82, 0.87}, {0.93, 0.98}};
    for (int i = 0; i < 5; ++i) {
        spec.organs[i].intensity = {bands[i][0], bands[i][1]};
        spec.organs[i].presence_prob = 1.0;
    }
    const PhantomData data =
        generate(spec, {{"F", true, {1, 2, 3, 4, 5}, 10, 4}}, dir.path);

    TrainConfig config;
    config.stage1_epochs = 50;
    config.stage2_epochs = 0;
    config.patches_per_epoch = 10;
    config.hidden_width = 16;
    config.seed = 3;

    const FeatureExtractor extractor(config.features);
    const TrainDataset full = prepare_train_dataset(data, "F", extractor);
    Trainer trainer(config, data.exclusion, extractor.dim(), data.space.num_classes());
    trainer.train_stage1(full);

    // regression golden with pinned seed: train-split mean dice
    double dice_sum = 0.0;
    int rows = 0;
    const auto& desc = data.descriptor("F");
    std::vector<LabelMask> predictions;
    std::vector<const Sample*> samples = data.train_samples("F");
    for (std::size_t i = 0; i < samples.size(); ++i)
        predictions.push_back(predict(trainer.model(), full.features[i]));
    const MetricsReport report = evaluate_dataset(predictions, samples, desc);
    for (const auto& [cls, dice] : report.per_class_dice) {
        dice_sum += dice;
        ++rows;
    }
    CHECK(rows == 5);
    CHECK(dice_sum / rows >= 0.9);

    // stage-1 loss decreased from the first epoch to the last
    CHECK(trainer.log().epochs.back().loss_total < trainer.log().epochs.front().loss_total);
}
