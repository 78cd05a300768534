#include "partialseg/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "partialseg/pgm.hpp"

namespace partialseg {

using nlohmann::json;

PhantomSpec PhantomSpec::defaults(std::uint64_t seed) {
    PhantomSpec spec;
    spec.seed = seed;
    spec.noise_sigma = 0.05;
    spec.brightness = {-0.12, 0.12};
    // Every organ has two appearance modes drawn per image (think different
    // scanners), the mode bands collide across organs, and the position
    // boxes of neighboring organs overlap. A small fully labeled dataset
    // undercovers the (organ, mode, position, brightness) combinations; the
    // kidney pair shares its bands and is told apart only by position.
    spec.organs = {
        {"liver", OrganSpec::Shape::Ellipse, {0.20, 0.48}, {0.26, 0.50}, {0.10, 0.17},
         {0.13, 0.21}, {}, {0.40, 0.50}, {0.62, 0.72}, 0.5, 0.9},
        {"spleen", OrganSpec::Shape::Rectangle, {0.56, 0.82}, {0.22, 0.46}, {0.05, 0.10},
         {0.07, 0.13}, {}, {0.36, 0.46}, {0.58, 0.68}, 0.5, 0.9},
        {"pancreas", OrganSpec::Shape::Annulus, {0.36, 0.62}, {0.52, 0.74}, {0.06, 0.11},
         {0.06, 0.11}, {0.40, 0.60}, {0.33, 0.43}, {0.55, 0.65}, 0.5, 0.9},
        {"kidney_l", OrganSpec::Shape::Ellipse, {0.10, 0.36}, {0.58, 0.84}, {0.04, 0.08},
         {0.04, 0.08}, {}, {0.45, 0.55}, {0.67, 0.77}, 0.5, 0.9},
        {"kidney_r", OrganSpec::Shape::Ellipse, {0.64, 0.88}, {0.58, 0.84}, {0.04, 0.08},
         {0.04, 0.08}, {}, {0.45, 0.55}, {0.67, 0.77}, 0.5, 0.9},
    };
    return spec;
}

LabelSpace PhantomSpec::label_space() const {
    std::vector<std::string> names{"background"};
    for (const auto& organ : organs) names.push_back(organ.name);
    return LabelSpace(std::move(names));
}

std::vector<DatasetPlan> default_dataset_plans() {
    return {
        {"F", true, {1, 2, 3, 4, 5}, 24, 6},
        {"P1", false, {1}, 32, 8},
        {"P2", false, {2}, 32, 8},
        {"P3", false, {3}, 32, 8},
        {"P4", false, {4, 5}, 32, 8},
    };
}

const DatasetDescriptor& PhantomData::descriptor(const std::string& dataset_id) const {
    for (const auto& d : descriptors)
        if (d.id == dataset_id) return d;
    throw ConfigError("unknown dataset '" + dataset_id + "'");
}

const Sample& PhantomData::sample(const std::string& dataset_id,
                                  const std::string& sample_id) const {
    auto it = samples.find(dataset_id);
    if (it == samples.end()) throw ConfigError("unknown dataset '" + dataset_id + "'");
    for (const Sample& s : it->second)
        if (s.id == sample_id) return s;
    throw ConfigError("unknown sample '" + sample_id + "' in dataset " + dataset_id);
}

std::vector<const Sample*> PhantomData::test_samples(const std::string& dataset_id) const {
    const auto& desc = descriptor(dataset_id);
    std::vector<const Sample*> out;
    for (const auto& name : desc.test_samples) out.push_back(&sample(dataset_id, name));
    return out;
}

std::vector<const Sample*> PhantomData::train_samples(const std::string& dataset_id) const {
    const auto& desc = descriptor(dataset_id);
    std::vector<const Sample*> out;
    for (const auto& name : desc.train_samples) out.push_back(&sample(dataset_id, name));
    return out;
}

namespace {

constexpr int kFormatVersion = 1;
constexpr int kPlacementAttempts = 1000;
constexpr int kMinOrganPixels = 6;

struct PlacedOrgan {
    std::vector<int> pixels;  // flat indices
    double intensity = 0.0;
};

// Rasterizes one organ candidate; empty result means the draw fell outside
// the usable area.
std::vector<int> rasterize(const OrganSpec& organ, double cx, double cy, double rx, double ry,
                           double inner_ratio, int size) {
    std::vector<int> pixels;
    const double cxp = cx * size, cyp = cy * size;
    const double rxp = rx * size, ryp = ry * size;
    const int y0 = std::max(0, static_cast<int>(std::floor(cyp - ryp)) - 1);
    const int y1 = std::min(size - 1, static_cast<int>(std::ceil(cyp + ryp)) + 1);
    const int x0 = std::max(0, static_cast<int>(std::floor(cxp - rxp)) - 1);
    const int x1 = std::min(size - 1, static_cast<int>(std::ceil(cxp + rxp)) + 1);

    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dy = (y + 0.5 - cyp) / ryp;
            const double dx = (x + 0.5 - cxp) / rxp;
            bool inside = false;
            switch (organ.shape) {
                case OrganSpec::Shape::Ellipse:
                    inside = dx * dx + dy * dy <= 1.0;
                    break;
                case OrganSpec::Shape::Rectangle:
                    inside = std::fabs(dx) <= 1.0 && std::fabs(dy) <= 1.0;
                    break;
                case OrganSpec::Shape::Annulus: {
                    const double r2 = dx * dx + dy * dy;
                    inside = r2 <= 1.0 && r2 >= inner_ratio * inner_ratio;
                    break;
                }
            }
            if (inside) pixels.push_back(y * size + x);
        }
    }
    return pixels;
}

// Draws shapes for every present organ, retrying each until it is disjoint
// from the ones already placed.
std::vector<std::pair<int, PlacedOrgan>> place_organs(const PhantomSpec& spec, Rng& rng) {
    const int size = spec.image_size;
    std::vector<char> occupied(static_cast<std::size_t>(size) * size, 0);
    std::vector<std::pair<int, PlacedOrgan>> placed;

    for (std::size_t i = 0; i < spec.organs.size(); ++i) {
        const OrganSpec& organ = spec.organs[i];
        if (!rng.bernoulli(organ.presence_prob)) continue;

        bool ok = false;
        for (int attempt = 0; attempt < kPlacementAttempts && !ok; ++attempt) {
            const double cx = organ.center_x.sample(rng);
            const double cy = organ.center_y.sample(rng);
            const double rx = organ.radius_x.sample(rng);
            const double ry = organ.radius_y.sample(rng);
            const double inner =
                organ.shape == OrganSpec::Shape::Annulus ? organ.inner_ratio.sample(rng) : 0.0;
            auto pixels = rasterize(organ, cx, cy, rx, ry, inner, size);
            if (static_cast<int>(pixels.size()) < kMinOrganPixels) continue;
            bool clash = false;
            for (int p : pixels)
                if (occupied[p]) { clash = true; break; }
            if (clash) continue;

            for (int p : pixels) occupied[p] = 1;
            PlacedOrgan entry;
            entry.pixels = std::move(pixels);
            entry.intensity = organ.draw_intensity(rng);
            placed.emplace_back(static_cast<int>(i) + 1, std::move(entry));
            ok = true;
        }
        if (!ok)
            throw RejectionLimitExceeded("could not place organ '" + organ.name + "' after " +
                                         std::to_string(kPlacementAttempts) + " attempts");
    }
    return placed;
}

Sample make_sample(const PhantomSpec& spec, const MergePartition& partition,
                   const std::string& sample_id, Rng& rng) {
    const int size = spec.image_size;
    const double brightness = spec.brightness.sample(rng);
    const auto placed = place_organs(spec, rng);

    LabelMask gt_full(size, size, static_cast<int>(spec.organs.size()) + 1);
    std::vector<double> mean(static_cast<std::size_t>(size) * size,
                             spec.background_intensity + brightness);
    for (const auto& [cls, organ] : placed) {
        for (int p : organ.pixels) {
            gt_full.labels[p] = cls;
            mean[p] = organ.intensity + brightness;
        }
    }

    Sample sample;
    sample.id = sample_id;
    sample.image = PixelField(size, size, 1);
    for (std::size_t p = 0; p < mean.size(); ++p) {
        const double v = std::clamp(mean[p] + rng.normal(0.0, spec.noise_sigma), 0.0, 1.0);
        // quantize through the file format so memory and disk agree exactly
        const auto q = static_cast<std::uint16_t>(std::lround(v * 65535.0));
        sample.image.data()[p] = q / 65535.0;
    }
    sample.gt_full = std::move(gt_full);
    sample.gt_visible = project_labels(sample.gt_full, partition);
    return sample;
}

std::string sample_name(int index) {
    std::ostringstream out;
    out << "s";
    if (index < 100) out << (index < 10 ? "00" : "0");
    out << index;
    return out.str();
}

json descriptor_to_json(const DatasetDescriptor& desc) {
    return {{"format_version", kFormatVersion},
            {"id", desc.id},
            {"role", desc.fully_labeled() ? "full" : "partial"},
            {"kept", desc.kept},
            {"train", desc.train_samples},
            {"test", desc.test_samples}};
}

PgmImage mask_to_pgm(const LabelMask& mask) {
    PgmImage out;
    out.height = mask.height;
    out.width = mask.width;
    out.maxval = 255;
    out.pixels.assign(mask.labels.begin(), mask.labels.end());
    return out;
}

std::uint64_t fnv1a(const std::string& bytes) {
    std::uint64_t hash = 1469598103934665603ULL;
    for (unsigned char c : bytes) {
        hash ^= c;
        hash *= 1099511628211ULL;
    }
    return hash;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptFile("cannot open " + path.string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

}  // namespace

PhantomData generate(const PhantomSpec& spec, const std::vector<DatasetPlan>& plans,
                     const std::filesystem::path& root) {
    if (spec.organs.empty()) throw ConfigError("phantom spec has no organs");
    if (spec.image_size < 8) throw ConfigError("image size too small");

    PhantomData data{spec.label_space(), ExclusionMap::full_mutual(spec.label_space()), {}, {}, 0};

    std::filesystem::create_directories(root);

    std::uint64_t seed_chain = spec.seed;
    json manifest_datasets = json::array();
    for (const DatasetPlan& plan : plans) {
        const std::uint64_t dataset_seed = splitmix64(seed_chain);
        MergePartition partition = plan.full ? identity_partition(data.space)
                                             : single_organ_partition(data.space, plan.kept);
        DatasetDescriptor desc(plan.id, plan.full ? DatasetRole::Full : DatasetRole::Partial,
                               plan.kept, std::move(partition));

        const int total = plan.train_count + plan.test_count;
        Rng rng(dataset_seed);
        std::vector<Sample>& samples = data.samples[plan.id];
        samples.reserve(total);
        for (int s = 0; s < total; ++s) {
            const std::string name = sample_name(s);
            samples.push_back(make_sample(spec, desc.partition, name, rng));
            if (s < plan.train_count)
                desc.train_samples.push_back(name);
            else
                desc.test_samples.push_back(name);
        }

        const auto dir = root / plan.id;
        std::filesystem::create_directories(dir / "images");
        std::filesystem::create_directories(dir / "masks");
        for (const Sample& sample : samples) {
            PgmImage image;
            image.height = image.width = spec.image_size;
            image.maxval = 65535;
            image.pixels.resize(sample.image.size());
            for (std::size_t p = 0; p < sample.image.size(); ++p)
                image.pixels[p] =
                    static_cast<std::uint16_t>(std::lround(sample.image.data()[p] * 65535.0));
            write_pgm(dir / "images" / (sample.id + ".pgm"), image);
            write_pgm(dir / "masks" / (sample.id + ".pgm"), mask_to_pgm(sample.gt_visible));
            write_pgm(dir / "masks" / (sample.id + ".full.pgm"), mask_to_pgm(sample.gt_full));
        }

        std::ofstream desc_out(dir / "descriptor.json");
        desc_out << descriptor_to_json(desc).dump(2) << "\n";

        manifest_datasets.push_back(descriptor_to_json(desc));
        data.descriptors.push_back(std::move(desc));
    }

    json exclusion = json::object();
    for (int n = 0; n < data.exclusion.num_classes(); ++n)
        exclusion[std::to_string(n)] = data.exclusion.excluded(n);

    json manifest = {{"format_version", kFormatVersion},
                     {"classes", data.space.names()},
                     {"exclusion", exclusion},
                     {"datasets", manifest_datasets},
                     {"generator",
                      {{"image_size", spec.image_size},
                       {"seed", spec.seed},
                       {"noise_sigma", spec.noise_sigma},
                       {"background_intensity", spec.background_intensity}}}};
    const std::string manifest_text = manifest.dump(2) + "\n";
    std::ofstream manifest_out(root / "manifest.json");
    manifest_out << manifest_text;
    data.manifest_hash = fnv1a(manifest_text);
    return data;
}

PhantomData load(const std::filesystem::path& root) {
    const std::string manifest_text = read_file(root / "manifest.json");
    json manifest;
    try {
        manifest = json::parse(manifest_text);
    } catch (const json::exception& e) {
        throw CorruptFile("manifest.json: " + std::string(e.what()));
    }

    try {
        if (manifest.at("format_version").get<int>() != kFormatVersion)
            throw VersionMismatch("manifest format version not supported");

        LabelSpace space(manifest.at("classes").get<std::vector<std::string>>());
        const int n_classes = space.num_classes();

        std::vector<std::vector<int>> excluded(n_classes);
        for (const auto& [key, value] : manifest.at("exclusion").items()) {
            const int n = std::stoi(key);
            if (n < 0 || n >= n_classes)
                throw VersionMismatch("exclusion entry references missing class " + key);
            excluded[n] = value.get<std::vector<int>>();
            for (int k : excluded[n])
                if (k < 0 || k >= n_classes)
                    throw VersionMismatch("exclusion set references missing class " +
                                          std::to_string(k));
        }

        PhantomData data{space, ExclusionMap(space, std::move(excluded)), {}, {}, 0};
        data.manifest_hash = fnv1a(manifest_text);

        for (const auto& entry : manifest.at("datasets")) {
            const std::string id = entry.at("id").get<std::string>();
            const bool full = entry.at("role").get<std::string>() == "full";
            const auto kept = entry.at("kept").get<std::vector<int>>();
            for (int k : kept)
                if (k <= 0 || k >= n_classes)
                    throw VersionMismatch("dataset '" + id + "' keeps missing class " +
                                          std::to_string(k));

            // descriptor.json must agree with the manifest entry
            json desc_doc = json::parse(read_file(root / id / "descriptor.json"));
            if (desc_doc.at("kept").get<std::vector<int>>() != kept ||
                desc_doc.at("id").get<std::string>() != id)
                throw VersionMismatch("descriptor.json for '" + id +
                                      "' disagrees with manifest.json");

            MergePartition partition =
                full ? identity_partition(space) : single_organ_partition(space, kept);
            DatasetDescriptor desc(id, full ? DatasetRole::Full : DatasetRole::Partial, kept,
                                   std::move(partition));
            desc.train_samples = entry.at("train").get<std::vector<std::string>>();
            desc.test_samples = entry.at("test").get<std::vector<std::string>>();

            std::vector<Sample>& samples = data.samples[id];
            auto load_sample = [&](const std::string& name) {
                const PgmImage image = read_pgm(root / id / "images" / (name + ".pgm"));
                const PgmImage visible = read_pgm(root / id / "masks" / (name + ".pgm"));
                const PgmImage full_mask = read_pgm(root / id / "masks" / (name + ".full.pgm"));
                if (image.height != visible.height || image.width != visible.width ||
                    image.height != full_mask.height || image.width != full_mask.width)
                    throw CorruptFile("sample '" + name + "' of dataset " + id +
                                      " has inconsistent shapes");

                Sample sample;
                sample.id = name;
                sample.image = PixelField(image.height, image.width, 1);
                for (std::size_t p = 0; p < image.pixels.size(); ++p)
                    sample.image.data()[p] = image.pixels[p] / 65535.0;

                sample.gt_full = LabelMask(image.height, image.width, n_classes);
                for (std::size_t p = 0; p < full_mask.pixels.size(); ++p) {
                    const int v = full_mask.pixels[p];
                    if (v >= n_classes)
                        throw VersionMismatch("full mask of '" + name +
                                              "' references missing class " + std::to_string(v));
                    sample.gt_full.labels[p] = v;
                }

                sample.gt_visible = LabelMask(image.height, image.width,
                                              desc.partition.num_groups(), desc.partition.id());
                for (std::size_t p = 0; p < visible.pixels.size(); ++p) {
                    const int v = visible.pixels[p];
                    if (v >= desc.partition.num_groups())
                        throw VersionMismatch("visible mask of '" + name +
                                              "' references missing merged class " +
                                              std::to_string(v));
                    sample.gt_visible.labels[p] = v;
                }
                samples.push_back(std::move(sample));
            };
            for (const auto& name : desc.train_samples) load_sample(name);
            for (const auto& name : desc.test_samples) load_sample(name);

            data.descriptors.push_back(std::move(desc));
        }
        return data;
    } catch (const json::exception& e) {
        throw CorruptFile("manifest.json missing fields: " + std::string(e.what()));
    }
}

}  // namespace partialseg
