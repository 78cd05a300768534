#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "partialseg/dataset.hpp"
#include "partialseg/label_schema.hpp"
#include "partialseg/rng.hpp"

namespace partialseg {

struct JitterRange {
    double lo = 0.0, hi = 0.0;
    double sample(Rng& rng) const { return rng.uniform(lo, hi); }
};

struct OrganSpec {
    enum class Shape { Ellipse, Rectangle, Annulus };

    std::string name;
    Shape shape = Shape::Ellipse;
    JitterRange center_x, center_y;  // fractions of the image side
    JitterRange radius_x, radius_y;  // fractions of the image side
    JitterRange inner_ratio;         // annulus hole radius / outer radius
    JitterRange intensity;           // appearance mode A
    JitterRange intensity_alt;       // appearance mode B (unused when empty)
    double alt_prob = 0.0;           // probability of drawing mode B
    double presence_prob = 1.0;

    double draw_intensity(Rng& rng) const {
        if (alt_prob > 0.0 && rng.bernoulli(alt_prob)) return intensity_alt.sample(rng);
        return intensity.sample(rng);
    }
};

// Generator configuration for the 2-D multi-organ phantoms. Organ i maps to
// global class i+1; class 0 is the background.
struct PhantomSpec {
    int image_size = 64;
    std::vector<OrganSpec> organs;
    double background_intensity = 0.32;
    double noise_sigma = 0.05;
    JitterRange brightness{-0.08, 0.08};  // per-image global shift
    std::uint64_t seed = 7;

    // Five organ analogs: a large ellipse, a rectangle, an annulus and a
    // left/right pair drawn from the same shape and intensity family (so the
    // pair is only separable by position).
    static PhantomSpec defaults(std::uint64_t seed);

    LabelSpace label_space() const;
};

// Which datasets to cut and which classes each annotates.
struct DatasetPlan {
    std::string id;
    bool full = false;
    std::vector<int> kept;
    int train_count = 0;
    int test_count = 0;
};

// One fully labeled dataset (24/6) plus four partial ones (32/8 each); the
// last partial dataset keeps the kidney pair.
std::vector<DatasetPlan> default_dataset_plans();

// Everything a training or evaluation run needs, as loaded from disk.
struct PhantomData {
    LabelSpace space;
    ExclusionMap exclusion;
    std::vector<DatasetDescriptor> descriptors;
    std::map<std::string, std::vector<Sample>> samples;  // dataset id -> train then test
    std::uint64_t manifest_hash = 0;

    const DatasetDescriptor& descriptor(const std::string& dataset_id) const;
    const Sample& sample(const std::string& dataset_id, const std::string& sample_id) const;
    std::vector<const Sample*> test_samples(const std::string& dataset_id) const;
    std::vector<const Sample*> train_samples(const std::string& dataset_id) const;
};

// Writes `<root>/<dataset>/{images,masks,descriptor.json}` plus
// `<root>/manifest.json`. Bit-identical output for identical (spec, plans).
// Returns the generated data, which load(root) reproduces exactly.
PhantomData generate(const PhantomSpec& spec, const std::vector<DatasetPlan>& plans,
                     const std::filesystem::path& root);

PhantomData load(const std::filesystem::path& root);

}  // namespace partialseg
