#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "scale/losses.hpp"
#include "scale/memory.hpp"
#include "scale/streams.hpp"

namespace scale {

enum class DatasetSource { gaussian, idx, cifar10, flat };

DatasetSource dataset_source_from_string(const std::string& name);
std::string to_string(DatasetSource source);

struct DatasetConfig {
    DatasetSource source = DatasetSource::gaussian;
    // gaussian
    std::size_t dim = 2;
    double separation = 6.0;
    // idx
    std::string images;
    std::string labels;
    std::string eval_images;
    std::string eval_labels;
    // cifar10
    std::vector<std::string> files;
    std::vector<std::string> eval_files;
    // flat
    std::string path;
    std::string eval_path;

    bool operator==(const DatasetConfig&) const = default;
};

struct MemoryConfig {
    std::size_t capacity = 1280;
    std::size_t batch_size = 128;
    MemoryPolicy policy = MemoryPolicy::psa;
    std::size_t kmeans_k = 4;

    bool operator==(const MemoryConfig&) const = default;
};

struct EvalConfig {
    std::size_t period = 50;          // training steps between evaluations
    std::size_t per_class = 50;       // eval-set samples per class
    std::size_t knn_k = 5;
    bool use_spectral = true;
    double spectral_sigma = 0.1;
    std::size_t spectral_cap = 2000;

    bool operator==(const EvalConfig&) const = default;
};

// Seed is excluded: StreamSpec.seed is derived from the experiment seed at
// run time, not part of the configured identity.
struct StreamConfigEq {
    bool operator()(const StreamSpec& a, const StreamSpec& b) const {
        return a.kind == b.kind && a.num_classes == b.num_classes &&
               a.per_class == b.per_class && a.batch_size == b.batch_size;
    }
};

struct ExperimentConfig {
    StreamSpec stream;
    DatasetConfig dataset;
    std::vector<std::size_t> encoder_dims = {64, 32, 16};  // hidden + output; input from data
    double encoder_init_scale = 1.0;
    LossConfig loss;
    MemoryConfig memory;
    double lr = 0.03;
    EvalConfig eval;
    Augmenter augment;
    std::uint64_t seed = 1;
    std::string out_dir;
    bool record_wall_time = false;  // real timings break bytewise CSV reproducibility

    void validate() const;
    bool operator==(const ExperimentConfig& o) const;

    // Paper-scale image preset (n=128, M=1280, m=128, tau=0.1, mu=0.05,
    // lambda=0.1, rgb 32x32 augmentation).
    static ExperimentConfig image_preset();
};

// Strict parse: unknown keys rejected by name, every value validated,
// missing keys filled from the defaults above.
ExperimentConfig parse_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& context);
std::string serialize_config(const ExperimentConfig& cfg);

// FNV-1a over the canonical serialized form.
std::uint64_t config_hash(const ExperimentConfig& cfg);

// Effective seed: explicit override, else SCALE_SEED from the environment,
// else the config value.
std::uint64_t resolve_seed(const ExperimentConfig& cfg,
                           std::optional<std::uint64_t> cli_seed);

}  // namespace scale
