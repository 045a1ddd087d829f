#include "scale/config.hpp"

#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace scale {

using nlohmann::json;

DatasetSource dataset_source_from_string(const std::string& name) {
    if (name == "gaussian") return DatasetSource::gaussian;
    if (name == "idx") return DatasetSource::idx;
    if (name == "cifar10") return DatasetSource::cifar10;
    if (name == "flat") return DatasetSource::flat;
    throw std::invalid_argument("unknown dataset source: " + name);
}

std::string to_string(DatasetSource source) {
    switch (source) {
        case DatasetSource::gaussian: return "gaussian";
        case DatasetSource::idx: return "idx";
        case DatasetSource::cifar10: return "cifar10";
        case DatasetSource::flat: return "flat";
    }
    return "?";
}

void ExperimentConfig::validate() const {
    // Counts arrive through unsigned fields; a negative JSON value wraps to
    // a huge number, so bound every count to catch that by name.
    auto in_range = [](std::size_t v, std::size_t hi, const char* key) {
        if (v > hi)
            throw std::invalid_argument(std::string("config: ") + key + " out of range");
    };
    in_range(stream.num_classes, 100000, "stream.classes");
    in_range(stream.per_class, 100000000, "stream.per_class");
    in_range(stream.batch_size, 1000000, "stream.batch_size");
    in_range(memory.capacity, 100000000, "memory.capacity");
    in_range(memory.batch_size, 1000000, "memory.batch_size");
    in_range(memory.kmeans_k, 1000000, "memory.kmeans_k");
    in_range(eval.period, 1000000000000ull, "eval.period");
    in_range(eval.per_class, 1000000, "eval.per_class");
    in_range(eval.knn_k, 1000000, "eval.knn_k");
    in_range(eval.spectral_cap, 1000000, "eval.cap");
    in_range(dataset.dim, 1000000, "dataset.dim");
    in_range(augment.image_height, 65536, "augment.image_height");
    in_range(augment.image_width, 65536, "augment.image_width");
    in_range(augment.crop_padding, 4096, "augment.crop_padding");
    for (std::size_t d : encoder_dims) in_range(d, 1000000, "encoder.dims");

    if (stream.num_classes == 0 || stream.per_class == 0 || stream.batch_size == 0)
        throw std::invalid_argument("config: stream.classes, stream.per_class and "
                                    "stream.batch_size must be positive");
    if (encoder_dims.empty())
        throw std::invalid_argument("config: encoder.dims must name at least one layer");
    for (std::size_t d : encoder_dims)
        if (d == 0) throw std::invalid_argument("config: encoder.dims entries must be positive");
    if (encoder_init_scale <= 0.0)
        throw std::invalid_argument("config: encoder.init_scale must be positive");
    loss.validate();
    if (lr <= 0.0) throw std::invalid_argument("config: optimizer.lr must be positive");
    if (eval.period == 0) throw std::invalid_argument("config: eval.period must be positive");
    if (eval.per_class < 2)
        throw std::invalid_argument("config: eval.per_class must be at least 2");
    if (eval.knn_k == 0) throw std::invalid_argument("config: eval.knn_k must be positive");
    if (eval.spectral_sigma <= 0.0)
        throw std::invalid_argument("config: eval.sigma must be positive");
    if (memory.policy == MemoryPolicy::kmeans && memory.kmeans_k == 0)
        throw std::invalid_argument("config: memory.kmeans_k must be positive");
    augment.validate();
    if (dataset.source == DatasetSource::gaussian && dataset.dim == 0)
        throw std::invalid_argument("config: dataset.dim must be positive");
    if (dataset.source == DatasetSource::gaussian && dataset.separation <= 0.0)
        throw std::invalid_argument("config: dataset.separation must be positive");
    if (dataset.source == DatasetSource::idx && (dataset.images.empty() || dataset.labels.empty()))
        throw std::invalid_argument("config: dataset.images and dataset.labels are required");
    if (dataset.source == DatasetSource::cifar10 && dataset.files.empty())
        throw std::invalid_argument("config: dataset.files is required");
    if (dataset.source == DatasetSource::flat && dataset.path.empty())
        throw std::invalid_argument("config: dataset.path is required");
}

bool ExperimentConfig::operator==(const ExperimentConfig& o) const {
    return StreamConfigEq{}(stream, o.stream) && dataset == o.dataset &&
           encoder_dims == o.encoder_dims && encoder_init_scale == o.encoder_init_scale &&
           loss.tau == o.loss.tau && loss.kappa == o.loss.kappa && loss.mu == o.loss.mu &&
           loss.lambda == o.loss.lambda && loss.literal_forget_sign == o.loss.literal_forget_sign &&
           loss.per_row_threshold == o.loss.per_row_threshold && memory == o.memory &&
           lr == o.lr && eval == o.eval && augment.mode == o.augment.mode &&
           augment.noise_sigma == o.augment.noise_sigma &&
           augment.scale_min == o.augment.scale_min && augment.scale_max == o.augment.scale_max &&
           augment.image_height == o.augment.image_height &&
           augment.image_width == o.augment.image_width &&
           augment.crop_padding == o.augment.crop_padding &&
           augment.flip_prob == o.augment.flip_prob &&
           augment.brightness_min == o.augment.brightness_min &&
           augment.brightness_max == o.augment.brightness_max &&
           augment.contrast_min == o.augment.contrast_min &&
           augment.contrast_max == o.augment.contrast_max &&
           augment.grayscale_prob == o.augment.grayscale_prob && seed == o.seed &&
           out_dir == o.out_dir && record_wall_time == o.record_wall_time;
}

ExperimentConfig ExperimentConfig::image_preset() {
    ExperimentConfig cfg;
    cfg.stream.kind = StreamKind::seq;
    cfg.stream.num_classes = 10;
    cfg.stream.per_class = 4096;
    cfg.stream.batch_size = 128;
    cfg.dataset.source = DatasetSource::cifar10;
    cfg.encoder_dims = {256, 128, 64};
    cfg.loss.tau = 0.1;
    cfg.loss.kappa = 0.1;
    cfg.loss.mu = 0.05;
    cfg.loss.lambda = 0.1;
    cfg.memory.capacity = 1280;
    cfg.memory.batch_size = 128;
    cfg.memory.policy = MemoryPolicy::psa;
    cfg.lr = 0.03;
    cfg.eval.per_class = 100;
    cfg.eval.knn_k = 50;
    cfg.augment.mode = AugmentMode::rgb_image;
    cfg.augment.image_height = 32;
    cfg.augment.image_width = 32;
    return cfg;
}

namespace {

[[noreturn]] void fail(const std::string& context, const std::string& message) {
    throw std::runtime_error("config " + context + ": " + message);
}

void reject_unknown_keys(const json& obj, const std::vector<std::string>& known,
                         const std::string& context) {
    for (const auto& [key, _] : obj.items()) {
        bool ok = false;
        for (const auto& k : known)
            if (k == key) {
                ok = true;
                break;
            }
        if (!ok) fail(context, "unknown key '" + key + "'");
    }
}

template <typename T>
void read_field(const json& obj, const char* key, T& out, const std::string& context) {
    if (!obj.contains(key)) return;
    try {
        out = obj.at(key).get<T>();
    } catch (const json::exception&) {
        fail(context, std::string("bad value for key '") + key + "'");
    }
}

void read_string_enum(const json& obj, const char* key, const std::string& context,
                      const std::function<void(const std::string&)>& apply) {
    if (!obj.contains(key)) return;
    if (!obj.at(key).is_string()) fail(context, std::string("key '") + key + "' must be a string");
    try {
        apply(obj.at(key).get<std::string>());
    } catch (const std::invalid_argument& e) {
        fail(context, e.what());
    }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& context) {
    json root;
    try {
        root = json::parse(text);
    } catch (const json::parse_error& e) {
        fail(context, e.what());
    }
    if (!root.is_object()) fail(context, "top level must be an object");

    reject_unknown_keys(root,
                        {"stream", "dataset", "encoder", "loss", "memory", "optimizer", "eval",
                         "augment", "seed", "out_dir", "timing"},
                        context);

    ExperimentConfig cfg;

    if (root.contains("stream")) {
        const json& s = root.at("stream");
        reject_unknown_keys(s, {"kind", "classes", "per_class", "batch_size"}, context + ".stream");
        read_string_enum(s, "kind", context + ".stream",
                         [&](const std::string& v) { cfg.stream.kind = stream_kind_from_string(v); });
        read_field(s, "classes", cfg.stream.num_classes, context + ".stream");
        read_field(s, "per_class", cfg.stream.per_class, context + ".stream");
        read_field(s, "batch_size", cfg.stream.batch_size, context + ".stream");
    }

    if (root.contains("dataset")) {
        const json& d = root.at("dataset");
        reject_unknown_keys(d,
                            {"source", "dim", "separation", "images", "labels", "eval_images",
                             "eval_labels", "files", "eval_files", "path", "eval_path"},
                            context + ".dataset");
        read_string_enum(d, "source", context + ".dataset", [&](const std::string& v) {
            cfg.dataset.source = dataset_source_from_string(v);
        });
        read_field(d, "dim", cfg.dataset.dim, context + ".dataset");
        read_field(d, "separation", cfg.dataset.separation, context + ".dataset");
        read_field(d, "images", cfg.dataset.images, context + ".dataset");
        read_field(d, "labels", cfg.dataset.labels, context + ".dataset");
        read_field(d, "eval_images", cfg.dataset.eval_images, context + ".dataset");
        read_field(d, "eval_labels", cfg.dataset.eval_labels, context + ".dataset");
        read_field(d, "files", cfg.dataset.files, context + ".dataset");
        read_field(d, "eval_files", cfg.dataset.eval_files, context + ".dataset");
        read_field(d, "path", cfg.dataset.path, context + ".dataset");
        read_field(d, "eval_path", cfg.dataset.eval_path, context + ".dataset");
    }

    if (root.contains("encoder")) {
        const json& e = root.at("encoder");
        reject_unknown_keys(e, {"dims", "init_scale"}, context + ".encoder");
        read_field(e, "dims", cfg.encoder_dims, context + ".encoder");
        read_field(e, "init_scale", cfg.encoder_init_scale, context + ".encoder");
    }

    if (root.contains("loss")) {
        const json& l = root.at("loss");
        reject_unknown_keys(
            l, {"tau", "kappa", "mu", "lambda", "literal_forget_sign", "per_row_threshold"},
            context + ".loss");
        read_field(l, "tau", cfg.loss.tau, context + ".loss");
        read_field(l, "kappa", cfg.loss.kappa, context + ".loss");
        read_field(l, "mu", cfg.loss.mu, context + ".loss");
        read_field(l, "lambda", cfg.loss.lambda, context + ".loss");
        read_field(l, "literal_forget_sign", cfg.loss.literal_forget_sign, context + ".loss");
        read_field(l, "per_row_threshold", cfg.loss.per_row_threshold, context + ".loss");
    }

    if (root.contains("memory")) {
        const json& m = root.at("memory");
        reject_unknown_keys(m, {"capacity", "batch_size", "policy", "kmeans_k"},
                            context + ".memory");
        read_field(m, "capacity", cfg.memory.capacity, context + ".memory");
        read_field(m, "batch_size", cfg.memory.batch_size, context + ".memory");
        read_string_enum(m, "policy", context + ".memory", [&](const std::string& v) {
            cfg.memory.policy = memory_policy_from_string(v);
        });
        read_field(m, "kmeans_k", cfg.memory.kmeans_k, context + ".memory");
    }

    if (root.contains("optimizer")) {
        const json& o = root.at("optimizer");
        reject_unknown_keys(o, {"lr"}, context + ".optimizer");
        read_field(o, "lr", cfg.lr, context + ".optimizer");
    }

    if (root.contains("eval")) {
        const json& e = root.at("eval");
        reject_unknown_keys(e, {"period", "per_class", "knn_k", "clustering", "sigma", "cap"},
                            context + ".eval");
        read_field(e, "period", cfg.eval.period, context + ".eval");
        read_field(e, "per_class", cfg.eval.per_class, context + ".eval");
        read_field(e, "knn_k", cfg.eval.knn_k, context + ".eval");
        read_string_enum(e, "clustering", context + ".eval", [&](const std::string& v) {
            if (v == "spectral")
                cfg.eval.use_spectral = true;
            else if (v == "kmeans")
                cfg.eval.use_spectral = false;
            else
                throw std::invalid_argument("unknown clustering method: " + v);
        });
        read_field(e, "sigma", cfg.eval.spectral_sigma, context + ".eval");
        read_field(e, "cap", cfg.eval.spectral_cap, context + ".eval");
    }

    if (root.contains("augment")) {
        const json& a = root.at("augment");
        reject_unknown_keys(a,
                            {"mode", "noise_sigma", "scale_min", "scale_max", "image_height",
                             "image_width", "crop_padding", "flip_prob", "brightness_min",
                             "brightness_max", "contrast_min", "contrast_max", "grayscale_prob"},
                            context + ".augment");
        read_string_enum(a, "mode", context + ".augment", [&](const std::string& v) {
            cfg.augment.mode = augment_mode_from_string(v);
        });
        read_field(a, "noise_sigma", cfg.augment.noise_sigma, context + ".augment");
        read_field(a, "scale_min", cfg.augment.scale_min, context + ".augment");
        read_field(a, "scale_max", cfg.augment.scale_max, context + ".augment");
        read_field(a, "image_height", cfg.augment.image_height, context + ".augment");
        read_field(a, "image_width", cfg.augment.image_width, context + ".augment");
        read_field(a, "crop_padding", cfg.augment.crop_padding, context + ".augment");
        read_field(a, "flip_prob", cfg.augment.flip_prob, context + ".augment");
        read_field(a, "brightness_min", cfg.augment.brightness_min, context + ".augment");
        read_field(a, "brightness_max", cfg.augment.brightness_max, context + ".augment");
        read_field(a, "contrast_min", cfg.augment.contrast_min, context + ".augment");
        read_field(a, "grayscale_prob", cfg.augment.grayscale_prob, context + ".augment");
        read_field(a, "contrast_max", cfg.augment.contrast_max, context + ".augment");
    }

    read_field(root, "seed", cfg.seed, context);
    read_field(root, "out_dir", cfg.out_dir, context);
    read_field(root, "timing", cfg.record_wall_time, context);

    cfg.stream.seed = cfg.seed;
    try {
        cfg.validate();
    } catch (const std::invalid_argument& e) {
        fail(context, e.what());
    }
    return cfg;
}

ExperimentConfig parse_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("config: cannot open " + path);
    std::stringstream buf;
    buf << is.rdbuf();
    return parse_config_text(buf.str(), path);
}

std::string serialize_config(const ExperimentConfig& cfg) {
    json root;
    root["stream"] = {{"kind", to_string(cfg.stream.kind)},
                      {"classes", cfg.stream.num_classes},
                      {"per_class", cfg.stream.per_class},
                      {"batch_size", cfg.stream.batch_size}};
    json d;
    d["source"] = to_string(cfg.dataset.source);
    d["dim"] = cfg.dataset.dim;
    d["separation"] = cfg.dataset.separation;
    if (!cfg.dataset.images.empty()) d["images"] = cfg.dataset.images;
    if (!cfg.dataset.labels.empty()) d["labels"] = cfg.dataset.labels;
    if (!cfg.dataset.eval_images.empty()) d["eval_images"] = cfg.dataset.eval_images;
    if (!cfg.dataset.eval_labels.empty()) d["eval_labels"] = cfg.dataset.eval_labels;
    if (!cfg.dataset.files.empty()) d["files"] = cfg.dataset.files;
    if (!cfg.dataset.eval_files.empty()) d["eval_files"] = cfg.dataset.eval_files;
    if (!cfg.dataset.path.empty()) d["path"] = cfg.dataset.path;
    if (!cfg.dataset.eval_path.empty()) d["eval_path"] = cfg.dataset.eval_path;
    root["dataset"] = d;
    root["encoder"] = {{"dims", cfg.encoder_dims}, {"init_scale", cfg.encoder_init_scale}};
    root["loss"] = {{"tau", cfg.loss.tau},
                    {"kappa", cfg.loss.kappa},
                    {"mu", cfg.loss.mu},
                    {"lambda", cfg.loss.lambda},
                    {"literal_forget_sign", cfg.loss.literal_forget_sign},
                    {"per_row_threshold", cfg.loss.per_row_threshold}};
    root["memory"] = {{"capacity", cfg.memory.capacity},
                      {"batch_size", cfg.memory.batch_size},
                      {"policy", to_string(cfg.memory.policy)},
                      {"kmeans_k", cfg.memory.kmeans_k}};
    root["optimizer"] = {{"lr", cfg.lr}};
    root["eval"] = {{"period", cfg.eval.period},
                    {"per_class", cfg.eval.per_class},
                    {"knn_k", cfg.eval.knn_k},
                    {"clustering", cfg.eval.use_spectral ? "spectral" : "kmeans"},
                    {"sigma", cfg.eval.spectral_sigma},
                    {"cap", cfg.eval.spectral_cap}};
    root["augment"] = {{"mode", to_string(cfg.augment.mode)},
                       {"noise_sigma", cfg.augment.noise_sigma},
                       {"scale_min", cfg.augment.scale_min},
                       {"scale_max", cfg.augment.scale_max},
                       {"image_height", cfg.augment.image_height},
                       {"image_width", cfg.augment.image_width},
                       {"crop_padding", cfg.augment.crop_padding},
                       {"flip_prob", cfg.augment.flip_prob},
                       {"brightness_min", cfg.augment.brightness_min},
                       {"brightness_max", cfg.augment.brightness_max},
                       {"contrast_min", cfg.augment.contrast_min},
                       {"contrast_max", cfg.augment.contrast_max},
                       {"grayscale_prob", cfg.augment.grayscale_prob}};
    root["seed"] = cfg.seed;
    root["out_dir"] = cfg.out_dir;
    root["timing"] = cfg.record_wall_time;
    return root.dump(2) + "\n";
}

std::uint64_t config_hash(const ExperimentConfig& cfg) {
    std::string text = serialize_config(cfg);
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : text) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

std::uint64_t resolve_seed(const ExperimentConfig& cfg, std::optional<std::uint64_t> cli_seed) {
    if (cli_seed) return *cli_seed;
    if (const char* env = std::getenv("SCALE_SEED")) {
        char* end = nullptr;
        unsigned long long v = std::strtoull(env, &end, 10);
        if (end == env || *end != '\0')
            throw std::runtime_error("SCALE_SEED is not an integer");
        return static_cast<std::uint64_t>(v);
    }
    return cfg.seed;
}

}  // namespace scale
