#include "scale/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "scale/losses.hpp"

namespace scale {

namespace {

Matrix vstack(const Matrix& top, const Matrix& bottom) {
    if (bottom.rows == 0) return top;
    if (top.rows == 0) return bottom;
    if (top.cols != bottom.cols) throw std::invalid_argument("vstack: width mismatch");
    Matrix out(top.rows + bottom.rows, top.cols);
    std::copy(top.data.begin(), top.data.end(), out.data.begin());
    std::copy(bottom.data.begin(), bottom.data.end(),
              out.data.begin() + static_cast<std::ptrdiff_t>(top.data.size()));
    return out;
}

LabeledDataset load_dataset(const ExperimentConfig& cfg, RngState& data_rng,
                            std::size_t extra_per_class) {
    switch (cfg.dataset.source) {
        case DatasetSource::gaussian:
            return gen_gaussian_mixture(cfg.stream.num_classes,
                                        cfg.stream.per_class + extra_per_class, cfg.dataset.dim,
                                        cfg.dataset.separation, data_rng);
        case DatasetSource::idx:
            return load_idx(cfg.dataset.images, cfg.dataset.labels);
        case DatasetSource::cifar10:
            return load_cifar10_bin(cfg.dataset.files);
        case DatasetSource::flat:
            return load_flat_dataset(cfg.dataset.path);
    }
    throw std::logic_error("load_dataset: unreachable");
}

bool has_separate_eval(const ExperimentConfig& cfg) {
    switch (cfg.dataset.source) {
        case DatasetSource::gaussian: return false;
        case DatasetSource::idx:
            return !cfg.dataset.eval_images.empty() && !cfg.dataset.eval_labels.empty();
        case DatasetSource::cifar10: return !cfg.dataset.eval_files.empty();
        case DatasetSource::flat: return !cfg.dataset.eval_path.empty();
    }
    return false;
}

LabeledDataset load_separate_eval(const ExperimentConfig& cfg) {
    switch (cfg.dataset.source) {
        case DatasetSource::idx:
            return load_idx(cfg.dataset.eval_images, cfg.dataset.eval_labels);
        case DatasetSource::cifar10:
            return load_cifar10_bin(cfg.dataset.eval_files);
        case DatasetSource::flat:
            return load_flat_dataset(cfg.dataset.eval_path);
        default:
            throw std::logic_error("load_separate_eval: no separate eval source");
    }
}

// Balanced eval set: exactly per_class samples of each class.
EvalSet balanced_eval_set(const LabeledDataset& pool, std::size_t T, std::size_t per_class,
                          RngState& rng) {
    std::vector<std::vector<std::size_t>> by_class(T);
    for (std::size_t i = 0; i < pool.labels.size(); ++i) {
        int y = pool.labels[i];
        if (y >= 0 && static_cast<std::size_t>(y) < T)
            by_class[static_cast<std::size_t>(y)].push_back(i);
    }
    std::vector<std::size_t> chosen;
    for (std::size_t c = 0; c < T; ++c) {
        if (by_class[c].size() < per_class)
            throw std::invalid_argument("eval set: class " + std::to_string(c) +
                                        " has fewer than eval.per_class samples");
        rng.shuffle(by_class[c]);
        for (std::size_t t = 0; t < per_class; ++t) chosen.push_back(by_class[c][t]);
    }
    EvalSet out;
    out.samples = Matrix(chosen.size(), pool.dim());
    out.labels.resize(chosen.size());
    for (std::size_t t = 0; t < chosen.size(); ++t) {
        const double* src = pool.samples.row_ptr(chosen[t]);
        std::copy(src, src + pool.dim(), out.samples.row_ptr(t));
        out.labels[t] = pool.labels[chosen[t]];
    }
    out.validate(static_cast<int>(T));
    return out;
}

struct PreparedRun {
    LabeledDataset train_pool;
    EvalSet eval_set;
    std::vector<StreamBatch> stream;
    RngState init_rng;
    RngState aug_rng;
    RngState mem_rng;
    RngState policy_rng;
    std::uint64_t eval_seed = 0;
};

// Fixed split order so that every run (including resumed ones) derives the
// same child streams from the config seed.
PreparedRun prepare_run(const ExperimentConfig& cfg) {
    cfg.validate();
    RngState root(cfg.seed);
    RngState data_rng = root.split();
    RngState split_rng = root.split();
    RngState stream_rng = root.split();

    PreparedRun run;
    run.init_rng = root.split();
    run.aug_rng = root.split();
    run.mem_rng = root.split();
    run.policy_rng = root.split();
    run.eval_seed = root.next_u64();

    const std::size_t T = cfg.stream.num_classes;
    LabeledDataset data = load_dataset(cfg, data_rng, cfg.eval.per_class);
    if (has_separate_eval(cfg)) {
        run.train_pool = std::move(data);
        LabeledDataset eval_data = load_separate_eval(cfg);
        run.eval_set = balanced_eval_set(eval_data, T, cfg.eval.per_class, split_rng);
    } else {
        LabeledDataset eval_slice;
        split_train_eval(data, T, cfg.stream.per_class, cfg.eval.per_class, split_rng,
                         run.train_pool, eval_slice);
        run.eval_set = balanced_eval_set(eval_slice, T, cfg.eval.per_class, split_rng);
    }

    StreamSpec spec = cfg.stream;
    spec.seed = cfg.seed;
    run.stream = build_stream(run.train_pool, spec, stream_rng);
    return run;
}

}  // namespace

TrainerState init_trainer(const ExperimentConfig& cfg, std::size_t input_dim, RngState& root) {
    TrainerState st;
    st.cfg = cfg;
    std::vector<std::size_t> dims;
    dims.push_back(input_dim);
    dims.insert(dims.end(), cfg.encoder_dims.begin(), cfg.encoder_dims.end());
    st.params = encoder_init(dims, root, cfg.encoder_init_scale);
    st.frozen = snapshot(st.params);
    st.buffer.capacity = cfg.memory.capacity;
    return st;
}

void train_step(TrainerState& st, const StreamBatch& batch) {
    const ExperimentConfig& cfg = st.cfg;
    if (batch.samples.rows == 0) throw std::invalid_argument("train_step: empty batch");

    Matrix mem = sample_batch(st.buffer, cfg.memory.batch_size, st.mem_rng);
    const std::size_t n_stream = batch.samples.rows;
    const std::size_t m_mem = mem.rows;

    Matrix combined = vstack(batch.samples, mem);
    Matrix augmented = augment_two_views(combined, cfg.augment, st.aug_rng);

    // The frozen model is the one that trained on the previous batch: one
    // update behind the live parameters (equal on the very first step).
    if (!(st.params.version == st.frozen.params.version + 1 ||
          (st.step == 0 && st.params.version == st.frozen.params.version)))
        throw std::logic_error("train_step: frozen snapshot out of rotation");

    ForwardTrace trace_cur = encoder_forward(st.params, augmented);
    ForwardTrace trace_past = encoder_forward(st.frozen.params, augmented);

    LossResult loss =
        total_loss(trace_cur.features, trace_past.features, cfg.loss, n_stream, m_mem);
    if (!std::isfinite(loss.value)) {
        std::ostringstream oss;
        oss << "train_step: non-finite loss at step " << (st.step + 1)
            << " (cont=" << loss.contrastive << ", forget=" << loss.forgetting
            << ", n=" << n_stream << ", m=" << m_mem << ")";
        throw std::runtime_error(oss.str());
    }

    ParamGrads grads = encoder_backward(st.params, trace_cur, loss.grad_features);
    st.frozen = snapshot(st.params);
    sgd_step(st.params, grads, cfg.lr);

    memory_update(st.buffer, batch.samples, batch.provenance, st.params, cfg.memory.policy,
                  st.policy_rng, cfg.memory.kmeans_k);

    ++st.step;
    st.last_cont = loss.contrastive;
    st.last_forget = loss.forgetting;
    st.last_total = loss.value;
}

EvalScores evaluate_now(const TrainerState& st, const EvalSet& eval_set) {
    EvalOptions opts;
    opts.knn_k = st.cfg.eval.knn_k;
    opts.use_spectral = st.cfg.eval.use_spectral;
    opts.spectral_sigma = st.cfg.eval.spectral_sigma;
    opts.spectral_cap = st.cfg.eval.spectral_cap;
    RngState eval_rng(st.eval_seed + st.step);
    FrozenSnapshot current = snapshot(st.params);
    return evaluate(current, eval_set, st.cfg.stream.num_classes, opts, eval_rng);
}

namespace {

constexpr char kStateMagic[4] = {'S', 'C', 'S', 'T'};
constexpr std::uint32_t kStateVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

void write_f64(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64(os, bits);
}

std::uint32_t read_u32(std::istream& is, const std::string& path) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw std::runtime_error("run state truncated: " + path);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= std::uint32_t(b[i]) << (8 * i);
    return v;
}

std::uint64_t read_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8))
        throw std::runtime_error("run state truncated: " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= std::uint64_t(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is, const std::string& path) {
    std::uint64_t bits = read_u64(is, path);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

}  // namespace

void save_run_state(const TrainerState& st, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_run_state: cannot open " + path);
    os.write(kStateMagic, 4);
    write_u32(os, kStateVersion);
    write_u64(os, st.step);
    write_u64(os, st.eval_seed);
    write_u64(os, st.aug_rng.raw_state());
    write_u64(os, st.mem_rng.raw_state());
    write_u64(os, st.policy_rng.raw_state());
    write_f64(os, st.last_cont);
    write_f64(os, st.last_forget);
    write_f64(os, st.last_total);
    write_params(os, st.params);
    write_params(os, st.frozen.params);
    write_u64(os, st.buffer.capacity);
    write_u64(os, st.buffer.items.rows);
    write_u64(os, st.buffer.items.cols);
    for (double v : st.buffer.items.data) write_f64(os, v);
    write_u64(os, st.buffer.hidden_labels.size());
    for (int y : st.buffer.hidden_labels) write_u32(os, static_cast<std::uint32_t>(y));
    if (!os) throw std::runtime_error("save_run_state: write failed for " + path);
}

TrainerState load_run_state(const ExperimentConfig& cfg, const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_run_state: cannot open " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kStateMagic, 4) != 0)
        throw std::runtime_error("load_run_state: bad magic in " + path);
    if (read_u32(is, path) != kStateVersion)
        throw std::runtime_error("load_run_state: unsupported version in " + path);

    TrainerState st;
    st.cfg = cfg;
    st.step = read_u64(is, path);
    st.eval_seed = read_u64(is, path);
    st.aug_rng.set_raw_state(read_u64(is, path));
    st.mem_rng.set_raw_state(read_u64(is, path));
    st.policy_rng.set_raw_state(read_u64(is, path));
    st.last_cont = read_f64(is, path);
    st.last_forget = read_f64(is, path);
    st.last_total = read_f64(is, path);
    st.params = read_params(is, path);
    st.frozen.params = read_params(is, path);
    st.buffer.capacity = read_u64(is, path);
    std::uint64_t rows = read_u64(is, path);
    std::uint64_t cols = read_u64(is, path);
    st.buffer.items = Matrix(rows, cols);
    for (double& v : st.buffer.items.data) v = read_f64(is, path);
    std::uint64_t n_labels = read_u64(is, path);
    st.buffer.hidden_labels.resize(n_labels);
    for (auto& y : st.buffer.hidden_labels) y = static_cast<int>(read_u32(is, path));
    return st;
}

namespace {

const char* kCodeVersion = "scale 0.1.0";

void write_manifest(const ExperimentConfig& cfg, const std::string& path) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open " + path + " for writing");
    char hash[32];
    std::snprintf(hash, sizeof(hash), "%016llx",
                  static_cast<unsigned long long>(config_hash(cfg)));
    os << "config_hash=" << hash << "\n"
       << "code_version=" << kCodeVersion << "\n"
       << "seed=" << cfg.seed << "\n";
}

}  // namespace

ExperimentResult run_experiment_from(const ExperimentConfig& cfg, TrainerState* resumed,
                                     std::uint64_t capture_step, const std::string& state_out) {
    PreparedRun run = prepare_run(cfg);
    const std::size_t input_dim = run.train_pool.dim();

    TrainerState st;
    if (resumed) {
        st = *resumed;
        if (st.step > run.stream.size())
            throw std::invalid_argument("run_experiment: resume position beyond stream end");
    } else {
        st = init_trainer(cfg, input_dim, run.init_rng);
        st.aug_rng = run.aug_rng;
        st.mem_rng = run.mem_rng;
        st.policy_rng = run.policy_rng;
        st.eval_seed = run.eval_seed;
    }

    ExperimentResult result;
    result.initial_params = st.params;

    const bool has_out = !cfg.out_dir.empty();
    std::string metrics_path;
    if (has_out) {
        std::filesystem::create_directories(cfg.out_dir);
        metrics_path = cfg.out_dir + "/metrics.csv";
        write_manifest(cfg, cfg.out_dir + "/manifest.txt");
    }

    auto start_time = std::chrono::steady_clock::now();
    auto elapsed_ms = [&]() {
        if (!cfg.record_wall_time) return 0.0;
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                         start_time)
            .count();
    };

    auto emit_row = [&]() {
        EvalScores scores = evaluate_now(st, run.eval_set);
        MetricsRow row;
        row.step = st.step;
        row.loss_cont = st.last_cont;
        row.loss_forget = st.last_forget;
        row.loss_total = st.last_total;
        row.acc = scores.acc;
        row.knn_acc = scores.knn_acc;
        row.buffer_fill = st.buffer.size();
        row.wall_ms = elapsed_ms();
        result.rows.push_back(row);
        if (has_out) write_metrics(result.rows, metrics_path);  // flush incrementally
    };

    const std::uint64_t total_batches = run.stream.size();
    if (st.step == 0) emit_row();

    for (std::uint64_t b = st.step; b < total_batches; ++b) {
        try {
            train_step(st, run.stream[b]);
        } catch (...) {
            if (has_out) write_metrics(result.rows, metrics_path);
            throw;
        }
        bool periodic = st.step % cfg.eval.period == 0;
        bool final_step = st.step == total_batches;
        if (periodic || final_step) emit_row();
        if (!state_out.empty() && st.step == capture_step) save_run_state(st, state_out);
    }

    result.final_params = st.params;
    if (has_out) {
        write_metrics(result.rows, metrics_path);
        save_checkpoint(st.params, cfg.out_dir + "/encoder.ckpt");
    }
    return result;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
    return run_experiment_from(cfg, nullptr, 0, "");
}

}  // namespace scale
