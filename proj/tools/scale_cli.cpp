#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "scale/config.hpp"
#include "scale/eval.hpp"
#include "scale/memory.hpp"
#include "scale/streams.hpp"
#include "scale/trainer.hpp"

namespace {

int cmd_run(const std::string& config_path, std::optional<std::uint64_t> seed,
            const std::string& out_override, const std::string& resume_path,
            std::uint64_t save_state_at, const std::string& state_out) {
    scale::ExperimentConfig cfg = scale::parse_config(config_path);
    cfg.seed = scale::resolve_seed(cfg, seed);
    cfg.stream.seed = cfg.seed;
    if (!out_override.empty()) cfg.out_dir = out_override;

    scale::ExperimentResult result;
    if (!resume_path.empty()) {
        scale::TrainerState st = scale::load_run_state(cfg, resume_path);
        result = scale::run_experiment_from(cfg, &st, save_state_at, state_out);
    } else {
        result = scale::run_experiment_from(cfg, nullptr, save_state_at, state_out);
    }

    const auto& last = result.rows.back();
    std::printf("steps=%llu acc=%.4f knn_acc=%.4f loss=%.6f\n",
                static_cast<unsigned long long>(last.step), last.acc, last.knn_acc,
                last.loss_total);
    if (!cfg.out_dir.empty())
        std::printf("outputs written to %s (metrics.csv, encoder.ckpt, manifest.txt)\n",
                    cfg.out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string& checkpoint, const std::string& data_path, std::size_t knn_k,
             std::uint64_t seed, const std::string& clustering) {
    scale::EncoderParams params = scale::load_checkpoint(checkpoint);
    scale::LabeledDataset data = scale::load_flat_dataset(data_path);
    int T = data.num_classes();
    if (T < 1) throw std::runtime_error("eval: dataset has no labels");

    // Use the largest per-class count that every class can supply.
    std::vector<std::size_t> counts(static_cast<std::size_t>(T), 0);
    for (int y : data.labels) ++counts[static_cast<std::size_t>(y)];
    std::size_t per_class = counts[0];
    for (std::size_t c : counts) per_class = std::min(per_class, c);
    if (per_class < 2) throw std::runtime_error("eval: need at least 2 samples per class");

    scale::RngState rng(seed);
    scale::LabeledDataset pool = data;
    scale::EvalSet eval_set;
    {
        std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(T));
        for (std::size_t i = 0; i < data.labels.size(); ++i)
            by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
        std::vector<std::size_t> chosen;
        for (auto& members : by_class) {
            rng.shuffle(members);
            for (std::size_t t = 0; t < per_class; ++t) chosen.push_back(members[t]);
        }
        eval_set.samples = scale::Matrix(chosen.size(), data.dim());
        eval_set.labels.resize(chosen.size());
        for (std::size_t t = 0; t < chosen.size(); ++t) {
            const double* src = data.samples.row_ptr(chosen[t]);
            std::copy(src, src + data.dim(), eval_set.samples.row_ptr(t));
            eval_set.labels[t] = data.labels[chosen[t]];
        }
    }

    scale::EvalOptions opts;
    opts.knn_k = knn_k;
    opts.use_spectral = clustering != "kmeans";
    scale::EvalScores scores = scale::evaluate(scale::snapshot(params), eval_set,
                                               static_cast<std::size_t>(T), opts, rng);
    std::printf("acc=%.4f knn_acc=%.4f classes=%d samples_per_class=%zu\n", scores.acc,
                scores.knn_acc, T, per_class);
    return 0;
}

int cmd_gen_data(const std::string& kind, std::size_t T, std::size_t U, std::size_t dim,
                 double separation, std::uint64_t seed, const std::string& out) {
    if (kind != "gaussian") throw std::runtime_error("gen-data: unsupported kind " + kind);
    scale::RngState rng(seed);
    scale::LabeledDataset data = scale::gen_gaussian_mixture(T, U, dim, separation, rng);
    scale::save_flat_dataset(data, out);
    std::printf("wrote %zu samples (%zu classes, dim %zu) to %s\n", data.size(), T, dim,
                out.c_str());
    return 0;
}

int cmd_select(const std::string& policy, std::size_t capacity, const std::string& in_path,
               const std::string& out_path, std::uint64_t seed) {
    scale::LabeledDataset data = scale::load_flat_dataset(in_path);
    std::vector<std::size_t> selected;
    if (policy == "psa") {
        selected = scale::psa_select(data.samples, capacity);
    } else if (policy == "minred") {
        selected = scale::minred_select(data.samples, capacity);
    } else if (policy == "random") {
        scale::RngState rng(seed);
        selected = scale::random_select(data.size(), capacity, rng);
    } else {
        throw std::runtime_error("select: unsupported policy " + policy);
    }
    std::ofstream os(out_path);
    if (!os) throw std::runtime_error("select: cannot open " + out_path);
    for (std::size_t i : selected) os << i << "\n";
    std::printf("selected %zu of %zu rows -> %s\n", selected.size(), data.size(),
                out_path.c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"SCALE: online self-supervised lifelong learning experiments"};
    app.require_subcommand(1);

    // run
    std::string run_config, run_out, run_resume, run_state_out;
    std::optional<std::uint64_t> run_seed;
    std::uint64_t run_save_at = 0;
    auto* run = app.add_subcommand("run", "train on a configured stream");
    run->add_option("--config", run_config, "config file (JSON)")->required();
    std::uint64_t run_seed_raw = 0;
    auto* seed_opt = run->add_option("--seed", run_seed_raw, "override the config seed");
    run->add_option("--out", run_out, "override the output directory");
    run->add_option("--resume", run_resume, "resume from a run-state file");
    run->add_option("--save-state-at", run_save_at, "capture run state after this step");
    run->add_option("--state-out", run_state_out, "where to write the captured run state");

    // eval
    std::string eval_ckpt, eval_data, eval_clustering = "spectral";
    std::size_t eval_k = 5;
    std::uint64_t eval_seed = 1;
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a labeled dataset");
    ev->add_option("--checkpoint", eval_ckpt, "encoder checkpoint")->required();
    ev->add_option("--data", eval_data, "flat dataset file")->required();
    ev->add_option("--k", eval_k, "kNN neighbor count");
    ev->add_option("--seed", eval_seed, "evaluation seed");
    ev->add_option("--clustering", eval_clustering, "spectral|kmeans");

    // gen-data
    std::string gen_kind = "gaussian", gen_out;
    std::size_t gen_T = 4, gen_U = 800, gen_dim = 2;
    double gen_sep = 6.0;
    std::uint64_t gen_seed = 1;
    auto* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    gen->add_option("--kind", gen_kind, "dataset kind (gaussian)");
    gen->add_option("--T", gen_T, "class count");
    gen->add_option("--U", gen_U, "samples per class");
    gen->add_option("--dim", gen_dim, "sample dimension");
    gen->add_option("--separation", gen_sep, "mean separation");
    gen->add_option("--seed", gen_seed, "generation seed");
    gen->add_option("--out", gen_out, "output file")->required();

    // select
    std::string sel_policy, sel_in, sel_out;
    std::size_t sel_capacity = 0;
    std::uint64_t sel_seed = 1;
    auto* sel = app.add_subcommand("select", "subset selection over a vector file");
    sel->add_option("--policy", sel_policy, "psa|minred|random")->required();
    sel->add_option("--capacity", sel_capacity, "number of rows to keep")->required();
    sel->add_option("--in", sel_in, "flat dataset file")->required();
    sel->add_option("--out", sel_out, "index list output (one per line)")->required();
    sel->add_option("--seed", sel_seed, "seed for the random policy");

    CLI11_PARSE(app, argc, argv);

    try {
        if (run->parsed()) {
            if (seed_opt->count() > 0) run_seed = run_seed_raw;
            return cmd_run(run_config, run_seed, run_out, run_resume, run_save_at,
                           run_state_out);
        }
        if (ev->parsed())
            return cmd_eval(eval_ckpt, eval_data, eval_k, eval_seed, eval_clustering);
        if (gen->parsed())
            return cmd_gen_data(gen_kind, gen_T, gen_U, gen_dim, gen_sep, gen_seed, gen_out);
        if (sel->parsed()) return cmd_select(sel_policy, sel_capacity, sel_in, sel_out, sel_seed);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
