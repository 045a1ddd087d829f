#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scale/config.hpp"
#include "scale/encoder.hpp"
#include "scale/eval.hpp"
#include "scale/memory.hpp"
#include "scale/metrics.hpp"
#include "scale/streams.hpp"

namespace scale {

// Live training state for one experiment. Single-owner; one step at a time.
struct TrainerState {
    ExperimentConfig cfg;
    EncoderParams params;
    FrozenSnapshot frozen;   // the model as it was while the previous batch trained
    MemoryBuffer buffer;
    RngState aug_rng;
    RngState mem_rng;
    RngState policy_rng;
    std::uint64_t eval_seed = 0;
    std::uint64_t step = 0;  // completed training steps
    double last_cont = 0.0;
    double last_forget = 0.0;
    double last_total = 0.0;
};

struct ExperimentResult {
    std::vector<MetricsRow> rows;
    EncoderParams final_params;
    EncoderParams initial_params;
};

TrainerState init_trainer(const ExperimentConfig& cfg, std::size_t input_dim, RngState& root);

// One pipeline step: memory sample -> stack -> two views -> current and
// frozen forward -> loss -> backward -> snapshot rotation -> SGD update ->
// memory update with the raw streaming batch.
void train_step(TrainerState& state, const StreamBatch& batch);

// Periodic frozen-model evaluation, deterministic in (seed, step).
EvalScores evaluate_now(const TrainerState& state, const EvalSet& eval_set);

// Builds the dataset and stream, runs the single pass, evaluates at step 0,
// every eval.period steps and at the end. Writes metrics/checkpoint/manifest
// under cfg.out_dir when set.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Resume support: full training state (params, frozen model, buffer, rng
// counters, step index) in one file.
void save_run_state(const TrainerState& state, const std::string& path);
TrainerState load_run_state(const ExperimentConfig& cfg, const std::string& path);

// Same orchestration as run_experiment but starting from a captured state;
// optionally captures state at capture_step into state_out.
ExperimentResult run_experiment_from(const ExperimentConfig& cfg, TrainerState* resumed,
                                     std::uint64_t capture_step, const std::string& state_out);

}  // namespace scale
