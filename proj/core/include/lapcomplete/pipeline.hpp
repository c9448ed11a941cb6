#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lapcomplete/config.hpp"
#include "lapcomplete/datagen.hpp"
#include "lapcomplete/gen_net.hpp"
#include "lapcomplete/graph_deform.hpp"
#include "lapcomplete/losses.hpp"

namespace lapcomplete {

// Every learnable buffer of the completion network plus its hyperparameters.
struct CompletionModel {
    RunConfig config;
    EncoderParams encoder;
    DecoderParams decoder;
    LocalFeatureParams features;
    GcnParams gcn;

    static CompletionModel create(const RunConfig& config);

    // Stable registration order; checkpoint and optimizer layouts rely on it.
    std::vector<Parameter*> parameters();
    std::vector<Parameter*> generation_parameters();  // encoder + decoder
    std::vector<Parameter*> deformation_parameters(); // features + gcn

    // Non-learnable buffers that still define eval behavior (batch-norm
    // running statistics), keyed for checkpointing.
    std::vector<std::pair<std::string, std::vector<double>*>> state_buffers();
};

struct ForwardOptions {
    bool training = false;
    bool apply_deformation = true;
    std::optional<int> n_control_override;
};

struct ForwardPass {
    Tensor shape_code;    // (1, feature_dim)
    Tensor intermediate;  // supports from the decoder, (n_support, 3)
    Tensor merged;        // controls ++ supports, (n_output, 3)
    Tensor deformed;      // final cloud, (n_output, 3)
    DeformGraph graph;
};

// Full forward: encode, decode, fuse controls, rebuild the graph from current
// values, extract features, deform. Requires |input| >= max(8, n_control).
ForwardPass run_forward(Tape& tape, CompletionModel& model, const PointCloud& input,
                        const ForwardOptions& options = {});

// Losses of one pass against the ground-truth cloud, on the same tape.
LossTerms compute_losses(Tape& tape, CompletionModel& model, const ForwardPass& pass,
                         const PointCloud& ground_truth, double lambda);

// ---- checkpointing ---------------------------------------------------------

// Binary, little-endian, magic "LCMP": config snapshot, epoch counter, named
// parameter records, named state buffers, optional Adam moments.
void save_checkpoint(const std::string& path, CompletionModel& model,
                     const AdamState* optimizer, std::int64_t epoch);

struct LoadedCheckpoint {
    CompletionModel model;
    std::optional<AdamState> optimizer;
    std::int64_t epoch = 0;
};

LoadedCheckpoint load_checkpoint(const std::string& path);

// ---- data ------------------------------------------------------------------

struct LoadedSample {
    PointCloud partial;
    PointCloud complete;
    std::string label;
};

std::vector<LoadedSample> load_split(const std::string& data_dir, const std::string& split);

// ---- training ----------------------------------------------------------------

struct TrainOptions {
    std::string init_from;          // checkpoint path; empty = fresh init
    bool freeze_generation = false; // optimize only the deformation stage
    std::ostream* progress = nullptr;
};

struct TrainOutcome {
    double initial_val_cd = 0.0;
    double best_val_cd = 0.0;
    double final_val_cd = 0.0;
    std::int64_t steps = 0;
    std::string best_checkpoint;
    std::string last_checkpoint;
    std::string log_path;
};

// Two-phase schedule: lambda_phase1 before phase_switch_epoch, lambda_phase2
// after. Writes train_log.jsonl (one JSON object per optimizer step),
// val_log.jsonl, config.toml, last.ckpt and best.ckpt under config.out_dir.
// Throws NumericError on a NaN loss; last.ckpt then holds the previous epoch.
TrainOutcome train_model(const RunConfig& config, const TrainOptions& options = {});

// Mean eval-mode Chamfer distance of the final output over the samples.
double validation_cd(CompletionModel& model, const std::vector<LoadedSample>& samples,
                     int threads);

// ---- evaluation ---------------------------------------------------------------

struct EvalOptions {
    std::string split = "test";
    bool apply_deformation = true;
    int input_size = 0;            // 0 = stored size
    std::string sampling = "random";  // random | fps
    std::optional<int> n_control_override;
};

struct EvalRow {
    std::string label;
    int count = 0;
    double cd = 0.0;     // bidirectional
    double cd_dg = 0.0;  // deformed -> ground truth term
    double cd_gd = 0.0;  // ground truth -> deformed term
};

struct EvalResult {
    std::vector<EvalRow> per_kind;
    EvalRow average;
    int runs = 0;
};

// Mean Chamfer per shape kind and overall, averaged over config.eval_runs
// input resamplings. Random sampling draws fresh subsets per run; fps is
// deterministic. Values are raw (callers scale by 1e4 for display).
EvalResult evaluate_model(CompletionModel& model, const EvalOptions& options,
                          const std::vector<LoadedSample>& samples, int threads);

}  // namespace lapcomplete
