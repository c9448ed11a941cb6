#pragma once

#include <map>
#include <string>
#include <variant>
#include <vector>

#include "lapcomplete/common.hpp"

namespace lapcomplete {

// Flat TOML subset: `key = value` lines with integer, float, boolean,
// quoted-string and homogeneous-array values, plus # comments. Enough for run
// configs while staying valid TOML.
namespace toml_lite {

using Value = std::variant<std::int64_t, double, bool, std::string, std::vector<std::int64_t>>;
using Table = std::map<std::string, Value>;

Table parse(const std::string& text);       // throws IoError with line numbers
Table parse_file(const std::string& path);
std::string serialize(const Table& table);  // keys in sorted order

}  // namespace toml_lite

// Every knob of the pipeline. Field names double as config keys and CLI flag
// names.
struct RunConfig {
    // paths
    std::string data_dir = "data";
    std::string out_dir = "runs/default";

    // dataset generation
    std::int64_t samples = 200;
    std::int64_t gt_size = 2048;
    double keep_fraction = 0.5;
    double val_fraction = 0.1;
    double test_fraction = 0.1;

    // cloud sizes
    std::int64_t n_input = 512;    // stored partial size N
    std::int64_t n_output = 512;   // final cloud size N_o
    std::int64_t n_control = 64;   // controlling points N_c

    // graph and features
    std::int64_t knn_k = 8;
    double radius_rel = 0.05;  // ball radius as a fraction of the input bbox diagonal
    std::int64_t group_size = 16;
    std::vector<std::int64_t> feature_widths{32, 64};

    // network dimensions
    std::int64_t d_mid = 128;
    std::int64_t feature_dim = 256;
    std::int64_t c0 = 64;
    std::int64_t tree_depth = 3;
    std::int64_t leaf_patch = 1;
    std::int64_t gcn_layers = 6;
    std::int64_t gcn_hidden = 128;
    std::string pool = "max";
    std::string fps_seed_rule = "lex_min";
    bool decoder_relu = true;

    // losses
    double alpha = 1000.0;
    double beta = 0.5;
    double lambda_phase1 = 0.0;
    double lambda_phase2 = 3.0;
    double recons_scale = 1000.0;
    std::string shape_loss = "per_vertex";

    // training
    double lr = 0.01;
    std::int64_t batch_size = 8;
    std::int64_t epochs = 30;
    std::int64_t phase_switch_epoch = 20;
    std::int64_t seed = 42;
    std::int64_t threads = 4;

    // evaluation
    std::int64_t eval_runs = 10;

    std::int64_t n_support() const { return n_output - n_control; }

    void validate() const;

    toml_lite::Table to_table() const;
    static RunConfig from_table(const toml_lite::Table& table);  // unknown keys rejected
    std::string to_toml() const { return toml_lite::serialize(to_table()); }
    static RunConfig from_toml(const std::string& text) {
        return from_table(toml_lite::parse(text));
    }
};

}  // namespace lapcomplete
