#include <CLI11.hpp>

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "lapcomplete/gradcheck.hpp"
#include "lapcomplete/lsq_oracle.hpp"
#include "lapcomplete/pipeline.hpp"

namespace {

using namespace lapcomplete;
using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitIo = 3;

// Binds every RunConfig field as a CLI flag of the same name; --config loads
// a TOML file first, flags override it.
struct ConfigArgs {
    std::string config_path;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "TOML run configuration file");
        auto bind = [&](const std::string& key, const std::string& help) {
            cmd->add_option_function<std::string>(
                "--" + key,
                [this, key](const std::string& v) { overrides[key] = v; }, help);
        };
        RunConfig defaults;
        for (const auto& [key, value] : defaults.to_table()) {
            (void)value;
            bind(key, "override config key '" + key + "'");
        }
    }

    RunConfig resolve() const {
        toml_lite::Table table;
        if (!config_path.empty()) table = toml_lite::parse_file(config_path);
        for (const auto& [key, raw] : overrides) {
            // reuse the TOML value grammar for flag values; bare words are strings
            toml_lite::Table one;
            try {
                one = toml_lite::parse(key + " = " + raw);
            } catch (const IoError&) {
                one = toml_lite::parse(key + " = \"" + raw + "\"");
            }
            table[key] = one.at(key);
        }
        RunConfig config = RunConfig::from_table(table);
        if (const char* env_seed = std::getenv("LAPCOMPLETE_SEED")) {
            try {
                config.seed = std::stoll(env_seed);
            } catch (...) {
                throw UsageError("LAPCOMPLETE_SEED is not an integer: '" +
                                 std::string(env_seed) + "'");
            }
        }
        config.validate();
        return config;
    }

    std::map<std::string, std::string> overrides;
};

void print_eval_table(const EvalResult& result, std::ostream& out) {
    out << "kind        count   CD x1e4     CD(D,G)     CD(G,D)\n";
    char line[160];
    auto row = [&](const EvalRow& r) {
        std::snprintf(line, sizeof line, "%-10s %6d %10.4f %11.4f %11.4f\n",
                      r.label.c_str(), r.count, r.cd * 1e4, r.cd_dg * 1e4, r.cd_gd * 1e4);
        out << line;
    };
    for (const EvalRow& r : result.per_kind) row(r);
    row(result.average);
    out << "(averaged over " << result.runs << " resampling runs)\n";
}

json eval_to_json(const EvalResult& result) {
    json rows = json::array();
    auto row = [](const EvalRow& r) {
        return json{{"label", r.label},
                    {"count", r.count},
                    {"cd", r.cd},
                    {"cd_dg", r.cd_dg},
                    {"cd_gd", r.cd_gd}};
    };
    for (const EvalRow& r : result.per_kind) rows.push_back(row(r));
    return json{{"per_kind", rows}, {"average", row(result.average)},
                {"runs", result.runs}};
}

// controls file: one control per line, "index x y z"
void read_controls(const std::string& path, std::vector<int>& indices,
                   std::vector<Vec3>& targets) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open controls file '" + path + "'");
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::istringstream fields(line);
        int idx;
        Vec3 t;
        std::string extra;
        if (!(fields >> idx >> t[0] >> t[1] >> t[2]) || (fields >> extra))
            throw IoError("controls '" + path + "' line " + std::to_string(line_no) +
                          ": expected 'index x y z'");
        indices.push_back(idx);
        targets.push_back(t);
    }
    if (indices.empty()) throw IoError("controls '" + path + "': no entries");
}

int run(int argc, char** argv) {
    CLI::App app{"Point cloud completion via graph-guided deformation"};
    app.require_subcommand(1);

    // gen-data
    auto* gen_data = app.add_subcommand("gen-data", "generate the synthetic dataset");
    ConfigArgs gen_args;
    gen_args.attach(gen_data);

    // train
    auto* train = app.add_subcommand("train", "train with the two-phase schedule");
    ConfigArgs train_args;
    train_args.attach(train);
    std::string init_from;
    bool freeze_generation = false;
    train->add_option("--init_from", init_from, "checkpoint to initialize weights from");
    train->add_flag("--freeze_generation", freeze_generation,
                    "train only the deformation stage");

    // eval
    auto* eval = app.add_subcommand("eval", "per-kind Chamfer table for a checkpoint");
    std::string eval_checkpoint, eval_split = "test", eval_sampling = "random";
    std::string eval_json_path;
    int eval_input_size = 0;
    int eval_controls = 0;
    bool no_deform = false;
    std::string eval_data_dir;
    int eval_runs_override = 0;
    eval->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();
    eval->add_option("--split", eval_split, "train|val|test (default test)");
    eval->add_option("--data_dir", eval_data_dir, "dataset directory override");
    eval->add_option("--input-size", eval_input_size, "subsample inputs to this size");
    eval->add_option("--sampling", eval_sampling, "input subsampling: random|fps");
    eval->add_option("--controls", eval_controls, "override the controlling point count");
    eval->add_option("--json", eval_json_path, "also write the table as JSON");
    eval->add_option("--runs", eval_runs_override, "override the resampling run count");
    eval->add_flag("--no-deform", no_deform, "skip the deformation stage");

    // complete
    auto* complete = app.add_subcommand("complete", "complete a single cloud");
    std::string complete_checkpoint, complete_input, complete_output;
    bool emit_intermediate = false;
    complete->add_option("--checkpoint", complete_checkpoint, "model checkpoint")->required();
    complete->add_option("input", complete_input, "input XYZ file")->required();
    complete->add_option("output", complete_output, "output XYZ file")->required();
    complete->add_flag("--emit-intermediate", emit_intermediate,
                       "also write the intermediate cloud and control mask");

    // deform-lsq
    auto* deform_lsq =
        app.add_subcommand("deform-lsq", "least-squares Laplacian deformation");
    std::string lsq_input, lsq_controls, lsq_output, lsq_delta_source;
    int lsq_k = 8;
    double lsq_weight = 1e3;
    deform_lsq->add_option("input", lsq_input, "input XYZ file")->required();
    deform_lsq->add_option("output", lsq_output, "output XYZ file")->required();
    deform_lsq->add_option("--controls", lsq_controls, "controls file: 'index x y z' lines")
        ->required();
    deform_lsq->add_option("--k", lsq_k, "neighbors per point (default 8)");
    deform_lsq->add_option("--weight", lsq_weight, "control weight (default 1e3)");
    deform_lsq->add_option("--delta-source", lsq_delta_source,
                           "cloud whose Laplacian coordinates to preserve "
                           "(default: the input)");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference gradient checks");
    double gc_tolerance = 1e-3;
    int gc_n = 32, gc_k = 4;
    std::uint64_t gc_seed = 7;
    gradcheck->add_option("--tolerance", gc_tolerance, "max relative error (default 1e-3)");
    gradcheck->add_option("--n", gc_n, "points per test cloud (default 32)");
    gradcheck->add_option("--k", gc_k, "graph neighbors (default 4)");
    gradcheck->add_option("--seed", gc_seed, "rng seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUsage;
    }

    if (gen_data->parsed()) {
        const RunConfig config = gen_args.resolve();
        DatasetConfig data;
        data.dir = config.data_dir;
        data.samples = static_cast<int>(config.samples);
        data.partial_size = static_cast<int>(config.n_input);
        data.complete_size = static_cast<int>(config.gt_size);
        data.keep_fraction = config.keep_fraction;
        data.val_fraction = config.val_fraction;
        data.test_fraction = config.test_fraction;
        data.seed = static_cast<std::uint64_t>(config.seed);
        generate_dataset(data);
        std::cout << "wrote " << data.samples << " samples under " << data.dir << "\n";
        return kExitOk;
    }

    if (train->parsed()) {
        const RunConfig config = train_args.resolve();
        TrainOptions options;
        options.init_from = init_from;
        options.freeze_generation = freeze_generation;
        options.progress = &std::cout;
        const TrainOutcome outcome = train_model(config, options);
        std::cout << "initial val CD " << outcome.initial_val_cd << ", best "
                  << outcome.best_val_cd << ", final " << outcome.final_val_cd << "\n"
                  << "best checkpoint: " << outcome.best_checkpoint << "\n";
        return kExitOk;
    }

    if (eval->parsed()) {
        LoadedCheckpoint loaded = load_checkpoint(eval_checkpoint);
        if (eval_runs_override > 0) loaded.model.config.eval_runs = eval_runs_override;
        const std::string dir =
            eval_data_dir.empty() ? loaded.model.config.data_dir : eval_data_dir;
        const std::vector<LoadedSample> samples = load_split(dir, eval_split);
        EvalOptions options;
        options.split = eval_split;
        options.apply_deformation = !no_deform;
        options.input_size = eval_input_size;
        options.sampling = eval_sampling;
        if (eval_controls > 0) options.n_control_override = eval_controls;
        const EvalResult result = evaluate_model(loaded.model, options, samples,
                                                 static_cast<int>(loaded.model.config.threads));
        print_eval_table(result, std::cout);
        if (!eval_json_path.empty()) {
            std::ofstream out(eval_json_path);
            if (!out) throw IoError("cannot write '" + eval_json_path + "'");
            out << eval_to_json(result).dump(2) << '\n';
        }
        return kExitOk;
    }

    if (complete->parsed()) {
        LoadedCheckpoint loaded = load_checkpoint(complete_checkpoint);
        const PointCloud input = read_xyz(complete_input);
        if (input.size() < 8) throw UsageError("input cloud needs at least 8 points");
        Tape tape;
        ForwardPass pass = run_forward(tape, loaded.model, input);
        write_xyz(complete_output, cloud_from_tensor(pass.deformed));
        if (emit_intermediate) {
            const auto stem = std::filesystem::path(complete_output);
            auto with_suffix = [&](const std::string& suffix, const std::string& ext) {
                std::filesystem::path p = stem;
                p.replace_extension();
                return p.string() + suffix + ext;
            };
            write_xyz(with_suffix("_intermediate", ".xyz"),
                      cloud_from_tensor(pass.intermediate));
            std::ofstream mask(with_suffix("_control_mask", ".txt"));
            if (!mask) throw IoError("cannot write control mask");
            for (double label : pass.graph.labels)
                mask << static_cast<int>(label) << '\n';
        }
        std::cout << "wrote " << complete_output << "\n";
        return kExitOk;
    }

    if (deform_lsq->parsed()) {
        const PointCloud input = read_xyz(lsq_input);
        LsqSystem system;
        system.n = input.size();
        system.graph = knn(input, lsq_k);
        system.control_weight = lsq_weight;
        read_controls(lsq_controls, system.control_indices, system.control_targets);
        const PointCloud delta_cloud =
            lsq_delta_source.empty() ? input : read_xyz(lsq_delta_source);
        if (delta_cloud.size() != input.size())
            throw UsageError("delta source cloud must match the input size");
        system.target_laplacians = laplacian_coordinates(delta_cloud, system.graph);
        const PointCloud solution = lsq_solve(system);
        write_xyz(lsq_output, solution);
        std::cout << "wrote " << lsq_output << "\n";
        return kExitOk;
    }

    if (gradcheck->parsed()) {
        const auto results = run_gradient_checks(gc_tolerance, gc_n, gc_k, gc_seed);
        bool all_pass = true;
        for (const auto& r : results) {
            std::printf("%-18s max_rel_err %.3e  %s\n", r.block.c_str(), r.max_rel_error,
                        r.pass ? "PASS" : "FAIL");
            all_pass = all_pass && r.pass;
        }
        if (!all_pass) throw NumericError("gradient checks failed");
        return kExitOk;
    }

    return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    }
}
