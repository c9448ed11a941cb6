#include "lapcomplete/pipeline.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <thread>

namespace lapcomplete {

namespace {
using json = nlohmann::json;
namespace fs = std::filesystem;
}

// ---- model -----------------------------------------------------------------

CompletionModel CompletionModel::create(const RunConfig& config) {
    config.validate();
    CompletionModel m;
    m.config = config;
    Rng rng(mix_seed(static_cast<std::uint64_t>(config.seed), 0x1417ULL));
    m.encoder = EncoderParams(static_cast<int>(config.d_mid),
                              static_cast<int>(config.feature_dim), rng);
    m.encoder.pool = pool_kind_from_string(config.pool);
    m.encoder.seed_rule = fps_seed_rule_from_string(config.fps_seed_rule);
    m.decoder = DecoderParams(static_cast<int>(config.feature_dim),
                              static_cast<int>(config.c0), static_cast<int>(config.tree_depth),
                              static_cast<int>(config.leaf_patch), config.decoder_relu, rng);
    std::vector<int> widths;
    for (std::int64_t w : config.feature_widths) widths.push_back(static_cast<int>(w));
    m.features = LocalFeatureParams(widths, static_cast<int>(config.group_size), rng);
    const int gcn_input = m.features.feature_dim() + static_cast<int>(config.feature_dim) + 4;
    m.gcn = GcnParams(gcn_input, static_cast<int>(config.gcn_hidden),
                      static_cast<int>(config.gcn_layers), rng);
    return m;
}

std::vector<Parameter*> CompletionModel::parameters() {
    std::vector<Parameter*> out = generation_parameters();
    for (Parameter* p : deformation_parameters()) out.push_back(p);
    return out;
}

std::vector<Parameter*> CompletionModel::generation_parameters() {
    std::vector<Parameter*> out;
    encoder.collect(out);
    decoder.collect(out);
    return out;
}

std::vector<Parameter*> CompletionModel::deformation_parameters() {
    std::vector<Parameter*> out;
    features.collect(out);
    gcn.collect(out);
    return out;
}

std::vector<std::pair<std::string, std::vector<double>*>> CompletionModel::state_buffers() {
    std::vector<std::pair<std::string, std::vector<double>*>> out;
    for (int b = 0; b < 3; ++b) {
        auto& branch = features.branches[static_cast<std::size_t>(b)];
        for (std::size_t li = 0; li < branch.norms.size(); ++li) {
            const std::string base =
                "features.r" + std::to_string(b) + ".conv" + std::to_string(li) + ".bn";
            out.emplace_back(base + ".running_mean", &branch.norms[li].state.running_mean);
            out.emplace_back(base + ".running_var", &branch.norms[li].state.running_var);
        }
    }
    return out;
}

// ---- forward ------------------------------------------------------------------

ForwardPass run_forward(Tape& tape, CompletionModel& model, const PointCloud& input,
                        const ForwardOptions& options) {
    input.validate();
    const RunConfig& cfg = model.config;
    const int n_control = options.n_control_override.value_or(static_cast<int>(cfg.n_control));
    const int n_support = static_cast<int>(cfg.n_output) - n_control;
    if (n_control < 1 || n_support < 1)
        throw UsageError("forward: control count " + std::to_string(n_control) +
                         " incompatible with output size " + std::to_string(cfg.n_output));
    if (input.size() < std::max(8, n_control))
        throw UsageError("forward: input of size " + std::to_string(input.size()) +
                         " is smaller than max(8, n_control)");

    ForwardPass pass;
    Tensor code = encode(tape, input, model.encoder);
    pass.shape_code = tape.reshape(code, {1, static_cast<int>(cfg.feature_dim)});
    pass.intermediate = decode(tape, code, model.decoder, n_support);

    const int seed = fps_seed_for(input, model.encoder.seed_rule);
    pass.graph = build_graph(input, cloud_from_tensor(pass.intermediate), n_control,
                             static_cast<int>(cfg.knn_k), seed);

    std::vector<Vec3> controls(pass.graph.merged.points.begin(),
                               pass.graph.merged.points.begin() + n_control);
    pass.merged = tape.concat({tape.constant_like(controls), pass.intermediate}, 0);

    if (options.apply_deformation) {
        const double radius = cfg.radius_rel * input.bounding_box_diagonal();
        Tensor feats = local_features(tape, pass.graph, pass.merged, input, radius,
                                      model.features, options.training);
        pass.deformed =
            deform(tape, pass.graph, pass.merged, feats, pass.shape_code, model.gcn);
    } else {
        pass.deformed = pass.merged;
    }
    return pass;
}

LossTerms compute_losses(Tape& tape, CompletionModel& model, const ForwardPass& pass,
                         const PointCloud& ground_truth, double lambda) {
    ground_truth.validate();
    const RunConfig& cfg = model.config;
    Tensor gt = tape.constant_like(ground_truth.points);
    Tensor cd_i = chamfer_loss(tape, pass.intermediate, gt);
    Tensor cd_f = chamfer_loss(tape, pass.deformed, gt);

    const int n_control = pass.graph.control_count;
    std::vector<int> control_rows(static_cast<std::size_t>(n_control));
    for (int i = 0; i < n_control; ++i) control_rows[static_cast<std::size_t>(i)] = i;
    std::vector<Vec3> before(pass.graph.merged.points.begin(),
                             pass.graph.merged.points.begin() + n_control);
    Tensor match = matching_loss(tape, tape.constant_like(before),
                                 tape.gather(pass.deformed, control_rows));

    Tensor shape = shape_preserving_loss(tape, pass.graph.graph, pass.deformed,
                                         shape_loss_form_from_string(cfg.shape_loss));

    LossWeights weights;
    weights.alpha = cfg.alpha;
    weights.beta = cfg.beta;
    weights.lambda = lambda;
    weights.recons_scale = cfg.recons_scale;
    return total_loss(tape, cd_i, cd_f, match, shape, weights);
}

// ---- checkpoint ----------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'L', 'C', 'M', 'P'};
constexpr std::uint32_t kVersion = 1;

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_bytes(std::ofstream& out, const void* data, std::size_t bytes) {
    out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(bytes));
}

void put_string(std::ofstream& out, const std::string& s) {
    put(out, static_cast<std::uint32_t>(s.size()));
    put_bytes(out, s.data(), s.size());
}

void put_doubles(std::ofstream& out, const std::vector<double>& v) {
    put(out, static_cast<std::uint64_t>(v.size()));
    put_bytes(out, v.data(), v.size() * sizeof(double));
}

template <typename T>
T get(std::ifstream& in, const std::string& path) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!in) throw IoError("checkpoint '" + path + "': truncated");
    return v;
}

std::string get_string(std::ifstream& in, const std::string& path) {
    const auto len = get<std::uint32_t>(in, path);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw IoError("checkpoint '" + path + "': truncated string");
    return s;
}

std::vector<double> get_doubles(std::ifstream& in, const std::string& path) {
    const auto len = get<std::uint64_t>(in, path);
    std::vector<double> v(static_cast<std::size_t>(len));
    in.read(reinterpret_cast<char*>(v.data()),
            static_cast<std::streamsize>(len * sizeof(double)));
    if (!in) throw IoError("checkpoint '" + path + "': truncated data");
    return v;
}

}  // namespace

void save_checkpoint(const std::string& path, CompletionModel& model,
                     const AdamState* optimizer, std::int64_t epoch) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint '" + path + "' for writing");
    put_bytes(out, kMagic, 4);
    put(out, kVersion);
    put_string(out, model.config.to_toml());
    put(out, epoch);

    const std::vector<Parameter*> params = model.parameters();
    put(out, static_cast<std::uint32_t>(params.size()));
    for (Parameter* p : params) {
        put_string(out, p->name);
        put(out, static_cast<std::uint32_t>(p->shape.size()));
        for (int e : p->shape) put(out, static_cast<std::int32_t>(e));
        put_doubles(out, p->value);
    }

    const auto buffers = model.state_buffers();
    put(out, static_cast<std::uint32_t>(buffers.size()));
    for (const auto& [name, buf] : buffers) {
        put_string(out, name);
        put_doubles(out, *buf);
    }

    put(out, static_cast<std::uint8_t>(optimizer ? 1 : 0));
    if (optimizer) {
        put(out, optimizer->step_count);
        put(out, optimizer->config.lr);
        put(out, optimizer->config.beta1);
        put(out, optimizer->config.beta2);
        put(out, optimizer->config.eps);
        put(out, static_cast<std::uint32_t>(optimizer->m.size()));
        for (std::size_t i = 0; i < optimizer->m.size(); ++i) {
            put_doubles(out, optimizer->m[i]);
            put_doubles(out, optimizer->v[i]);
        }
    }
    if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw IoError("checkpoint '" + path + "': bad magic");
    const auto version = get<std::uint32_t>(in, path);
    if (version != kVersion)
        throw IoError("checkpoint '" + path + "': unsupported version " +
                      std::to_string(version));

    LoadedCheckpoint loaded;
    const std::string config_text = get_string(in, path);
    loaded.model = CompletionModel::create(RunConfig::from_toml(config_text));
    loaded.epoch = get<std::int64_t>(in, path);

    std::vector<Parameter*> params = loaded.model.parameters();
    const auto param_count = get<std::uint32_t>(in, path);
    if (param_count != params.size())
        throw IoError("checkpoint '" + path + "': parameter count mismatch");
    for (Parameter* p : params) {
        const std::string name = get_string(in, path);
        if (name != p->name)
            throw IoError("checkpoint '" + path + "': expected parameter '" + p->name +
                          "', found '" + name + "'");
        const auto rank = get<std::uint32_t>(in, path);
        Shape shape(rank);
        for (auto& e : shape) e = get<std::int32_t>(in, path);
        if (shape != p->shape)
            throw IoError("checkpoint '" + path + "': shape mismatch for '" + name + "'");
        std::vector<double> data = get_doubles(in, path);
        if (data.size() != p->value.size())
            throw IoError("checkpoint '" + path + "': data length mismatch for '" + name + "'");
        p->value = std::move(data);
    }

    const auto buffer_count = get<std::uint32_t>(in, path);
    auto buffers = loaded.model.state_buffers();
    if (buffer_count != buffers.size())
        throw IoError("checkpoint '" + path + "': state buffer count mismatch");
    for (auto& [name, buf] : buffers) {
        const std::string found = get_string(in, path);
        if (found != name)
            throw IoError("checkpoint '" + path + "': expected buffer '" + name +
                          "', found '" + found + "'");
        std::vector<double> data = get_doubles(in, path);
        if (data.size() != buf->size())
            throw IoError("checkpoint '" + path + "': buffer length mismatch for '" + name + "'");
        *buf = std::move(data);
    }

    if (get<std::uint8_t>(in, path)) {
        AdamState state;
        state.step_count = get<std::int64_t>(in, path);
        state.config.lr = get<double>(in, path);
        state.config.beta1 = get<double>(in, path);
        state.config.beta2 = get<double>(in, path);
        state.config.eps = get<double>(in, path);
        const auto n = get<std::uint32_t>(in, path);
        for (std::uint32_t i = 0; i < n; ++i) {
            state.m.push_back(get_doubles(in, path));
            state.v.push_back(get_doubles(in, path));
        }
        loaded.optimizer = std::move(state);
    }
    return loaded;
}

// ---- data ---------------------------------------------------------------------

std::vector<LoadedSample> load_split(const std::string& data_dir, const std::string& split) {
    if (split != "train" && split != "val" && split != "test")
        throw UsageError("unknown split '" + split + "' (train|val|test)");
    const std::string manifest = (fs::path(data_dir) / (split + ".json")).string();
    std::vector<LoadedSample> samples;
    for (const ManifestEntry& e : read_manifest(manifest)) {
        LoadedSample s;
        s.partial = read_xyz(e.partial_path);
        s.complete = read_xyz(e.complete_path);
        s.label = e.label;
        samples.push_back(std::move(s));
    }
    if (samples.empty()) throw UsageError("split '" + split + "' is empty");
    return samples;
}

// ---- shared helpers ---------------------------------------------------------

namespace {

// Run fn(i) for i in [0, n) across up to `threads` workers. Results must be
// written to per-index slots so the merge order stays fixed.
void parallel_for(int n, int threads, const std::function<void(int)>& fn) {
    const int t = std::max(1, std::min(threads, n));
    if (t == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(t));
    for (int w = 0; w < t; ++w) {
        pool.emplace_back([&, w]() {
            try {
                for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

PointCloud random_resample(const PointCloud& cloud, int n_out, std::uint64_t seed) {
    Rng rng(seed);
    PointCloud out;
    out.points.reserve(static_cast<std::size_t>(n_out));
    if (n_out <= cloud.size()) {
        // sample without replacement via partial Fisher-Yates
        std::vector<int> order(static_cast<std::size_t>(cloud.size()));
        for (int i = 0; i < cloud.size(); ++i) order[static_cast<std::size_t>(i)] = i;
        for (int i = 0; i < n_out; ++i) {
            const int j = i + static_cast<int>(rng.below(
                                  static_cast<std::uint64_t>(cloud.size() - i)));
            std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
            out.points.push_back(cloud[order[static_cast<std::size_t>(i)]]);
        }
    } else {
        for (int i = 0; i < n_out; ++i)
            out.points.push_back(cloud[static_cast<int>(rng.below(
                static_cast<std::uint64_t>(cloud.size())))]);
    }
    return out;
}

PointCloud fps_resample(const PointCloud& cloud, int n_out) {
    if (n_out >= cloud.size()) return cloud;
    PointCloud out;
    out.points.reserve(static_cast<std::size_t>(n_out));
    for (int idx : fps(cloud, n_out, lexicographic_min_index(cloud)))
        out.points.push_back(cloud[idx]);
    return out;
}

double eval_forward_cd(CompletionModel& model, const PointCloud& input,
                       const PointCloud& gt, const ForwardOptions& options) {
    Tape tape;
    ForwardPass pass = run_forward(tape, model, input, options);
    return chamfer_distance(cloud_from_tensor(pass.deformed), gt);
}

}  // namespace

double validation_cd(CompletionModel& model, const std::vector<LoadedSample>& samples,
                     int threads) {
    std::vector<double> cds(samples.size(), 0.0);
    ForwardOptions options;
    parallel_for(static_cast<int>(samples.size()), threads, [&](int i) {
        const LoadedSample& s = samples[static_cast<std::size_t>(i)];
        cds[static_cast<std::size_t>(i)] = eval_forward_cd(model, s.partial, s.complete, options);
    });
    double acc = 0.0;
    for (double c : cds) acc += c;
    return acc / static_cast<double>(samples.size());
}

// ---- training --------------------------------------------------------------

namespace {

struct SampleResult {
    GradMap grads;
    LossReport report;
    std::vector<BnPendingUpdate> bn_updates;
};

json report_row(std::int64_t epoch, std::int64_t step, double lambda,
                const LossReport& r) {
    return json{{"epoch", epoch},          {"step", step},
                {"lambda", lambda},        {"cd_intermediate", r.cd_intermediate},
                {"cd_final", r.cd_final},  {"match", r.match},
                {"shape", r.shape},        {"total", r.total}};
}

}  // namespace

TrainOutcome train_model(const RunConfig& config, const TrainOptions& options) {
    config.validate();
    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec) throw IoError("cannot create output directory '" + config.out_dir + "'");

    const std::vector<LoadedSample> train_set = load_split(config.data_dir, "train");
    const std::vector<LoadedSample> val_set = load_split(config.data_dir, "val");

    CompletionModel model = CompletionModel::create(config);
    if (!options.init_from.empty()) {
        LoadedCheckpoint loaded = load_checkpoint(options.init_from);
        // adopt weights, keep this run's config
        std::vector<Parameter*> dst = model.parameters();
        std::vector<Parameter*> src = loaded.model.parameters();
        if (dst.size() != src.size())
            throw UsageError("init_from checkpoint has a different parameter set");
        for (std::size_t i = 0; i < dst.size(); ++i) {
            if (dst[i]->name != src[i]->name || dst[i]->shape != src[i]->shape)
                throw UsageError("init_from parameter mismatch at '" + dst[i]->name + "'");
            dst[i]->value = src[i]->value;
        }
        auto dstb = model.state_buffers();
        auto srcb = loaded.model.state_buffers();
        for (std::size_t i = 0; i < dstb.size(); ++i) *dstb[i].second = *srcb[i].second;
    }

    std::vector<Parameter*> trainable =
        options.freeze_generation ? model.deformation_parameters() : model.parameters();
    AdamConfig adam_config;
    adam_config.lr = config.lr;
    Adam adam(trainable, adam_config);

    const std::string log_path = (fs::path(config.out_dir) / "train_log.jsonl").string();
    const std::string val_log_path = (fs::path(config.out_dir) / "val_log.jsonl").string();
    const std::string best_path = (fs::path(config.out_dir) / "best.ckpt").string();
    const std::string last_path = (fs::path(config.out_dir) / "last.ckpt").string();
    std::ofstream log(log_path);
    std::ofstream val_log(val_log_path);
    if (!log || !val_log) throw IoError("cannot open run logs under '" + config.out_dir + "'");
    {
        std::ofstream cfg_out((fs::path(config.out_dir) / "config.toml").string());
        cfg_out << config.to_toml();
    }

    TrainOutcome outcome;
    outcome.best_checkpoint = best_path;
    outcome.last_checkpoint = last_path;
    outcome.log_path = log_path;

    const int threads = static_cast<int>(config.threads);
    outcome.initial_val_cd = validation_cd(model, val_set, threads);
    outcome.best_val_cd = outcome.initial_val_cd;
    val_log << json{{"epoch", 0}, {"val_cd", outcome.initial_val_cd}}.dump() << '\n';
    save_checkpoint(best_path, model, &adam.state(), 0);
    save_checkpoint(last_path, model, &adam.state(), 0);

    std::vector<int> order(train_set.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    Rng shuffle_rng(mix_seed(static_cast<std::uint64_t>(config.seed), 0x7a17ULL));

    std::int64_t step = 0;
    for (std::int64_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double lambda =
            epoch < config.phase_switch_epoch ? config.lambda_phase1 : config.lambda_phase2;
        shuffle(order, shuffle_rng);
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end =
                std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            const int batch_n = static_cast<int>(end - start);
            std::vector<SampleResult> results(static_cast<std::size_t>(batch_n));
            parallel_for(batch_n, threads, [&](int bi) {
                const LoadedSample& sample =
                    train_set[static_cast<std::size_t>(order[start + static_cast<std::size_t>(bi)])];
                Tape tape;
                ForwardOptions fwd;
                fwd.training = true;
                ForwardPass pass = run_forward(tape, model, sample.partial, fwd);
                LossTerms terms = compute_losses(tape, model, pass, sample.complete, lambda);
                SampleResult& r = results[static_cast<std::size_t>(bi)];
                LossWeights w;
                w.alpha = config.alpha;
                w.beta = config.beta;
                w.lambda = lambda;
                w.recons_scale = config.recons_scale;
                r.report = terms.report(w);
                r.grads = tape.backward(terms.total);
                r.bn_updates = tape.bn_updates();
            });

            // merge in sample order: batch-mean gradients and loss reports,
            // then the batch-norm running updates
            GradMap mean_grads;
            LossReport mean_report;
            for (int bi = 0; bi < batch_n; ++bi) {
                const SampleResult& r = results[static_cast<std::size_t>(bi)];
                for (const auto& [param, grad] : r.grads) {
                    auto [it, fresh] = mean_grads.try_emplace(param, grad.size(), 0.0);
                    for (std::size_t j = 0; j < grad.size(); ++j) it->second[j] += grad[j];
                }
                mean_report.cd_intermediate += r.report.cd_intermediate;
                mean_report.cd_final += r.report.cd_final;
                mean_report.match += r.report.match;
                mean_report.shape += r.report.shape;
                mean_report.total += r.report.total;
            }
            const double inv = 1.0 / batch_n;
            for (auto& [param, grad] : mean_grads)
                for (double& g : grad) g *= inv;
            mean_report.cd_intermediate *= inv;
            mean_report.cd_final *= inv;
            mean_report.match *= inv;
            mean_report.shape *= inv;
            mean_report.total *= inv;
            for (int bi = 0; bi < batch_n; ++bi)
                Tape::apply_bn_updates(results[static_cast<std::size_t>(bi)].bn_updates);

            if (!std::isfinite(mean_report.total))
                throw NumericError("training diverged: non-finite loss at epoch " +
                                   std::to_string(epoch) + ", step " + std::to_string(step) +
                                   "; last good checkpoint: " + last_path);

            adam.step(mean_grads);
            log << report_row(epoch, step, lambda, mean_report).dump() << '\n';
            ++step;
        }

        const double val_cd = validation_cd(model, val_set, threads);
        val_log << json{{"epoch", epoch + 1}, {"val_cd", val_cd}}.dump() << '\n';
        save_checkpoint(last_path, model, &adam.state(), epoch + 1);
        if (val_cd < outcome.best_val_cd) {
            outcome.best_val_cd = val_cd;
            save_checkpoint(best_path, model, &adam.state(), epoch + 1);
        }
        outcome.final_val_cd = val_cd;
        if (options.progress)
            (*options.progress) << "epoch " << (epoch + 1) << "/" << config.epochs
                                << " lambda=" << lambda << " val_cd=" << val_cd << "\n";
    }
    outcome.steps = step;
    return outcome;
}

// ---- evaluation -----------------------------------------------------------------

EvalResult evaluate_model(CompletionModel& model, const EvalOptions& options,
                          const std::vector<LoadedSample>& samples, int threads) {
    if (samples.empty()) throw UsageError("evaluation split is empty");
    if (options.sampling != "random" && options.sampling != "fps")
        throw UsageError("unknown sampling '" + options.sampling + "' (random|fps)");
    const int runs = static_cast<int>(model.config.eval_runs);

    struct Accum {
        double cd = 0, dg = 0, gd = 0;
        int count = 0;
    };
    std::map<std::string, Accum> by_label;
    Accum overall;

    ForwardOptions fwd;
    fwd.apply_deformation = options.apply_deformation;
    fwd.n_control_override = options.n_control_override;

    std::vector<std::array<double, 3>> per_sample(samples.size());
    for (int run = 0; run < runs; ++run) {
        parallel_for(static_cast<int>(samples.size()), threads, [&](int si) {
            const LoadedSample& s = samples[static_cast<std::size_t>(si)];
            const int target =
                options.input_size > 0 ? options.input_size : s.partial.size();
            PointCloud input;
            if (options.sampling == "fps") {
                input = fps_resample(s.partial, target);
            } else {
                const std::uint64_t seed = mix_seed(
                    mix_seed(static_cast<std::uint64_t>(model.config.seed), 0xE7A1ULL),
                    static_cast<std::uint64_t>(run) * 1000003ULL +
                        static_cast<std::uint64_t>(si));
                input = random_resample(s.partial, target, seed);
            }
            Tape tape;
            ForwardPass pass = run_forward(tape, model, input, fwd);
            const PointCloud out = cloud_from_tensor(pass.deformed);
            auto [dg, gd] = chamfer_terms(out, s.complete);
            per_sample[static_cast<std::size_t>(si)] = {dg + gd, dg, gd};
        });
        for (std::size_t si = 0; si < samples.size(); ++si) {
            Accum& a = by_label[samples[si].label];
            a.cd += per_sample[si][0];
            a.dg += per_sample[si][1];
            a.gd += per_sample[si][2];
            a.count += 1;
            overall.cd += per_sample[si][0];
            overall.dg += per_sample[si][1];
            overall.gd += per_sample[si][2];
            overall.count += 1;
        }
    }

    EvalResult result;
    result.runs = runs;
    for (const auto& [label, a] : by_label) {
        EvalRow row;
        row.label = label;
        row.count = a.count;
        row.cd = a.cd / a.count;
        row.cd_dg = a.dg / a.count;
        row.cd_gd = a.gd / a.count;
        result.per_kind.push_back(row);
    }
    result.average.label = "average";
    result.average.count = overall.count;
    result.average.cd = overall.cd / overall.count;
    result.average.cd_dg = overall.dg / overall.count;
    result.average.cd_gd = overall.gd / overall.count;
    return result;
}

}  // namespace lapcomplete
