#include "lapcomplete/config.hpp"

#include <cctype>
#include <charconv>
#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace lapcomplete {
namespace toml_lite {

namespace {

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(int line, const std::string& msg) {
    throw IoError("config line " + std::to_string(line) + ": " + msg);
}

bool parse_int(const std::string& s, std::int64_t& out) {
    const char* b = s.data();
    const char* e = b + s.size();
    auto [p, ec] = std::from_chars(b, e, out);
    return ec == std::errc() && p == e;
}

bool parse_float(const std::string& s, double& out) {
    try {
        std::size_t used = 0;
        out = std::stod(s, &used);
        return used == s.size();
    } catch (...) {
        return false;
    }
}

Value parse_scalar(const std::string& raw, int line) {
    if (raw.empty()) fail(line, "missing value");
    if (raw.front() == '"') {
        if (raw.size() < 2 || raw.back() != '"')
            fail(line, "unterminated string " + raw);
        return raw.substr(1, raw.size() - 2);
    }
    if (raw == "true") return true;
    if (raw == "false") return false;
    std::int64_t i = 0;
    if (parse_int(raw, i)) return i;
    double d = 0.0;
    if (parse_float(raw, d)) return d;
    fail(line, "cannot parse value '" + raw + "'");
}

}  // namespace

Table parse(const std::string& text) {
    Table table;
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        // strip comments outside of strings
        bool in_string = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"') in_string = !in_string;
            if (line[i] == '#' && !in_string) {
                line.resize(i);
                break;
            }
        }
        const std::string body = trim(line);
        if (body.empty()) continue;
        const std::size_t eq = body.find('=');
        if (eq == std::string::npos) fail(line_no, "expected 'key = value'");
        const std::string key = trim(body.substr(0, eq));
        const std::string raw = trim(body.substr(eq + 1));
        if (key.empty()) fail(line_no, "empty key");
        if (table.count(key)) fail(line_no, "duplicate key '" + key + "'");
        if (!raw.empty() && raw.front() == '[') {
            if (raw.back() != ']') fail(line_no, "unterminated array");
            std::vector<std::int64_t> values;
            std::string inner = raw.substr(1, raw.size() - 2);
            std::istringstream items(inner);
            std::string item;
            while (std::getline(items, item, ',')) {
                const std::string v = trim(item);
                if (v.empty()) fail(line_no, "empty array element");
                std::int64_t parsed = 0;
                if (!parse_int(v, parsed))
                    fail(line_no, "array element '" + v + "' is not an integer");
                values.push_back(parsed);
            }
            table[key] = std::move(values);
        } else {
            table[key] = parse_scalar(raw, line_no);
        }
    }
    return table;
}

Table parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config '" + path + "'");
    std::ostringstream buffer;
    buffer << in.rdbuf();
    try {
        return parse(buffer.str());
    } catch (const IoError& e) {
        throw IoError(std::string(e.what()) + " (in " + path + ")");
    }
}

std::string serialize(const Table& table) {
    std::ostringstream out;
    char buf[64];
    for (const auto& [key, value] : table) {
        out << key << " = ";
        if (const auto* i = std::get_if<std::int64_t>(&value)) {
            out << *i;
        } else if (const auto* d = std::get_if<double>(&value)) {
            std::snprintf(buf, sizeof buf, "%.17g", *d);
            std::string s = buf;
            // keep floats recognizable as floats
            if (s.find('.') == std::string::npos && s.find('e') == std::string::npos &&
                s.find("inf") == std::string::npos && s.find("nan") == std::string::npos)
                s += ".0";
            out << s;
        } else if (const auto* b = std::get_if<bool>(&value)) {
            out << (*b ? "true" : "false");
        } else if (const auto* s = std::get_if<std::string>(&value)) {
            out << '"' << *s << '"';
        } else if (const auto* v = std::get_if<std::vector<std::int64_t>>(&value)) {
            out << '[';
            for (std::size_t i = 0; i < v->size(); ++i) {
                if (i) out << ", ";
                out << (*v)[i];
            }
            out << ']';
        }
        out << '\n';
    }
    return out.str();
}

}  // namespace toml_lite

void RunConfig::validate() const {
    if (n_control + n_support() != n_output)
        throw UsageError("config: n_control + n_support must equal n_output");
    if (n_control > n_input)
        throw UsageError("config: n_control = " + std::to_string(n_control) +
                         " exceeds n_input = " + std::to_string(n_input));
    if (n_control < 1 || n_support() < 1)
        throw UsageError("config: need n_control >= 1 and n_control < n_output");
    if (knn_k < 1 || knn_k >= n_output)
        throw UsageError("config: knn_k must satisfy 1 <= k < n_output");
    if (!(radius_rel > 0.0)) throw UsageError("config: radius_rel must be > 0");
    if (group_size < 1) throw UsageError("config: group_size must be >= 1");
    if (feature_widths.empty()) throw UsageError("config: feature_widths is empty");
    if (gcn_layers < 2 || gcn_layers % 2 != 0)
        throw UsageError("config: gcn_layers must be even and >= 2");
    if (batch_size < 1) throw UsageError("config: batch_size must be >= 1");
    if (epochs < 1) throw UsageError("config: epochs must be >= 1");
    if (phase_switch_epoch < 0 || phase_switch_epoch > epochs)
        throw UsageError("config: phase_switch_epoch must lie in [0, epochs]");
    if (threads < 1) throw UsageError("config: threads must be >= 1");
    if (eval_runs < 1) throw UsageError("config: eval_runs must be >= 1");
    if (alpha < 0 || beta < 0 || lambda_phase1 < 0 || lambda_phase2 < 0 || recons_scale < 0)
        throw UsageError("config: loss weights must be >= 0");
    if (samples < 1) throw UsageError("config: samples must be >= 1");
    if (n_input < 8) throw UsageError("config: n_input must be >= 8");
    if (gt_size < 1) throw UsageError("config: gt_size must be >= 1");
}

toml_lite::Table RunConfig::to_table() const {
    toml_lite::Table t;
    t["data_dir"] = data_dir;
    t["out_dir"] = out_dir;
    t["samples"] = samples;
    t["gt_size"] = gt_size;
    t["keep_fraction"] = keep_fraction;
    t["val_fraction"] = val_fraction;
    t["test_fraction"] = test_fraction;
    t["n_input"] = n_input;
    t["n_output"] = n_output;
    t["n_control"] = n_control;
    t["knn_k"] = knn_k;
    t["radius_rel"] = radius_rel;
    t["group_size"] = group_size;
    t["feature_widths"] = feature_widths;
    t["d_mid"] = d_mid;
    t["feature_dim"] = feature_dim;
    t["c0"] = c0;
    t["tree_depth"] = tree_depth;
    t["leaf_patch"] = leaf_patch;
    t["gcn_layers"] = gcn_layers;
    t["gcn_hidden"] = gcn_hidden;
    t["pool"] = pool;
    t["fps_seed_rule"] = fps_seed_rule;
    t["decoder_relu"] = decoder_relu;
    t["alpha"] = alpha;
    t["beta"] = beta;
    t["lambda_phase1"] = lambda_phase1;
    t["lambda_phase2"] = lambda_phase2;
    t["recons_scale"] = recons_scale;
    t["shape_loss"] = shape_loss;
    t["lr"] = lr;
    t["batch_size"] = batch_size;
    t["epochs"] = epochs;
    t["phase_switch_epoch"] = phase_switch_epoch;
    t["seed"] = seed;
    t["threads"] = threads;
    t["eval_runs"] = eval_runs;
    return t;
}

namespace {

template <typename T>
void read_key(const toml_lite::Table& t, const std::string& key, T& out) {
    auto it = t.find(key);
    if (it == t.end()) return;
    if constexpr (std::is_same_v<T, double>) {
        // integers promote to floats
        if (const auto* i = std::get_if<std::int64_t>(&it->second)) {
            out = static_cast<double>(*i);
            return;
        }
    }
    const T* v = std::get_if<T>(&it->second);
    if (!v) throw UsageError("config key '" + key + "' has the wrong type");
    out = *v;
}

}  // namespace

RunConfig RunConfig::from_table(const toml_lite::Table& table) {
    RunConfig c;
    const toml_lite::Table known = c.to_table();
    for (const auto& [key, value] : table)
        if (!known.count(key)) throw UsageError("unknown config key '" + key + "'");
    read_key(table, "data_dir", c.data_dir);
    read_key(table, "out_dir", c.out_dir);
    read_key(table, "samples", c.samples);
    read_key(table, "gt_size", c.gt_size);
    read_key(table, "keep_fraction", c.keep_fraction);
    read_key(table, "val_fraction", c.val_fraction);
    read_key(table, "test_fraction", c.test_fraction);
    read_key(table, "n_input", c.n_input);
    read_key(table, "n_output", c.n_output);
    read_key(table, "n_control", c.n_control);
    read_key(table, "knn_k", c.knn_k);
    read_key(table, "radius_rel", c.radius_rel);
    read_key(table, "group_size", c.group_size);
    read_key(table, "feature_widths", c.feature_widths);
    read_key(table, "d_mid", c.d_mid);
    read_key(table, "feature_dim", c.feature_dim);
    read_key(table, "c0", c.c0);
    read_key(table, "tree_depth", c.tree_depth);
    read_key(table, "leaf_patch", c.leaf_patch);
    read_key(table, "gcn_layers", c.gcn_layers);
    read_key(table, "gcn_hidden", c.gcn_hidden);
    read_key(table, "pool", c.pool);
    read_key(table, "fps_seed_rule", c.fps_seed_rule);
    read_key(table, "decoder_relu", c.decoder_relu);
    read_key(table, "alpha", c.alpha);
    read_key(table, "beta", c.beta);
    read_key(table, "lambda_phase1", c.lambda_phase1);
    read_key(table, "lambda_phase2", c.lambda_phase2);
    read_key(table, "recons_scale", c.recons_scale);
    read_key(table, "shape_loss", c.shape_loss);
    read_key(table, "lr", c.lr);
    read_key(table, "batch_size", c.batch_size);
    read_key(table, "epochs", c.epochs);
    read_key(table, "phase_switch_epoch", c.phase_switch_epoch);
    read_key(table, "seed", c.seed);
    read_key(table, "threads", c.threads);
    read_key(table, "eval_runs", c.eval_runs);
    return c;
}

}  // namespace lapcomplete
