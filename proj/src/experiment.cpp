#include "ttnmtl/experiment.hpp"

#include "ttnmtl/errors.hpp"

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numeric>
#include <sstream>
#include <thread>

namespace ttnmtl {

using nlohmann::json;

void ExperimentConfig::validate() const {
    if (methods.empty()) throw InvalidArgument("no methods to run");
    if (repeats < 1) throw InvalidArgument("repeats must be >= 1");
    if (threads < 1) throw InvalidArgument("threads must be >= 1");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw InvalidArgument("train_fraction must lie in (0, 1)");
    if (data.file && data.pgm_dir) throw InvalidArgument("data: give either file or pgm_dir, not both");
    if (!data.file && !data.pgm_dir) data.synth.validate();
    train.validate();
}

namespace {

// Typed accessors that report the dotted key path on failure.
class Reader {
public:
    Reader(const json& obj, std::string path) : obj_(obj), path_(std::move(path)) {
        if (!obj_.is_object()) throw ParseError(where() + " must be a JSON object");
    }

    void allow(std::initializer_list<std::string_view> keys) const {
        for (const auto& [key, value] : obj_.items())
            if (std::find(keys.begin(), keys.end(), key) == keys.end())
                throw ParseError("unknown key '" + child(key) + "'");
    }

    bool has(const std::string& key) const { return obj_.contains(key); }
    const json& raw(const std::string& key) const { return obj_.at(key); }
    std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

    double number(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        if (!raw(key).is_number()) throw ParseError("'" + child(key) + "' must be a number");
        return raw(key).get<double>();
    }

    std::uint64_t count(const std::string& key, std::uint64_t fallback) const {
        if (!has(key)) return fallback;
        if (!raw(key).is_number_unsigned()) throw ParseError("'" + child(key) + "' must be a nonnegative integer");
        return raw(key).get<std::uint64_t>();
    }

    std::string text(const std::string& key) const {
        if (!raw(key).is_string()) throw ParseError("'" + child(key) + "' must be a string");
        return raw(key).get<std::string>();
    }

    bool flag(const std::string& key) const {
        if (!raw(key).is_boolean()) throw ParseError("'" + child(key) + "' must be true or false");
        return raw(key).get<bool>();
    }

private:
    std::string where() const { return path_.empty() ? "configuration" : "'" + path_ + "'"; }
    const json& obj_;
    std::string path_;
};

SynthConfig parse_synth(const json& j) {
    Reader r(j, "data.synthetic");
    r.allow({"tasks", "classes", "side", "sharedness", "examples_per_class", "noise", "template_low", "template_high",
             "seed"});
    SynthConfig s;
    s.tasks = r.count("tasks", s.tasks);
    s.classes = r.count("classes", s.classes);
    s.side = r.count("side", s.side);
    s.sharedness = r.number("sharedness", s.sharedness);
    s.examples_per_class = r.count("examples_per_class", s.examples_per_class);
    s.noise = r.number("noise", s.noise);
    s.template_low = r.number("template_low", s.template_low);
    s.template_high = r.number("template_high", s.template_high);
    s.seed = r.count("seed", s.seed);
    return s;
}

DataSource parse_data(const json& j) {
    Reader r(j, "data");
    r.allow({"file", "pgm_dir", "synthetic"});
    DataSource d;
    if (r.has("file")) d.file = r.text("file");
    if (r.has("pgm_dir")) d.pgm_dir = r.text("pgm_dir");
    if (r.has("synthetic")) {
        if (d.file || d.pgm_dir) throw ParseError("'data' must name exactly one of file, pgm_dir, synthetic");
        d.synth = parse_synth(r.raw("synthetic"));
    }
    return d;
}

std::vector<LayerSpec> parse_architecture(const std::string& name) {
    if (name == "small") return small_body();
    if (name == "omniglot") return omniglot_body();
    throw ParseError("'architecture' must be \"small\" or \"omniglot\", got \"" + name + "\"");
}

LayerOverride parse_override(const json& j, std::size_t index) {
    Reader r(j, "layers[" + std::to_string(index) + "]");
    r.allow({"layer", "shareable", "gammas"});
    if (!r.has("layer")) throw ParseError("'" + r.child("layer") + "' is required");
    const auto layer = r.count("layer", 0);
    if (layer < 1) throw ParseError("'" + r.child("layer") + "' is 1-based and must be >= 1");
    LayerOverride o;
    o.layer = layer - 1;
    if (r.has("shareable")) o.shareable = r.flag("shareable");
    if (r.has("gammas")) {
        const json& g = r.raw("gammas");
        if (!g.is_array()) throw ParseError("'" + r.child("gammas") + "' must be an array of numbers");
        std::vector<double> gammas;
        for (const auto& v : g) {
            if (!v.is_number()) throw ParseError("'" + r.child("gammas") + "' must be an array of numbers");
            gammas.push_back(v.get<double>());
        }
        o.gammas = std::move(gammas);
    }
    return o;
}

} // namespace

ExperimentConfig parse_experiment_config(std::string_view json_text) {
    json root;
    try {
        root = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("configuration is not valid JSON: ") + e.what());
    }
    Reader r(root, "");
    r.allow({"data", "method", "methods", "gamma", "learning_rate", "batch_size", "epochs", "architecture", "layers",
             "train_fraction", "repeats", "seed", "threads", "output_dir"});

    ExperimentConfig cfg;
    if (r.has("data")) cfg.data = parse_data(r.raw("data"));
    if (r.has("method") && r.has("methods")) throw ParseError("give either 'method' or 'methods', not both");
    auto method = [](const std::string& name, const std::string& key) {
        try {
            return parse_method(name);
        } catch (const InvalidArgument& e) {
            throw ParseError("'" + key + "': " + e.what());
        }
    };
    if (r.has("method")) cfg.methods = {method(r.text("method"), "method")};
    if (r.has("methods")) {
        const json& m = r.raw("methods");
        if (!m.is_array() || m.empty()) throw ParseError("'methods' must be a non-empty array of method names");
        cfg.methods.clear();
        for (const auto& v : m) {
            if (!v.is_string()) throw ParseError("'methods' must be a non-empty array of method names");
            cfg.methods.push_back(method(v.get<std::string>(), "methods"));
        }
    }
    cfg.train.gamma_default = r.number("gamma", cfg.train.gamma_default);
    cfg.train.learning_rate = r.number("learning_rate", cfg.train.learning_rate);
    cfg.train.batch_size = r.count("batch_size", cfg.train.batch_size);
    cfg.train.epochs = r.count("epochs", cfg.train.epochs);
    if (r.has("architecture")) cfg.train.body = parse_architecture(r.text("architecture"));
    if (r.has("layers")) {
        const json& layers = r.raw("layers");
        if (!layers.is_array()) throw ParseError("'layers' must be an array of layer overrides");
        for (std::size_t i = 0; i < layers.size(); ++i) cfg.train.overrides.push_back(parse_override(layers[i], i));
    }
    cfg.train_fraction = r.number("train_fraction", cfg.train_fraction);
    cfg.repeats = r.count("repeats", cfg.repeats);
    cfg.seed = r.count("seed", cfg.seed);
    cfg.threads = r.count("threads", cfg.threads);
    if (r.has("output_dir")) cfg.output_dir = r.text("output_dir");

    try {
        cfg.validate();
    } catch (const InvalidArgument& e) {
        throw ParseError(std::string("invalid configuration: ") + e.what());
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read configuration " + path.string());
    std::stringstream buffer;
    buffer << in.rdbuf();
    ExperimentConfig cfg;
    try {
        cfg = parse_experiment_config(buffer.str());
    } catch (const ParseError& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    // Relative paths inside the file are relative to the file itself.
    const auto base = path.parent_path();
    auto anchor = [&](std::filesystem::path& p) {
        if (p.is_relative()) p = base / p;
    };
    if (cfg.data.file) anchor(*cfg.data.file);
    if (cfg.data.pgm_dir) anchor(*cfg.data.pgm_dir);
    anchor(cfg.output_dir);
    return cfg;
}

MultiTaskDataset load_data(const DataSource& source) {
    if (source.file) return load_dataset(*source.file);
    if (source.pgm_dir) return import_pgm_tree(*source.pgm_dir);
    return synth_tasks(source.synth);
}

double RunOutcome::final_test_acc() const {
    if (log.evals.empty()) throw InvalidState("run has no evaluations");
    const auto& acc = log.evals.back().test_acc;
    return std::accumulate(acc.begin(), acc.end(), 0.0) / static_cast<double>(acc.size());
}

double RunOutcome::final_train_ce() const {
    if (log.evals.empty()) throw InvalidState("run has no evaluations");
    const auto& ce = log.evals.back().train_ce;
    return std::accumulate(ce.begin(), ce.end(), 0.0) / static_cast<double>(ce.size());
}

bool ExperimentResult::any_failure() const {
    return std::any_of(runs.begin(), runs.end(), [](const RunOutcome& r) { return r.failure.has_value(); });
}

std::size_t worker_count(std::size_t requested) {
    std::size_t n = std::max<std::size_t>(1, requested);
    if (const char* env = std::getenv("TTNMTL_THREADS")) {
        std::size_t cap = 0;
        const std::string_view s(env);
        const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), cap);
        if (ec == std::errc() && ptr == s.data() + s.size() && cap >= 1) n = std::min(n, cap);
    }
    return n;
}

std::string format_double(double v) {
    char buf[32];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

void write_metrics_csv(std::ostream& out, const MetricsLog& log) {
    out << "step,task,train_ce,norm_laf,norm_tucker,norm_tt,test_acc\n";
    std::size_t next_eval = 0;
    auto eval_rows = [&](const EvalRecord& e) {
        for (std::size_t t = 0; t < log.task_count; ++t)
            out << e.step << ',' << t << ',' << format_double(e.train_ce[t]) << ','
                << format_double(e.norm_totals[0]) << ',' << format_double(e.norm_totals[1]) << ','
                << format_double(e.norm_totals[2]) << ',' << format_double(e.test_acc[t]) << '\n';
    };
    if (!log.evals.empty() && log.evals.front().step == 0) eval_rows(log.evals[next_eval++]);
    for (const auto& s : log.steps) {
        if (next_eval < log.evals.size() && log.evals[next_eval].step == s.step) {
            eval_rows(log.evals[next_eval++]);
            continue;
        }
        for (std::size_t t = 0; t < log.task_count; ++t)
            out << s.step << ',' << t << ',' << format_double(s.train_ce[t]) << ",,,,\n";
    }
}

namespace {

struct MeanStd {
    double mean = 0.0, stddev = 0.0;
};

// Sample standard deviation (n - 1); zero for a single value.
MeanStd mean_std(const std::vector<double>& xs) {
    MeanStd m;
    if (xs.empty()) return m;
    m.mean = std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
    if (xs.size() > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - m.mean) * (x - m.mean);
        m.stddev = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    }
    return m;
}

} // namespace

void write_summary_csv(std::ostream& out, const ExperimentResult& result) {
    out << "method,repeat,seed,test_acc,train_ce,status\n";
    std::vector<Method> order;
    for (const auto& r : result.runs)
        if (std::find(order.begin(), order.end(), r.method) == order.end()) order.push_back(r.method);
    for (auto method : order) {
        std::vector<double> acc, ce;
        for (const auto& r : result.runs) {
            if (r.method != method) continue;
            out << to_string(method) << ',' << r.repeat << ',' << r.seed << ',';
            if (r.failure || r.log.evals.empty()) {
                out << ",,diverged\n";
                continue;
            }
            acc.push_back(r.final_test_acc());
            ce.push_back(r.final_train_ce());
            out << format_double(acc.back()) << ',' << format_double(ce.back()) << ",ok\n";
        }
        const auto a = mean_std(acc), c = mean_std(ce);
        out << to_string(method) << ",mean,," << format_double(a.mean) << ',' << format_double(c.mean) << ','
            << acc.size() << " ok\n";
        out << to_string(method) << ",stddev,," << format_double(a.stddev) << ',' << format_double(c.stddev) << ','
            << acc.size() << " ok\n";
    }
}

void write_sharing_csv(std::ostream& out, const ExperimentResult& result) {
    out << "method,repeat,layer,kind,initial,final,sharing_strength\n";
    for (const auto& r : result.runs) {
        if (r.log.evals.empty()) continue;
        for (std::size_t i = 0; i < r.log.shared_layers.size(); ++i)
            for (std::size_t k = 0; k < kAllNormKinds.size(); ++k) {
                const double initial = r.log.evals.front().layer_norms[i][k];
                const double final_norm = r.log.evals.back().layer_norms[i][k];
                out << to_string(r.method) << ',' << r.repeat << ',' << r.log.shared_layers[i] + 1 << ','
                    << to_string(kAllNormKinds[k]) << ',' << format_double(initial) << ','
                    << format_double(final_norm) << ',';
                if (initial != 0.0) out << format_double(sharing_strength(r.log, i, kAllNormKinds[k]));
                out << '\n';
            }
    }
}

namespace {

void write_file(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << content;
    if (!out.flush()) throw IoError("failed writing " + path.string());
}

std::filesystem::path metrics_path(const ExperimentConfig& cfg, Method method, std::size_t repeat) {
    return cfg.output_dir / std::string(to_string(method)) / ("metrics_" + std::to_string(repeat) + ".csv");
}

} // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, bool write_files) {
    cfg.validate();
    const MultiTaskDataset data = load_data(cfg.data);

    // Splits depend only on the repeat, so every method sees the same ones.
    std::vector<DatasetSplit> splits;
    for (std::size_t r = 0; r < cfg.repeats; ++r) splits.push_back(split(data, {cfg.train_fraction, cfg.seed + r}));

    if (write_files) {
        std::error_code ec;
        for (auto m : cfg.methods) {
            std::filesystem::create_directories(cfg.output_dir / std::string(to_string(m)), ec);
            if (ec) throw IoError("cannot create " + (cfg.output_dir / std::string(to_string(m))).string());
        }
    }

    ExperimentResult result;
    for (auto m : cfg.methods)
        for (std::size_t r = 0; r < cfg.repeats; ++r) result.runs.push_back({m, r, cfg.seed + r, {}, std::nullopt});

    std::vector<std::exception_ptr> errors(result.runs.size());
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < result.runs.size(); i = next++) {
            RunOutcome& run = result.runs[i];
            try {
                TrainConfig tc = cfg.train;
                tc.method = run.method;
                tc.seed = run.seed;
                const auto& s = splits[run.repeat];
                try {
                    run.log = train(s.train, s.test, tc).log;
                } catch (const TrainingDiverged& e) {
                    run.log = e.log();
                    run.failure = e.what();
                }
                if (write_files) {
                    std::ostringstream csv;
                    write_metrics_csv(csv, run.log);
                    write_file(metrics_path(cfg, run.method, run.repeat), csv.str());
                }
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    const std::size_t workers = std::min(worker_count(cfg.threads), result.runs.size());
    if (workers <= 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    if (write_files) {
        std::ostringstream summary, sharing;
        write_summary_csv(summary, result);
        write_sharing_csv(sharing, result);
        write_file(cfg.output_dir / "summary.csv", summary.str());
        write_file(cfg.output_dir / "sharing.csv", sharing.str());
    }
    return result;
}

} // namespace ttnmtl
