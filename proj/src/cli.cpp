#include "ttnmtl/cli.hpp"

#include "ttnmtl/data.hpp"
#include "ttnmtl/errors.hpp"
#include "ttnmtl/experiment.hpp"
#include "ttnmtl/gradcheck.hpp"
#include "ttnmtl/plot.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>

namespace ttnmtl {

namespace {

struct GenDataArgs {
    SynthConfig synth;
    std::string out;
    std::string from_pgm;
};

struct TrainArgs {
    std::string config;
    std::size_t threads = 0;  // 0 keeps the config's value
    std::string out;
};

struct GradcheckArgs {
    std::uint64_t seed = 0;
    std::vector<std::string> only;
};

struct PlotArgs {
    std::string metrics;
    std::string svg;
    std::vector<std::string> columns{"train_ce"};
    std::string title;
};

int cmd_gen_data(const GenDataArgs& a, std::ostream& out) {
    MultiTaskDataset ds;
    if (!a.from_pgm.empty()) {
        ds = import_pgm_tree(a.from_pgm);
    } else {
        a.synth.validate();
        ds = synth_tasks(a.synth);
    }
    save_dataset(ds, a.out);
    std::size_t examples = 0;
    for (const auto& t : ds.tasks) examples += t.size();
    const auto shape = ds.image_shape();
    out << "wrote " << a.out << ": " << ds.task_count() << " tasks, " << examples << " examples, " << shape[0] << 'x'
        << shape[1] << " images\n";
    return kExitOk;
}

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
    ExperimentConfig cfg = load_experiment_config(a.config);
    if (a.threads > 0) cfg.threads = a.threads;
    if (!a.out.empty()) cfg.output_dir = a.out;

    const auto result = run_experiment(cfg);
    for (auto method : cfg.methods) {
        std::vector<double> acc;
        for (const auto& r : result.runs)
            if (r.method == method && !r.failure) acc.push_back(r.final_test_acc());
        double mean = 0.0;
        for (double v : acc) mean += v;
        if (!acc.empty()) mean /= static_cast<double>(acc.size());
        char line[128];
        std::snprintf(line, sizeof line, "%-7s mean test accuracy %.4f over %zu/%zu repeats\n",
                      std::string(to_string(method)).c_str(), mean, acc.size(), cfg.repeats);
        out << line;
    }
    out << "results in " << cfg.output_dir.string() << '\n';
    if (result.any_failure()) {
        for (const auto& r : result.runs)
            if (r.failure)
                err << "error: " << to_string(r.method) << " repeat " << r.repeat << ": " << *r.failure
                    << " (partial metrics kept)\n";
        return kExitNumerical;
    }
    return kExitOk;
}

int cmd_gradcheck(const GradcheckArgs& a, std::ostream& out, std::ostream& err) {
    const auto results = run_gradcheck(a.seed, a.only);
    std::vector<const CheckResult*> failed;
    for (const auto& r : results) {
        char line[256];
        std::snprintf(line, sizeof line, "%-4s %-12s %-50s error %.3e (limit %.0e)\n", r.passed() ? "ok" : "FAIL",
                      r.suite.c_str(), r.name.c_str(), r.error, r.threshold);
        out << line;
        if (!r.passed()) failed.push_back(&r);
    }
    if (failed.empty()) return kExitOk;
    err << failed.size() << " check(s) over threshold:\n";
    for (const auto* r : failed) err << "  " << r->suite << ": " << r->name << '\n';
    return kExitCheckFailed;
}

int cmd_plot(const PlotArgs& a, std::ostream& out) {
    const CsvTable table = read_csv(a.metrics);
    const auto series = metrics_series(table, a.columns);
    std::string title = a.title;
    if (title.empty()) {
        for (const auto& c : a.columns) title += (title.empty() ? "" : ", ") + c;
    }
    std::ofstream file(a.svg, std::ios::binary | std::ios::trunc);
    if (!file) throw IoError("cannot write " + a.svg);
    file << render_svg(series, title);
    if (!file.flush()) throw IoError("failed writing " + a.svg);
    out << "wrote " << a.svg << " (" << series.size() << " series)\n";
    return kExitOk;
}

} // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Multi-task network training with tensor trace norm regularization", "ttnmtl"};
    app.require_subcommand(1);

    GenDataArgs gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic (or PGM-imported) dataset file");
    gen_cmd->add_option("--tasks", gen.synth.tasks, "Number of tasks")->capture_default_str();
    gen_cmd->add_option("--classes", gen.synth.classes, "Classes per task")->capture_default_str();
    gen_cmd->add_option("--side", gen.synth.side, "Image side length in pixels")->capture_default_str();
    gen_cmd->add_option("--sharedness", gen.synth.sharedness, "Weight of the shared class templates, in [0,1]")
        ->capture_default_str();
    gen_cmd->add_option("--examples", gen.synth.examples_per_class, "Examples per class")->capture_default_str();
    gen_cmd->add_option("--noise", gen.synth.noise, "Pixel noise standard deviation")->capture_default_str();
    gen_cmd->add_option("--seed", gen.synth.seed, "Generator seed")->capture_default_str();
    gen_cmd->add_option("--from-pgm", gen.from_pgm, "Import <dir>/<task>/<class>/*.pgm instead of generating");
    gen_cmd->add_option("--out", gen.out, "Output dataset file")->required();

    TrainArgs train_args;
    auto* train_cmd = app.add_subcommand("train", "Run the experiment described by a JSON config");
    train_cmd->add_option("config", train_args.config, "Experiment config (JSON)")->required();
    train_cmd->add_option("--threads", train_args.threads, "Parallel runs (capped by TTNMTL_THREADS)");
    train_cmd->add_option("--out", train_args.out, "Override the output directory");

    GradcheckArgs gc;
    auto* gc_cmd = app.add_subcommand("gradcheck", "Compare analytic gradients with finite differences");
    gc_cmd->add_option("--seed", gc.seed, "Seed for the random test points")->capture_default_str();
    gc_cmd->add_option("--only", gc.only, "Restrict to suites: linalg, regularizer, nn, trainer")
        ->check(CLI::IsMember(gradcheck_suites()));

    PlotArgs plot;
    auto* plot_cmd = app.add_subcommand("plot", "Render metrics columns as an SVG line chart");
    plot_cmd->add_option("metrics", plot.metrics, "metrics_<r>.csv")->required();
    plot_cmd->add_option("svg", plot.svg, "Output SVG file")->required();
    plot_cmd->add_option("--columns", plot.columns, "Columns to plot")->delimiter(',')->capture_default_str();
    plot_cmd->add_option("--title", plot.title, "Chart title");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }

    try {
        if (*gen_cmd) return cmd_gen_data(gen, out);
        if (*train_cmd) return cmd_train(train_args, out, err);
        if (*gc_cmd) return cmd_gradcheck(gc, out, err);
        if (*plot_cmd) return cmd_plot(plot, out);
    } catch (const NumericalFailure& e) {
        err << "error: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitUsage;
    }
    return kExitUsage;
}

} // namespace ttnmtl
