#include "cvr/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "cvr/errors.hpp"
#include "cvr/evaluation.hpp"
#include "cvr/file_io.hpp"
#include "cvr/gradient.hpp"
#include "cvr/serialization.hpp"
#include "cvr/synthetic_data.hpp"
#include "cvr/trainer.hpp"

#ifndef CVR_VERSION
#define CVR_VERSION "0.0.0"
#endif

namespace cvr::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using Clock = std::chrono::steady_clock;

struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    json config = json::object();
    std::optional<std::uint64_t> seed;
    json inputs = json::object();
    json outputs = json::object();
    json results = json::object();
};

fs::path manifest_path_for(const fs::path& out) { return fs::path(out.string() + ".manifest.json"); }

void write_manifest(const Manifest& m, const fs::path& path, double seconds, int code,
                    const std::string& error) {
    json j;
    j["command"] = m.command;
    j["argv"] = m.argv;
    j["version"] = CVR_VERSION;
    j["config"] = m.config;
    j["seed"] = m.seed ? json(*m.seed) : json(nullptr);
    j["inputs"] = m.inputs;
    j["outputs"] = m.outputs;
    j["results"] = m.results;
    j["exit_code"] = code;
    if (!error.empty()) j["error"] = error;
    j["duration_seconds"] = seconds;
    write_file_atomic(path, j.dump(2) + "\n");
}

json load_json(const fs::path& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(path.string() + ": not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ConfigError(path.string() + ": expected a JSON object");
    return j;
}

// Runs `body` and maps library errors onto the exit-code contract. The
// manifest is written whether or not the command succeeded.
int guarded(Manifest& manifest, const fs::path& manifest_path, std::ostream& err,
            const std::function<int()>& body) {
    const auto start = Clock::now();
    int code = kOk;
    std::string message;
    try {
        code = body();
    } catch (const IoError& e) {
        code = kIoFailure;
        message = e.what();
    } catch (const NumericalError& e) {
        code = kNumericalFailure;
        message = e.what();
    } catch (const Error& e) {
        code = kValidationFailure;
        message = e.what();
    } catch (const json::exception& e) {
        code = kValidationFailure;
        message = e.what();
    }
    if (!message.empty()) err << "error: " << message << "\n";
    const double seconds = std::chrono::duration<double>(Clock::now() - start).count();
    if (!manifest_path.empty()) {
        try {
            write_manifest(manifest, manifest_path, seconds, code, message);
        } catch (const Error& e) {
            err << "error: " << e.what() << "\n";
            if (code == kOk) code = kIoFailure;
        }
    }
    return code;
}

std::string fixed(double v, int digits = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(digits) << v;
    return os.str();
}

void print_metrics(std::ostream& out, const MetricsReport& m) {
    out << "precision " << fixed(m.precision) << "  recall " << fixed(m.recall) << "  f1 "
        << fixed(m.f1) << "  fpi " << fixed(m.fpi) << "  (tp " << m.tp << ", fp " << m.fp
        << ", fn " << m.fn << ", images " << m.images << ", threshold " << m.threshold << ")\n";
}

struct CommonOptions {
    std::optional<std::uint64_t> seed;
    std::string out;
    std::string config;
};

void add_common(CLI::App& app, CommonOptions& o, bool out_required) {
    app.add_option("--seed", o.seed, "Random seed (overrides the config file)");
    auto* out = app.add_option("--out", o.out, "Output path; the manifest goes to <out>.manifest.json");
    if (out_required) out->required();
    app.add_option("--config", o.config, "JSON config file");
}

// ---------------------------------------------------------------- generate

struct GenerateOptions {
    CommonOptions common;
    std::string test_out;
    std::optional<std::size_t> n_cases;
};

int cmd_generate(const GenerateOptions& o, Manifest& m, std::ostream& out) {
    if (o.common.config.empty()) throw ConfigError("generate: --config is required");
    m.inputs["config"] = o.common.config;
    json raw = load_json(o.common.config);
    if (o.common.seed) raw["seed"] = *o.common.seed;
    if (o.n_cases) raw["n_cases"] = *o.n_cases;
    const GeneratorConfig cfg = generator_config_from_json(raw);
    m.config = to_json(cfg);
    m.seed = cfg.seed;

    std::vector<PairedSample> cases = generate_dataset(cfg);
    if (o.test_out.empty()) {
        write_dataset(cases, o.common.out);
        m.outputs["dataset"] = o.common.out;
        m.results["cases"] = cases.size();
        out << "wrote " << cases.size() << " cases to " << o.common.out << "\n";
        return kOk;
    }
    const DatasetSplit split = split_dataset(std::move(cases), cfg.test_fraction);
    write_dataset(split.train, o.common.out);
    write_dataset(split.test, o.test_out);
    m.outputs["train"] = o.common.out;
    m.outputs["test"] = o.test_out;
    m.results["train_cases"] = split.train.size();
    m.results["test_cases"] = split.test.size();
    out << "wrote " << split.train.size() << " training cases to " << o.common.out << " and "
        << split.test.size() << " test cases to " << o.test_out << "\n";
    return kOk;
}

// ------------------------------------------------------------------- train

struct TrainOverrides {
    std::optional<double> learning_rate;
    std::optional<double> momentum;
    std::optional<std::size_t> epochs;
    std::optional<std::size_t> batch_size;
    std::optional<std::size_t> n_blocks;
    std::optional<std::size_t> d_k;
    std::optional<std::size_t> d_emb;
};

void add_train_overrides(CLI::App& app, TrainOverrides& t) {
    app.add_option("--learning-rate,--lr", t.learning_rate, "SGD learning rate");
    app.add_option("--momentum", t.momentum, "SGD momentum");
    app.add_option("--epochs", t.epochs, "Number of epochs");
    app.add_option("--batch-size", t.batch_size, "Paired cases per step");
    app.add_option("--n-blocks", t.n_blocks, "Relation blocks per direction");
    app.add_option("--d-k", t.d_k, "Affinity space dimension");
    app.add_option("--d-emb", t.d_emb, "Geometry embedding dimension");
}

TrainConfig resolve_train_config(json raw, std::optional<std::uint64_t> seed, const TrainOverrides& t) {
    if (seed) raw["seed"] = *seed;
    if (t.learning_rate) raw["learning_rate"] = *t.learning_rate;
    if (t.momentum) raw["momentum"] = *t.momentum;
    if (t.epochs) raw["epochs"] = *t.epochs;
    if (t.batch_size) raw["batch_size"] = *t.batch_size;
    if (t.n_blocks) raw["n_blocks"] = *t.n_blocks;
    if (t.d_k) raw["d_k"] = *t.d_k;
    if (t.d_emb) raw["d_emb"] = *t.d_emb;
    return train_config_from_json(raw);
}

struct TrainOptions {
    CommonOptions common;
    TrainOverrides overrides;
    std::string data;
    bool quiet = false;
};

int cmd_train(const TrainOptions& o, Manifest& m, std::ostream& out) {
    const json raw = o.common.config.empty() ? json::object() : load_json(o.common.config);
    const TrainConfig cfg = resolve_train_config(raw, o.common.seed, o.overrides);
    m.config = to_json(cfg);
    m.seed = cfg.seed;
    if (!o.common.config.empty()) m.inputs["config"] = o.common.config;
    m.inputs["dataset"] = o.data;
    const std::vector<PairedSample> data = read_dataset(o.data);
    EpochCallback progress;
    if (!o.quiet) {
        progress = [&](std::size_t epoch, double loss) {
            out << "epoch " << (epoch + 1) << "/" << cfg.epochs << "  loss " << fixed(loss, 6) << "\n";
        };
    }
    const Checkpoint ckpt = train(data, cfg, progress);
    write_checkpoint(ckpt, o.common.out);
    m.outputs["checkpoint"] = o.common.out;
    m.results["final_loss"] = ckpt.train_loss_history.back();
    m.results["epochs"] = ckpt.epoch;
    m.results["train_cases"] = data.size();
    out << "final loss " << fixed(ckpt.train_loss_history.back(), 6) << ", checkpoint written to "
        << o.common.out << "\n";
    return kOk;
}

// --------------------------------------------------------------- gradcheck

struct GradcheckOptions {
    CommonOptions common;
    std::size_t count = 1;
    ToyProblemDims dims;
    double step = 1e-5;
    double tolerance = 1e-4;
    bool corrupt = false;
};

int cmd_gradcheck(const GradcheckOptions& o, Manifest& m, std::ostream& out) {
    const std::uint64_t first = o.common.seed.value_or(1);
    if (o.count == 0) throw ConfigError("gradcheck: --count must be at least 1");
    m.seed = first;
    m.config = {{"count", o.count},
                {"d_f", o.dims.d_f},
                {"d_k", o.dims.d_k},
                {"d_emb", o.dims.d_emb},
                {"candidates_per_view", o.dims.candidates_per_view},
                {"n_blocks", o.dims.n_blocks},
                {"step", o.step},
                {"tolerance", o.tolerance},
                {"corrupt", o.corrupt}};

    json runs = json::array();
    bool all_pass = true;
    double worst = 0.0;
    std::string worst_where;
    for (std::size_t i = 0; i < o.count; ++i) {
        const std::uint64_t seed = first + i;
        const ToyProblem toy = make_toy_problem(seed, o.dims);
        const LossWeights weights;
        ParamGradients grads = backward(toy.sample, toy.model, weights).grads;
        if (o.corrupt) {
            auto refs = tensor_refs(grads);
            double& g = refs.front().values.front();
            g += 1e-2 * (1.0 + std::abs(g));
        }
        const GradCheckReport r =
            compare_gradients(toy.sample, toy.model, weights, grads, o.step, o.tolerance);
        json jr = to_json(r);
        jr["seed"] = seed;
        runs.push_back(std::move(jr));
        out << "seed " << seed << ": " << (r.pass ? "pass" : "FAIL") << "  max relative error "
            << std::scientific << std::setprecision(3) << r.max_rel_error << std::defaultfloat
            << " (" << r.worst_tensor << ")\n";
        all_pass = all_pass && r.pass;
        if (r.max_rel_error >= worst) {
            worst = r.max_rel_error;
            worst_where = r.worst_tensor + " at seed " + std::to_string(seed);
        }
    }
    json report = {{"pass", all_pass},
                   {"max_rel_error", worst},
                   {"worst", worst_where},
                   {"tolerance", o.tolerance},
                   {"step", o.step},
                   {"runs", std::move(runs)}};
    if (!o.common.out.empty()) {
        write_file_atomic(o.common.out, report.dump(2) + "\n");
        m.outputs["report"] = o.common.out;
    }
    m.results = {{"pass", all_pass}, {"max_rel_error", worst}, {"worst", worst_where}};
    out << (all_pass ? "gradient check passed" : "gradient check FAILED") << ": max relative error "
        << std::scientific << std::setprecision(3) << worst << std::defaultfloat << " in "
        << worst_where << "\n";
    return all_pass ? kOk : kCheckFailed;
}

// -------------------------------------------------------------------- eval

struct EvalOverrides {
    std::optional<double> score_threshold;
    std::optional<double> iou_threshold;
    std::optional<double> nms_iou;
};

void add_eval_overrides(CLI::App& app, EvalOverrides& e) {
    app.add_option("--score-threshold", e.score_threshold, "Headline operating threshold (score > t)");
    app.add_option("--iou-threshold", e.iou_threshold, "IoU needed for a true positive");
    app.add_option("--nms-iou", e.nms_iou, "Per-view non-maximum suppression IoU");
}

EvalConfig resolve_eval_config(const json& raw_in, const EvalOverrides& e) {
    json raw = raw_in;
    if (e.score_threshold) raw["score_threshold"] = *e.score_threshold;
    if (e.iou_threshold) raw["iou_threshold"] = *e.iou_threshold;
    if (e.nms_iou) raw["nms_iou"] = *e.nms_iou;
    return eval_config_from_json(raw);
}

void check_feature_dims(const ModelParams& model, std::span<const PairedSample> data,
                        const std::string& ckpt_path, const std::string& data_path) {
    const std::size_t expected = model.dims().d_f;
    for (const auto& s : data) {
        if (s.feature_dim() != expected) {
            throw ShapeError("checkpoint " + ckpt_path + " expects feature length " +
                             std::to_string(expected) + " but dataset " + data_path + " case " +
                             std::to_string(s.case_id) + " has feature length " +
                             std::to_string(s.feature_dim()));
        }
    }
}

struct EvalOptions {
    CommonOptions common;
    EvalOverrides overrides;
    std::string checkpoint;
    std::string data;
    std::string froc_csv_path;
};

int cmd_eval(const EvalOptions& o, Manifest& m, std::ostream& out) {
    const json raw = o.common.config.empty() ? json::object() : load_json(o.common.config);
    const EvalConfig cfg = resolve_eval_config(raw, o.overrides);
    m.config = to_json(cfg);
    if (!o.common.config.empty()) m.inputs["config"] = o.common.config;
    m.inputs["checkpoint"] = o.checkpoint;
    m.inputs["dataset"] = o.data;

    const Checkpoint ckpt = read_checkpoint(o.checkpoint);
    const std::vector<PairedSample> data = read_dataset(o.data);
    check_feature_dims(ckpt.model, data, o.checkpoint, o.data);
    m.seed = ckpt.config.seed;

    const MetricsReport report = evaluate(ckpt.model, data, cfg);
    json j = to_json(report);
    j["config"] = to_json(cfg);
    j["cases"] = data.size();
    write_file_atomic(o.common.out, j.dump(2) + "\n");
    m.outputs["metrics"] = o.common.out;
    if (!o.froc_csv_path.empty()) {
        write_file_atomic(o.froc_csv_path, froc_csv(report));
        m.outputs["froc_csv"] = o.froc_csv_path;
    }
    m.results = {{"precision", report.precision}, {"recall", report.recall},
                 {"f1", report.f1},               {"fpi", report.fpi}};
    print_metrics(out, report);
    return kOk;
}

// ------------------------------------------------------------------ ablate

struct AblateOptions {
    CommonOptions common;
    TrainOverrides overrides;
    EvalOverrides eval;
    std::string train_path;
    std::string test_path;
    std::string json_path;
    std::vector<std::size_t> n_list{0, 1, 2, 3, 4};
    std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
};

std::string ablation_csv(std::span<const AblationRow> rows, std::span<const AblationMean> means) {
    std::ostringstream os;
    os << "kind,n_blocks,seed,runs,precision,recall,f1,fpi,tp,fp,fn,final_train_loss\n";
    for (const auto& r : rows) {
        const auto& x = r.metrics;
        os << "run," << r.n_blocks << ',' << r.seed << ",1," << format_real(x.precision) << ','
           << format_real(x.recall) << ',' << format_real(x.f1) << ',' << format_real(x.fpi) << ','
           << x.tp << ',' << x.fp << ',' << x.fn << ',' << format_real(r.final_train_loss) << '\n';
    }
    for (const auto& mm : means) {
        os << "mean," << mm.n_blocks << ",," << mm.runs << ',' << format_real(mm.precision) << ','
           << format_real(mm.recall) << ',' << format_real(mm.f1) << ',' << format_real(mm.fpi)
           << ",,,,\n";
    }
    return os.str();
}

int cmd_ablate(const AblateOptions& o, Manifest& m, std::ostream& out) {
    // --seed, when given, replaces the seed list with a single seed.
    const CommonOptions& common = o.common;
    const std::vector<std::uint64_t> seeds =
        common.seed ? std::vector<std::uint64_t>{*common.seed} : o.seeds;
    json raw_train = common.config.empty() ? json::object() : load_json(common.config);
    json raw_eval = json::object();
    if (raw_train.is_object() && raw_train.contains("eval")) {
        raw_eval = raw_train["eval"];
        raw_train.erase("eval");
    }
    const TrainConfig base = resolve_train_config(raw_train, std::nullopt, o.overrides);
    const EvalConfig eval_cfg = resolve_eval_config(raw_eval, o.eval);
    m.config = {{"train", to_json(base)},
                {"eval", to_json(eval_cfg)},
                {"n_list", o.n_list},
                {"seeds", seeds}};
    if (!common.config.empty()) m.inputs["config"] = common.config;
    m.inputs["train"] = o.train_path;
    m.inputs["test"] = o.test_path;

    const std::vector<PairedSample> train_set = read_dataset(o.train_path);
    const std::vector<PairedSample> test_set = read_dataset(o.test_path);
    if (!train_set.empty() && !test_set.empty() &&
        train_set.front().feature_dim() != test_set.front().feature_dim()) {
        throw ShapeError("training set " + o.train_path + " has feature length " +
                         std::to_string(train_set.front().feature_dim()) + " but test set " +
                         o.test_path + " has " + std::to_string(test_set.front().feature_dim()));
    }

    const auto rows = run_ablation(train_set, test_set, base, o.n_list, seeds, eval_cfg);
    const auto means = ablation_means(rows);
    write_file_atomic(o.common.out, ablation_csv(rows, means));
    m.outputs["csv"] = o.common.out;

    json jrows = json::array();
    for (const auto& r : rows) {
        jrows.push_back({{"n_blocks", r.n_blocks},
                         {"seed", r.seed},
                         {"final_train_loss", r.final_train_loss},
                         {"metrics", to_json(r.metrics)}});
    }
    json jmeans = json::array();
    for (const auto& mm : means) {
        jmeans.push_back({{"n_blocks", mm.n_blocks},
                          {"runs", mm.runs},
                          {"precision", mm.precision},
                          {"recall", mm.recall},
                          {"f1", mm.f1},
                          {"fpi", mm.fpi}});
    }
    if (!o.json_path.empty()) {
        const json report = {{"config", m.config}, {"rows", jrows}, {"means", jmeans}};
        write_file_atomic(o.json_path, report.dump(2) + "\n");
        m.outputs["json"] = o.json_path;
    }
    m.results["means"] = jmeans;

    out << "  N  runs  precision  recall      f1     fpi\n";
    for (const auto& mm : means) {
        out << std::setw(3) << mm.n_blocks << std::setw(6) << mm.runs << std::setw(11)
            << fixed(mm.precision) << std::setw(8) << fixed(mm.recall) << std::setw(8)
            << fixed(mm.f1) << std::setw(8) << fixed(mm.fpi) << "\n";
    }
    return kOk;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Cross-view relation network: synthetic paired-view mass detection toolkit", "cvrnet"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(CVR_VERSION));

    GenerateOptions gen;
    auto* generate = app.add_subcommand("generate", "Generate a synthetic paired-view dataset");
    add_common(*generate, gen.common, true);
    generate->add_option("--test-out", gen.test_out,
                         "Also split off the last test_fraction of cases into this file");
    generate->add_option("--n-cases", gen.n_cases, "Number of cases (overrides the config file)");

    TrainOptions tr;
    auto* train_cmd = app.add_subcommand("train", "Train a model on a dataset file");
    add_common(*train_cmd, tr.common, true);
    add_train_overrides(*train_cmd, tr.overrides);
    train_cmd->add_option("--data", tr.data, "Training dataset (JSONL)")->required();
    train_cmd->add_flag("--quiet", tr.quiet, "Do not print per-epoch losses");

    GradcheckOptions gc;
    auto* gradcheck = app.add_subcommand("gradcheck", "Compare analytic and numerical gradients");
    add_common(*gradcheck, gc.common, false);
    gradcheck->add_option("--count", gc.count, "Number of consecutive seeds to check")
        ->capture_default_str();
    gradcheck->add_option("--d-f", gc.dims.d_f, "Feature dimension")->capture_default_str();
    gradcheck->add_option("--d-k", gc.dims.d_k, "Affinity dimension")->capture_default_str();
    gradcheck->add_option("--d-emb", gc.dims.d_emb, "Geometry embedding dimension")
        ->capture_default_str();
    gradcheck->add_option("--candidates", gc.dims.candidates_per_view, "Candidates per view")
        ->capture_default_str();
    gradcheck->add_option("--n-blocks", gc.dims.n_blocks, "Relation blocks per direction")
        ->capture_default_str();
    gradcheck->add_option("--step", gc.step, "Central-difference step")->capture_default_str();
    gradcheck->add_option("--tolerance", gc.tolerance, "Relative error tolerance")
        ->capture_default_str();
    gradcheck->add_flag("--corrupt", gc.corrupt, "Perturb the analytic gradient (negative control)");

    EvalOptions ev;
    auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
    add_common(*eval, ev.common, true);
    add_eval_overrides(*eval, ev.overrides);
    eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint file")->required();
    eval->add_option("--data", ev.data, "Dataset to evaluate (JSONL)")->required();
    eval->add_option("--froc-csv", ev.froc_csv_path, "Also write the FROC curve as CSV");

    AblateOptions ab;
    auto* ablate = app.add_subcommand("ablate", "Train and evaluate over relation-block counts and seeds");
    add_common(*ablate, ab.common, true);
    add_train_overrides(*ablate, ab.overrides);
    add_eval_overrides(*ablate, ab.eval);
    ablate->add_option("--train", ab.train_path, "Training dataset (JSONL)")->required();
    ablate->add_option("--test", ab.test_path, "Test dataset (JSONL)")->required();
    ablate->add_option("--n-list", ab.n_list, "Comma-separated block counts")
        ->delimiter(',')
        ->capture_default_str();
    ablate->add_option("--seeds", ab.seeds, "Comma-separated training seeds")
        ->delimiter(',')
        ->capture_default_str();
    ablate->add_option("--json", ab.json_path, "Also write rows and means as JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kOk : kValidationFailure;
    }

    Manifest manifest;
    for (int i = 0; i < argc; ++i) manifest.argv.emplace_back(argv[i]);

    auto manifest_for = [](const std::string& out_path, const std::string& fallback) {
        return out_path.empty() ? fs::path(fallback) : manifest_path_for(out_path);
    };

    if (generate->parsed()) {
        manifest.command = "generate";
        return guarded(manifest, manifest_for(gen.common.out, ""), err,
                       [&] { return cmd_generate(gen, manifest, out); });
    }
    if (train_cmd->parsed()) {
        manifest.command = "train";
        return guarded(manifest, manifest_for(tr.common.out, ""), err,
                       [&] { return cmd_train(tr, manifest, out); });
    }
    if (gradcheck->parsed()) {
        manifest.command = "gradcheck";
        return guarded(manifest, manifest_for(gc.common.out, "gradcheck.manifest.json"), err,
                       [&] { return cmd_gradcheck(gc, manifest, out); });
    }
    if (eval->parsed()) {
        manifest.command = "eval";
        return guarded(manifest, manifest_for(ev.common.out, ""), err,
                       [&] { return cmd_eval(ev, manifest, out); });
    }
    manifest.command = "ablate";
    return guarded(manifest, manifest_for(ab.common.out, ""), err,
                   [&] { return cmd_ablate(ab, manifest, out); });
}

} // namespace cvr::cli
