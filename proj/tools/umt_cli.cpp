// Command-line front end: synth, train, eval, predict, gradcheck, bench-attn.
// Failures print `error: kind=<kind> message="<text>"` and exit with 1.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "umt/attention.hpp"
#include "umt/checkpoint.hpp"
#include "umt/config.hpp"
#include "umt/error.hpp"
#include "umt/features.hpp"
#include "umt/log.hpp"
#include "umt/trainer.hpp"

using namespace umt;
namespace fs = std::filesystem;

namespace {

struct CommonOptions {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_given = false;
    std::string out;
    bool verbose = false;
};

void add_common(CLI::App* cmd, CommonOptions& o, const std::string& out_help) {
    cmd->add_option("--config", o.config, "keyed configuration file (key = value)");
    cmd->add_option("--seed", o.seed, "random seed")->each([&o](const std::string&) { o.seed_given = true; });
    cmd->add_option("--out", o.out, out_help);
    cmd->add_flag("-v,--verbose", o.verbose, "log per-epoch progress");
}

KeyedConfig load_config(const CommonOptions& o) {
    return o.config.empty() ? KeyedConfig{} : KeyedConfig::load(o.config);
}

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path);
    if (!(out << text)) {
        throw IoError("cannot write " + path.string());
    }
}

std::string escape(const std::string& text) {
    std::string out;
    for (char c : text) {
        if (c == '"' || c == '\\') {
            out += '\\';
            out += c;
        } else if (c == '\n') {
            out += "\\n";
        } else {
            out += c;
        }
    }
    return out;
}

/// Model config from model.* keys, with feature widths and modality switches
/// taken from the dataset unless the config sets them.
ModelConfig model_config_for(const KeyedConfig& cfg, const std::vector<VideoSample>& data) {
    ModelConfig m;
    const VideoSample& first = data.front();
    m.use_visual = first.visual.has_value();
    m.use_audio = first.audio.has_value();
    m.use_text = first.text.has_value();
    m.visual_dim = first.visual ? first.visual->dim : 0;
    m.audio_dim = first.audio ? first.audio->dim : 0;
    m.text_dim = first.text ? first.text->dim : 0;
    std::size_t longest = 0;
    for (const VideoSample& s : data) {
        longest = std::max(longest, s.num_clips());
    }
    m.max_length = std::max(m.max_length, longest);
    apply_config(cfg, m);
    m.validate();
    return m;
}

std::vector<VideoSample> load_data(const std::string& path) {
    if (path.empty()) {
        throw ConfigError("--data <manifest.json> is required");
    }
    auto data = load_dataset(path);
    if (data.empty()) {
        throw DataError("dataset " + path + " has no samples");
    }
    return data;
}

int run_synth(const CommonOptions& o) {
    const KeyedConfig cfg = load_config(o);
    SynthSpec spec;
    apply_config(cfg, spec);
    if (o.out.empty()) {
        throw ConfigError("synth needs --out <directory>");
    }
    Rng rng(o.seed);
    const auto data = synthesize_dataset(spec, rng);
    const fs::path manifest = write_dataset(data, o.out);
    std::cout << "wrote " << data.size() << " videos to " << manifest.string() << "\n";
    return 0;
}

int run_train(const CommonOptions& o, const std::string& data_path) {
    const KeyedConfig cfg = load_config(o);
    const auto data = load_data(data_path);
    TrainConfig train_cfg;
    apply_config(cfg, train_cfg);
    if (o.seed_given) {
        train_cfg.seed = o.seed;
    }
    const ModelConfig model_cfg = model_config_for(cfg, data);
    if (o.out.empty()) {
        throw ConfigError("train needs --out <directory>");
    }
    const fs::path out_dir = o.out;
    UmtModel model(model_cfg, train_cfg.seed);
    TrainHooks hooks;
    hooks.checkpoint_dir = out_dir;
    const TrainResult result = train(model, data, train_cfg, hooks);

    nlohmann::json history;
    for (const EpochRecord& e : result.epochs) {
        history["epochs"].push_back({{"epoch", e.epoch}, {"mean_loss", e.mean_loss}});
    }
    for (const StepRecord& s : result.steps) {
        history["steps"].push_back({{"epoch", s.epoch},
                                    {"batch", s.batch},
                                    {"total", s.total},
                                    {"saliency", s.saliency},
                                    {"center", s.center},
                                    {"window", s.window},
                                    {"offset", s.offset}});
    }
    write_text(out_dir / "history.json", history.dump(1) + "\n");
    write_text(out_dir / "run.cfg", to_keyed(model_cfg).to_text() + to_keyed(train_cfg).to_text());
    std::cout << "trained " << result.epochs.size() << " epochs, final mean loss "
              << (result.epochs.empty() ? 0.0 : result.epochs.back().mean_loss) << ", checkpoint "
              << (out_dir / "final.ckpt").string() << "\n";
    return 0;
}

int run_eval(const CommonOptions& o, const std::string& data_path, const std::string& checkpoint,
             const std::string& predictions, const std::string& task_text) {
    const KeyedConfig cfg = load_config(o);
    const auto data = load_data(data_path);
    const Task task = parse_task(task_text);
    if (checkpoint.empty() == predictions.empty()) {
        throw ConfigError("eval needs exactly one of --checkpoint or --predictions");
    }
    EvalReport report;
    if (!checkpoint.empty()) {
        DecodeOptions decode;
        apply_config(cfg, decode);
        report = evaluate(*load_checkpoint(checkpoint), data, task, decode);
    } else {
        report = evaluate_records(read_predictions(predictions), data, task);
    }
    std::cout << report_to_table(report);
    if (!o.out.empty()) {
        write_text(o.out, report_to_json(report) + "\n");
    }
    return 0;
}

int run_predict(const CommonOptions& o, const std::string& data_path, const std::string& checkpoint) {
    const KeyedConfig cfg = load_config(o);
    const auto data = load_data(data_path);
    if (checkpoint.empty()) {
        throw ConfigError("predict needs --checkpoint");
    }
    if (o.out.empty()) {
        throw ConfigError("predict needs --out <predictions.jsonl>");
    }
    DecodeOptions decode;
    apply_config(cfg, decode);
    const auto records = predict(*load_checkpoint(checkpoint), data, decode);
    write_predictions(o.out, records);
    std::cout << "wrote " << records.size() << " prediction records to " << o.out << "\n";
    return 0;
}

int run_gradcheck(const CommonOptions& o, std::size_t probes, std::size_t clips, std::size_t tokens,
                  double tolerance) {
    const KeyedConfig cfg = load_config(o);
    ModelConfig m;
    m.model_dim = 8;
    m.heads = 2;
    m.bottleneck_tokens = 2;
    m.visual_dim = 5;
    m.audio_dim = 3;
    m.text_dim = 4;
    m.max_length = clips;
    apply_config(cfg, m);
    LossWeights weights;
    apply_config(cfg, weights);
    UmtModel model(m, o.seed);

    Rng rng(o.seed + 1);
    VideoSample sample;
    sample.id = "gradcheck";
    auto features = [&](Modality modality, std::size_t rows, std::size_t dim) {
        FeatureSequence f{modality, rows, dim, {}};
        for (std::size_t i = 0; i < rows * dim; ++i) {
            f.values.push_back(rng.normal());
        }
        return f;
    };
    if (m.use_visual) {
        sample.visual = features(Modality::visual, clips, m.visual_dim);
    }
    if (m.use_audio) {
        sample.audio = features(Modality::audio, clips, m.audio_dim);
    }
    if (m.use_text) {
        sample.text = features(Modality::text, tokens, m.text_dim);
    }
    for (std::size_t i = 0; i < clips; ++i) {
        sample.saliency.push_back(rng.uniform(0.0, 1.0));
    }
    sample.moments = {{rng.uniform(0.0, static_cast<double>(clips) - 0.5), rng.uniform(1.0, 3.0)}};

    const GradCheckReport report = check_model_gradients(model, sample, weights, probes, rng);
    const bool ok = report.passed(tolerance);
    std::printf("%s: %zu probes over %zu parameters, max relative error %.3e (tolerance %.1e)\n",
                ok ? "PASS" : "FAIL", report.entries.size(), model.parameters().numel(), report.max_relative_error,
                tolerance);
    if (!o.out.empty()) {
        nlohmann::json j;
        j["max_relative_error"] = report.max_relative_error;
        j["tolerance"] = tolerance;
        j["passed"] = ok;
        for (const auto& e : report.entries) {
            j["entries"].push_back({{"tensor", e.tensor},
                                    {"index", e.index},
                                    {"analytic", e.analytic},
                                    {"numeric", e.numeric},
                                    {"relative_error", e.relative_error}});
        }
        write_text(o.out, j.dump(1) + "\n");
    }
    if (!ok) {
        throw NumericError("gradient check failed: max relative error " + std::to_string(report.max_relative_error));
    }
    return 0;
}

int run_bench(const CommonOptions& o, std::vector<std::size_t> lengths) {
    const KeyedConfig cfg = load_config(o);
    ModelConfig m;
    apply_config(cfg, m);
    std::sort(lengths.begin(), lengths.end());
    nlohmann::json rows = nlohmann::json::array();
    std::printf("model_dim %zu, heads %zu, bottleneck tokens %zu\n", m.model_dim, m.heads, m.bottleneck_tokens);
    std::printf("%8s %16s %16s %10s %10s\n", "clips", "bottleneck MACs", "full MACs", "b ratio", "f ratio");
    FusionCost previous{};
    std::size_t previous_length = 0;
    for (std::size_t n : lengths) {
        const FusionCost cost = measure_fusion_cost(m.model_dim, m.heads, m.bottleneck_tokens, n);
        double b_ratio = 0.0;
        double f_ratio = 0.0;
        if (previous_length != 0) {
            b_ratio = static_cast<double>(cost.bottleneck) / static_cast<double>(previous.bottleneck);
            f_ratio = static_cast<double>(cost.full) / static_cast<double>(previous.full);
        }
        std::printf("%8zu %16llu %16llu %10.3f %10.3f\n", n, static_cast<unsigned long long>(cost.bottleneck),
                    static_cast<unsigned long long>(cost.full), b_ratio, f_ratio);
        rows.push_back({{"clips", n}, {"bottleneck_macs", cost.bottleneck}, {"full_macs", cost.full}});
        previous = cost;
        previous_length = n;
    }
    if (!o.out.empty()) {
        write_text(o.out, nlohmann::json{{"model_dim", m.model_dim},
                                         {"heads", m.heads},
                                         {"bottleneck_tokens", m.bottleneck_tokens},
                                         {"rows", rows}}
                                  .dump(1) +
                              "\n");
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Joint moment retrieval and highlight detection over pre-extracted clip features"};
    app.require_subcommand(1);

    CommonOptions synth_o, train_o, eval_o, predict_o, grad_o, bench_o;
    std::string train_data, eval_data, predict_data;
    std::string eval_ckpt, eval_preds, eval_task = "both", predict_ckpt;
    std::size_t probes = 256, grad_clips = 4, grad_tokens = 3;
    double tolerance = 1e-4;
    std::vector<std::size_t> lengths = {16, 32, 64, 128, 256};

    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset from synth.* keys");
    add_common(synth, synth_o, "output directory for features and manifest.json");

    auto* train_cmd = app.add_subcommand("train", "train a model on a dataset manifest");
    add_common(train_cmd, train_o, "output directory for checkpoints and history");
    train_cmd->add_option("--data", train_data, "dataset manifest")->required();

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint or a prediction dump");
    add_common(eval, eval_o, "write the report as JSON to this path");
    eval->add_option("--data", eval_data, "dataset manifest with annotations")->required();
    eval->add_option("--checkpoint", eval_ckpt, "checkpoint to run");
    eval->add_option("--predictions", eval_preds, "JSON-lines predictions to score");
    eval->add_option("--task", eval_task, "mr, hd or both");

    auto* predict_cmd = app.add_subcommand("predict", "write JSON-lines predictions");
    add_common(predict_cmd, predict_o, "predictions output path");
    predict_cmd->add_option("--data", predict_data, "dataset manifest")->required();
    predict_cmd->add_option("--checkpoint", predict_ckpt, "checkpoint to run")->required();

    auto* grad = app.add_subcommand("gradcheck", "finite-difference check of the full model loss");
    add_common(grad, grad_o, "write per-probe results as JSON");
    grad->add_option("--probes", probes, "number of sampled parameter coordinates");
    grad->add_option("--clips", grad_clips, "clips in the random sample");
    grad->add_option("--tokens", grad_tokens, "text tokens in the random sample");
    grad->add_option("--tolerance", tolerance, "maximum relative error");

    auto* bench = app.add_subcommand("bench-attn", "multiply-accumulate scaling of bottleneck vs full fusion");
    add_common(bench, bench_o, "write the table as JSON");
    bench->add_option("--lengths", lengths, "clip counts to measure")->expected(1, -1);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e);
        }
        std::cerr << "error: kind=usage message=\"" << escape(e.what()) << "\"\n";
        return 1;
    }

    try {
        for (const CommonOptions* o : {&synth_o, &train_o, &eval_o, &predict_o, &grad_o, &bench_o}) {
            if (o->verbose) {
                set_log_level(LogLevel::info);
            }
        }
        if (synth->parsed()) {
            return run_synth(synth_o);
        }
        if (train_cmd->parsed()) {
            return run_train(train_o, train_data);
        }
        if (eval->parsed()) {
            return run_eval(eval_o, eval_data, eval_ckpt, eval_preds, eval_task);
        }
        if (predict_cmd->parsed()) {
            return run_predict(predict_o, predict_data, predict_ckpt);
        }
        if (grad->parsed()) {
            return run_gradcheck(grad_o, probes, grad_clips, grad_tokens, tolerance);
        }
        if (bench->parsed()) {
            return run_bench(bench_o, lengths);
        }
    } catch (const Error& e) {
        std::cerr << "error: kind=" << e.kind() << " message=\"" << escape(e.what()) << "\"\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: kind=internal message=\"" << escape(e.what()) << "\"\n";
        return 1;
    }
    return 1;
}
