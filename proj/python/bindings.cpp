// Python bindings for the core library. Sequences cross the boundary as
// float64 NumPy arrays; reports cross as JSON text.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "umt/checkpoint.hpp"
#include "umt/decoding.hpp"
#include "umt/error.hpp"
#include "umt/features.hpp"
#include "umt/log.hpp"
#include "umt/metrics.hpp"
#include "umt/model.hpp"
#include "umt/trainer.hpp"

namespace py = pybind11;
using namespace umt;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array matrix_array(std::size_t rows, std::size_t cols, std::span<const double> values) {
    Array out({rows, cols});
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

Array vector_array(std::span<const double> values) {
    Array out(values.size());
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

std::optional<Array> features_array(const std::optional<FeatureSequence>& f) {
    if (!f) {
        return std::nullopt;
    }
    return matrix_array(f->length, f->dim, f->values);
}

std::optional<FeatureSequence> features_from(Modality modality, const std::optional<Array>& a) {
    if (!a) {
        return std::nullopt;
    }
    if (a->ndim() != 2) {
        throw ShapeError(std::string(modality_name(modality)) + " features must be a 2-d array");
    }
    FeatureSequence f{modality, static_cast<std::size_t>(a->shape(0)), static_cast<std::size_t>(a->shape(1)), {}};
    f.values.assign(a->data(), a->data() + a->size());
    return f;
}

py::dict raw_dict(const RawPredictions& raw) {
    py::dict d;
    d["saliency"] = vector_array(raw.saliency.data());
    d["heatmap"] = vector_array(raw.heatmap.data());
    d["window"] = vector_array(raw.window.data());
    d["offset"] = vector_array(raw.offset.data());
    return d;
}

py::dict record_dict(const PredictionRecord& r) {
    py::list moments;
    for (const MomentPrediction& m : r.moments) {
        moments.append(py::make_tuple(m.start, m.end, m.confidence));
    }
    py::dict d;
    d["id"] = r.id;
    d["clip_seconds"] = r.clip_seconds;
    d["moments"] = moments;
    d["saliency"] = vector_array(r.saliency);
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Joint moment retrieval and highlight detection over pre-extracted features";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    auto shape = py::register_exception<ShapeError>(m, "ShapeError", base.ptr());
    auto numeric = py::register_exception<NumericError>(m, "NumericError", base.ptr());
    auto state = py::register_exception<StateError>(m, "StateError", base.ptr());
    auto config = py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
    auto modality = py::register_exception<ModalityError>(m, "ModalityError", base.ptr());
    auto io = py::register_exception<IoError>(m, "IoError", base.ptr());
    (void)shape, (void)numeric, (void)state, (void)config, (void)data, (void)modality, (void)io;

    py::enum_<LogLevel>(m, "LogLevel")
        .value("debug", LogLevel::debug)
        .value("info", LogLevel::info)
        .value("warning", LogLevel::warning)
        .value("error", LogLevel::error)
        .value("silent", LogLevel::silent);
    m.def("set_log_level", &set_log_level);

    py::class_<SynthSpec>(m, "SynthSpec")
        .def(py::init<>())
        .def_readwrite("videos", &SynthSpec::videos)
        .def_readwrite("clips", &SynthSpec::clips)
        .def_readwrite("visual_dim", &SynthSpec::visual_dim)
        .def_readwrite("audio_dim", &SynthSpec::audio_dim)
        .def_readwrite("text_dim", &SynthSpec::text_dim)
        .def_readwrite("text_tokens", &SynthSpec::text_tokens)
        .def_readwrite("min_moments", &SynthSpec::min_moments)
        .def_readwrite("max_moments", &SynthSpec::max_moments)
        .def_readwrite("min_window", &SynthSpec::min_window)
        .def_readwrite("max_window", &SynthSpec::max_window)
        .def_readwrite("min_gap", &SynthSpec::min_gap)
        .def_readwrite("distractors", &SynthSpec::distractors)
        .def_readwrite("snr", &SynthSpec::snr)
        .def_readwrite("clip_seconds", &SynthSpec::clip_seconds)
        .def_readwrite("with_visual", &SynthSpec::with_visual)
        .def_readwrite("with_audio", &SynthSpec::with_audio)
        .def_readwrite("with_text", &SynthSpec::with_text);

    py::class_<VideoSample>(m, "VideoSample")
        .def(py::init<>())
        .def_readwrite("id", &VideoSample::id)
        .def_readwrite("clip_seconds", &VideoSample::clip_seconds)
        .def_readwrite("saliency", &VideoSample::saliency)
        .def_readwrite("positives", &VideoSample::positives)
        .def_property_readonly("num_clips", &VideoSample::num_clips)
        .def_property(
            "moments",
            [](const VideoSample& s) {
                std::vector<std::pair<double, double>> out;
                for (const auto& mo : s.moments) {
                    out.emplace_back(mo.center, mo.window);
                }
                return out;
            },
            [](VideoSample& s, const std::vector<std::pair<double, double>>& moments) {
                s.moments.clear();
                for (const auto& [center, window] : moments) {
                    s.moments.push_back({center, window});
                }
            },
            "(center, window) pairs in 0-based clip units")
        .def_property(
            "visual", [](const VideoSample& s) { return features_array(s.visual); },
            [](VideoSample& s, const std::optional<Array>& a) { s.visual = features_from(Modality::visual, a); })
        .def_property(
            "audio", [](const VideoSample& s) { return features_array(s.audio); },
            [](VideoSample& s, const std::optional<Array>& a) { s.audio = features_from(Modality::audio, a); })
        .def_property(
            "text", [](const VideoSample& s) { return features_array(s.text); },
            [](VideoSample& s, const std::optional<Array>& a) { s.text = features_from(Modality::text, a); })
        .def("validate", [](const VideoSample& s) { validate_sample(s); });

    m.def(
        "synthesize",
        [](const SynthSpec& spec, std::uint64_t seed) {
            Rng rng(seed);
            return synthesize_dataset(spec, rng);
        },
        py::arg("spec"), py::arg("seed") = 0);
    m.def("load_dataset", &load_dataset, py::arg("manifest"));
    m.def("write_dataset", &write_dataset, py::arg("samples"), py::arg("directory"),
          py::arg("positive_threshold") = kDefaultPositiveThreshold);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_readwrite("model_dim", &ModelConfig::model_dim)
        .def_readwrite("heads", &ModelConfig::heads)
        .def_readwrite("uni_layers", &ModelConfig::uni_layers)
        .def_readwrite("cross_layers", &ModelConfig::cross_layers)
        .def_readwrite("decoder_layers", &ModelConfig::decoder_layers)
        .def_readwrite("generator_layers", &ModelConfig::generator_layers)
        .def_readwrite("bottleneck_tokens", &ModelConfig::bottleneck_tokens)
        .def_readwrite("max_length", &ModelConfig::max_length)
        .def_readwrite("dropout", &ModelConfig::dropout)
        .def_readwrite("use_visual", &ModelConfig::use_visual)
        .def_readwrite("use_audio", &ModelConfig::use_audio)
        .def_readwrite("use_text", &ModelConfig::use_text)
        .def_readwrite("visual_dim", &ModelConfig::visual_dim)
        .def_readwrite("audio_dim", &ModelConfig::audio_dim)
        .def_readwrite("text_dim", &ModelConfig::text_dim)
        .def("validate", &ModelConfig::validate);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("learning_rate", &TrainConfig::learning_rate)
        .def_readwrite("weight_decay", &TrainConfig::weight_decay)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_property(
            "task", [](const TrainConfig& c) { return task_name(c.task); },
            [](TrainConfig& c, const std::string& name) { c.task = parse_task(name); });

    py::class_<UmtModel>(m, "Model")
        .def(py::init<ModelConfig, std::uint64_t>(), py::arg("config"), py::arg("seed") = 0)
        .def_property_readonly("config", &UmtModel::config)
        .def_property_readonly("num_parameters", [](const UmtModel& model) { return model.parameters().numel(); })
        .def(
            "forward", [](const UmtModel& model, const VideoSample& s) { return raw_dict(infer(model, s)); },
            "Inference-mode head outputs of one sample")
        .def(
            "predict",
            [](const UmtModel& model, const std::vector<VideoSample>& dataset, const std::string& mode,
               std::size_t top_k) {
                const DecodeOptions options{parse_center_mode(mode), top_k};
                py::list out;
                for (const PredictionRecord& r : predict(model, dataset, options)) {
                    out.append(record_dict(r));
                }
                return out;
            },
            py::arg("dataset"), py::arg("mode") = "all_clips", py::arg("top_k") = kDefaultTopK)
        .def("save", [](const UmtModel& model, const std::filesystem::path& path) { save_checkpoint(model, path); })
        .def_static("load", [](const std::filesystem::path& path) { return load_checkpoint(path); });

    m.def(
        "train",
        [](UmtModel& model, const std::vector<VideoSample>& dataset, const TrainConfig& config) {
            TrainResult result;
            {
                py::gil_scoped_release release;
                result = train(model, dataset, config);
            }
            std::vector<double> losses;
            for (const EpochRecord& e : result.epochs) {
                losses.push_back(e.mean_loss);
            }
            return losses;
        },
        py::arg("model"), py::arg("dataset"), py::arg("config"), "Trains in place; returns per-epoch mean loss");

    m.def(
        "evaluate_json",
        [](const UmtModel& model, const std::vector<VideoSample>& dataset, const std::string& task) {
            return report_to_json(evaluate(model, dataset, parse_task(task)));
        },
        py::arg("model"), py::arg("dataset"), py::arg("task") = "both");

    m.def(
        "temporal_iou",
        [](std::pair<double, double> a, std::pair<double, double> b) {
            return temporal_iou({a.first, a.second}, {b.first, b.second});
        },
        py::arg("a"), py::arg("b"));
}
