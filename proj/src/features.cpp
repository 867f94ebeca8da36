#include "umt/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "json.hpp"
#include "umt/error.hpp"

namespace umt {

namespace {

using nlohmann::json;

std::uint32_t to_little_endian(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) {
        return ((v & 0xffU) << 24) | ((v & 0xff00U) << 8) | ((v >> 8) & 0xff00U) | (v >> 24);
    }
    return v;
}

void check_sequence(const VideoSample& sample, const FeatureSequence& seq, Modality expected) {
    const std::string where = "sample '" + sample.id + "' " + std::string(modality_name(expected));
    if (seq.modality != expected) {
        throw DataError(where + ": modality tag mismatch");
    }
    if (seq.length == 0 || seq.dim == 0) {
        throw DataError(where + ": empty feature sequence");
    }
    if (seq.values.size() != seq.length * seq.dim) {
        throw DataError(where + ": holds " + std::to_string(seq.values.size()) + " values, expected " +
                        std::to_string(seq.length * seq.dim));
    }
    if (!std::all_of(seq.values.begin(), seq.values.end(), [](double v) { return std::isfinite(v); })) {
        throw DataError(where + ": non-finite feature value");
    }
}

FeatureSequence load_sequence(const std::filesystem::path& base, const std::string& relative, Modality modality,
                              const std::string& id) {
    const std::filesystem::path path = base / relative;
    MatrixFile file;
    try {
        file = read_matrix_file(path);
    } catch (const IoError& e) {
        throw IoError("sample '" + id + "': " + e.what());
    } catch (const DataError& e) {
        throw DataError("sample '" + id + "': " + e.what());
    }
    FeatureSequence seq;
    seq.modality = modality;
    seq.length = file.length;
    seq.dim = file.dim;
    seq.values.assign(file.values.begin(), file.values.end());
    return seq;
}

std::vector<int> positive_flags_as_ints(const std::vector<std::uint8_t>& flags) {
    return {flags.begin(), flags.end()};
}

// i.i.d. standard-normal entries.
std::vector<double> gaussian_vector(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    for (double& x : v) {
        x = rng.normal();
    }
    return v;
}

std::vector<double> unit(std::vector<double> v) {
    double norm = 0.0;
    for (double x : v) {
        norm += x * x;
    }
    norm = std::sqrt(norm);
    for (double& x : v) {
        x /= norm;
    }
    return v;
}

struct Projection {
    std::size_t out = 0;
    std::size_t in = 0;
    std::vector<double> weights;  // out x in

    // Unit-RMS direction in the output space for a concept vector.
    std::vector<double> direction(const std::vector<double>& topic) const {
        std::vector<double> d(out, 0.0);
        for (std::size_t i = 0; i < out; ++i) {
            for (std::size_t j = 0; j < in; ++j) {
                d[i] += weights[i * in + j] * topic[j];
            }
        }
        d = unit(std::move(d));
        const double rms_scale = std::sqrt(static_cast<double>(out));
        for (double& x : d) {
            x *= rms_scale;
        }
        return d;
    }
};

Projection random_projection(std::size_t out, std::size_t in, Rng& rng) {
    Projection p{out, in, gaussian_vector(out * in, rng)};
    return p;
}

struct Segment {
    std::size_t start = 0;
    std::size_t length = 0;
};

bool overlaps(const Segment& a, const Segment& b, std::size_t gap) {
    return a.start < b.start + b.length + gap && b.start < a.start + a.length + gap;
}

std::vector<Segment> place_segments(std::size_t count, const SynthSpec& spec, std::vector<Segment> taken,
                                    Rng& rng, const std::string& id) {
    std::vector<Segment> placed;
    for (std::size_t n = 0; n < count; ++n) {
        bool ok = false;
        for (int attempt = 0; attempt < 1000 && !ok; ++attempt) {
            const std::size_t span = spec.max_window - spec.min_window + 1;
            Segment s;
            s.length = spec.min_window + rng.uniform_index(span);
            if (s.length > spec.clips) {
                continue;
            }
            s.start = rng.uniform_index(spec.clips - s.length + 1);
            ok = std::none_of(taken.begin(), taken.end(),
                              [&](const Segment& t) { return overlaps(s, t, spec.min_gap); });
            if (ok) {
                taken.push_back(s);
                placed.push_back(s);
            }
        }
        if (!ok) {
            throw ConfigError("synthesize_dataset: cannot place " + std::to_string(count) + " segments in " +
                              std::to_string(spec.clips) + " clips for video '" + id + "'");
        }
    }
    return placed;
}

FeatureSequence make_clip_features(Modality modality, std::size_t clips, std::size_t dim,
                                   const std::vector<Segment>& moments, const std::vector<double>& attenuation,
                                   const std::vector<double>& direction, const std::vector<Segment>& distractors,
                                   const std::vector<std::vector<double>>& distractor_directions, double snr,
                                   Rng& rng) {
    FeatureSequence seq;
    seq.modality = modality;
    seq.length = clips;
    seq.dim = dim;
    seq.values = gaussian_vector(clips * dim, rng);
    auto plant = [&](const Segment& s, const std::vector<double>& dir, const std::vector<double>* gain) {
        for (std::size_t i = s.start; i < s.start + s.length; ++i) {
            const double g = gain ? (*gain)[i] : 1.0;
            for (std::size_t j = 0; j < dim; ++j) {
                seq.values[i * dim + j] += snr * g * dir[j];
            }
        }
    };
    for (const Segment& s : moments) {
        plant(s, direction, &attenuation);
    }
    for (std::size_t k = 0; k < distractors.size(); ++k) {
        plant(distractors[k], distractor_directions[k], nullptr);
    }
    for (double& v : seq.values) {
        v = static_cast<double>(static_cast<float>(v));
    }
    return seq;
}

}  // namespace

std::string_view modality_name(Modality modality) {
    switch (modality) {
        case Modality::visual:
            return "visual";
        case Modality::audio:
            return "audio";
        case Modality::text:
            return "text";
    }
    return "unknown";
}

Tensor FeatureSequence::to_tensor() const { return Tensor::from({length, dim}, values); }

std::size_t VideoSample::num_clips() const {
    if (visual) {
        return visual->length;
    }
    if (audio) {
        return audio->length;
    }
    return 0;
}

void validate_sample(const VideoSample& sample) {
    const std::string where = "sample '" + sample.id + "'";
    if (!sample.visual && !sample.audio) {
        throw DataError(where + ": needs visual or audio features");
    }
    if (sample.visual) {
        check_sequence(sample, *sample.visual, Modality::visual);
    }
    if (sample.audio) {
        check_sequence(sample, *sample.audio, Modality::audio);
    }
    if (sample.text) {
        check_sequence(sample, *sample.text, Modality::text);
    }
    if (sample.visual && sample.audio && sample.visual->length != sample.audio->length) {
        throw DataError(where + ": visual length " + std::to_string(sample.visual->length) +
                        " and audio length " + std::to_string(sample.audio->length) + " are not aligned");
    }
    const std::size_t n = sample.num_clips();
    if (sample.saliency.size() != n) {
        throw DataError(where + ": saliency has " + std::to_string(sample.saliency.size()) +
                        " entries, expected " + std::to_string(n));
    }
    for (double s : sample.saliency) {
        if (!std::isfinite(s) || s < 0.0 || s > 1.0) {
            throw DataError(where + ": saliency values must lie in [0, 1]");
        }
    }
    if (sample.positives.size() != n) {
        throw DataError(where + ": positive flags have " + std::to_string(sample.positives.size()) +
                        " entries, expected " + std::to_string(n));
    }
    if (!(sample.clip_seconds > 0.0) || !std::isfinite(sample.clip_seconds)) {
        throw DataError(where + ": clip_seconds must be positive");
    }
    for (const MomentAnnotation& m : sample.moments) {
        if (!std::isfinite(m.center) || !std::isfinite(m.window) || !(m.window > 0.0)) {
            throw DataError(where + ": moment window must be positive and finite");
        }
        if (!(m.start() < static_cast<double>(n) && m.end() > 0.0)) {
            throw DataError(where + ": moment centred at " + std::to_string(m.center) +
                            " lies outside the video");
        }
    }
}

MatrixFile read_matrix_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open feature file " + path.string());
    }
    std::uint32_t header[2] = {0, 0};
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in) {
        throw DataError("truncated header in " + path.string());
    }
    MatrixFile file;
    file.length = to_little_endian(header[0]);
    file.dim = to_little_endian(header[1]);
    file.values.resize(file.length * file.dim);
    std::vector<std::uint32_t> raw(file.values.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (!in) {
        throw DataError("truncated payload in " + path.string());
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw DataError("trailing bytes in " + path.string());
    }
    for (std::size_t i = 0; i < raw.size(); ++i) {
        file.values[i] = std::bit_cast<float>(to_little_endian(raw[i]));
    }
    return file;
}

void write_matrix_file(const std::filesystem::path& path, std::size_t length, std::size_t dim,
                       const std::vector<double>& values) {
    if (values.size() != length * dim) {
        throw ShapeError("write_matrix_file: " + std::to_string(values.size()) + " values for " +
                         std::to_string(length) + " x " + std::to_string(dim));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write feature file " + path.string());
    }
    const std::uint32_t header[2] = {to_little_endian(static_cast<std::uint32_t>(length)),
                                     to_little_endian(static_cast<std::uint32_t>(dim))};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    std::vector<std::uint32_t> raw(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) {
        raw[i] = to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(values[i])));
    }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size() * 4));
    if (!out) {
        throw IoError("failed writing " + path.string());
    }
}

std::vector<VideoSample> load_dataset(const std::filesystem::path& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) {
        throw IoError("cannot open manifest " + manifest_path.string());
    }
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw DataError("manifest " + manifest_path.string() + " is not valid JSON: " + e.what());
    }
    const json* samples_node = &doc;
    double threshold = kDefaultPositiveThreshold;
    double coordinate_base = 0.0;
    if (doc.is_object()) {
        if (!doc.contains("samples") || !doc["samples"].is_array()) {
            throw DataError("manifest " + manifest_path.string() + " has no 'samples' array");
        }
        samples_node = &doc["samples"];
        threshold = doc.value("saliency_positive_threshold", kDefaultPositiveThreshold);
        coordinate_base = doc.value("coordinate_base", 0.0);
        if (coordinate_base != 0.0 && coordinate_base != 1.0) {
            throw DataError("manifest coordinate_base must be 0 or 1");
        }
    } else if (!doc.is_array()) {
        throw DataError("manifest " + manifest_path.string() + " must be an object or an array");
    }
    const std::filesystem::path base = manifest_path.parent_path();
    std::vector<VideoSample> samples;
    for (const json& entry : *samples_node) {
        VideoSample sample;
        try {
            sample.id = entry.at("id").get<std::string>();
            if (entry.contains("visual_path")) {
                sample.visual = load_sequence(base, entry["visual_path"].get<std::string>(), Modality::visual,
                                              sample.id);
            }
            if (entry.contains("audio_path")) {
                sample.audio = load_sequence(base, entry["audio_path"].get<std::string>(), Modality::audio,
                                             sample.id);
            }
            if (entry.contains("text_path")) {
                sample.text = load_sequence(base, entry["text_path"].get<std::string>(), Modality::text,
                                            sample.id);
            }
            for (const json& m : entry.value("moments", json::array())) {
                sample.moments.push_back(
                    {m.at("center").get<double>() - coordinate_base, m.at("window").get<double>()});
            }
            sample.saliency = entry.at("saliency").get<std::vector<double>>();
            sample.clip_seconds = entry.at("clip_seconds").get<double>();
            if (entry.contains("positives")) {
                for (const json& p : entry["positives"]) {
                    sample.positives.push_back(p.is_boolean() ? static_cast<std::uint8_t>(p.get<bool>())
                                                              : static_cast<std::uint8_t>(p.get<int>() != 0));
                }
            } else {
                for (double s : sample.saliency) {
                    sample.positives.push_back(s >= threshold ? 1 : 0);
                }
            }
        } catch (const json::exception& e) {
            throw DataError("sample '" + sample.id + "': malformed manifest entry: " + e.what());
        }
        validate_sample(sample);
        samples.push_back(std::move(sample));
    }
    return samples;
}

std::filesystem::path write_dataset(const std::vector<VideoSample>& samples, const std::filesystem::path& directory,
                                    double positive_threshold) {
    std::filesystem::create_directories(directory);
    json doc;
    doc["format"] = "umt-manifest";
    doc["version"] = 1;
    doc["coordinate_base"] = 0;
    doc["saliency_positive_threshold"] = positive_threshold;
    doc["samples"] = json::array();
    for (std::size_t k = 0; k < samples.size(); ++k) {
        const VideoSample& s = samples[k];
        validate_sample(s);
        json entry;
        entry["id"] = s.id;
        const std::string stem = "sample_" + std::to_string(k);
        auto write_seq = [&](const std::optional<FeatureSequence>& seq, const char* key) {
            if (!seq) {
                return;
            }
            const std::string name = stem + "_" + std::string(modality_name(seq->modality)) + ".bin";
            write_matrix_file(directory / name, seq->length, seq->dim, seq->values);
            entry[key] = name;
        };
        write_seq(s.visual, "visual_path");
        write_seq(s.audio, "audio_path");
        write_seq(s.text, "text_path");
        entry["moments"] = json::array();
        for (const MomentAnnotation& m : s.moments) {
            entry["moments"].push_back({{"center", m.center}, {"window", m.window}});
        }
        entry["saliency"] = s.saliency;
        entry["positives"] = positive_flags_as_ints(s.positives);
        entry["clip_seconds"] = s.clip_seconds;
        doc["samples"].push_back(std::move(entry));
    }
    const std::filesystem::path manifest = directory / "manifest.json";
    std::ofstream out(manifest, std::ios::trunc);
    if (!out) {
        throw IoError("cannot write manifest " + manifest.string());
    }
    out << doc.dump(2) << '\n';
    return manifest;
}

void SynthSpec::validate() const {
    if (videos == 0) {
        throw ConfigError("synth: videos must be positive");
    }
    if (clips < 2) {
        throw ConfigError("synth: clips must be at least 2");
    }
    if (!with_visual && !with_audio) {
        throw ConfigError("synth: at least one of visual/audio is required");
    }
    if ((with_visual && visual_dim == 0) || (with_audio && audio_dim == 0) ||
        (with_text && (text_dim == 0 || text_tokens == 0))) {
        throw ConfigError("synth: feature dimensions must be positive");
    }
    if (min_moments > max_moments) {
        throw ConfigError("synth: min_moments exceeds max_moments");
    }
    if (min_moments == 0 && !allow_empty) {
        throw ConfigError("synth: zero-moment videos require allow_empty");
    }
    if (max_moments == 0 && distractors == 0 && !allow_empty) {
        throw ConfigError("synth: max_moments must be positive");
    }
    if (min_window == 0 || min_window > max_window || max_window > clips) {
        throw ConfigError("synth: need 1 <= min_window <= max_window <= clips");
    }
    if (!(snr >= 0.0) || !(attenuation_min > 0.0 && attenuation_min <= 1.0) || !(clip_seconds > 0.0) ||
        !(text_noise >= 0.0)) {
        throw ConfigError("synth: snr >= 0, attenuation_min in (0, 1], clip_seconds > 0 required");
    }
}

std::vector<VideoSample> synthesize_dataset(const SynthSpec& spec, Rng& rng) {
    spec.validate();
    const std::size_t concept_dim = spec.with_text ? spec.text_dim : 16;
    const Projection to_visual = random_projection(spec.visual_dim, concept_dim, rng);
    const Projection to_audio = random_projection(spec.audio_dim, concept_dim, rng);

    std::vector<VideoSample> samples;
    samples.reserve(spec.videos);
    for (std::size_t v = 0; v < spec.videos; ++v) {
        VideoSample sample;
        sample.id = "synth_" + std::to_string(v);
        sample.clip_seconds = spec.clip_seconds;

        const std::vector<double> concept_vec = unit(gaussian_vector(concept_dim, rng));
        const std::size_t n_moments = spec.min_moments + rng.uniform_index(spec.max_moments - spec.min_moments + 1);
        std::vector<Segment> moments = place_segments(n_moments, spec, {}, rng, sample.id);
        std::sort(moments.begin(), moments.end(), [](const Segment& a, const Segment& b) { return a.start < b.start; });
        const std::vector<Segment> distractors = place_segments(spec.distractors, spec, moments, rng, sample.id);
        std::vector<std::vector<double>> distractor_concepts;
        for (std::size_t k = 0; k < distractors.size(); ++k) {
            distractor_concepts.push_back(unit(gaussian_vector(concept_dim, rng)));
        }

        std::vector<double> attenuation(spec.clips, 0.0);
        for (const Segment& s : moments) {
            for (std::size_t i = s.start; i < s.start + s.length; ++i) {
                attenuation[i] = static_cast<float>(rng.uniform(spec.attenuation_min, 1.0));
            }
            sample.moments.push_back({static_cast<double>(s.start) + static_cast<double>(s.length) / 2.0,
                                      static_cast<double>(s.length)});
        }
        sample.saliency = attenuation;
        for (double s : sample.saliency) {
            sample.positives.push_back(s >= kDefaultPositiveThreshold ? 1 : 0);
        }

        auto directions_for = [&](const Projection& p) {
            std::vector<std::vector<double>> dirs;
            for (const auto& c : distractor_concepts) {
                dirs.push_back(p.direction(c));
            }
            return dirs;
        };
        if (spec.with_visual) {
            sample.visual = make_clip_features(Modality::visual, spec.clips, spec.visual_dim, moments, attenuation,
                                               to_visual.direction(concept_vec), distractors,
                                               directions_for(to_visual), spec.snr, rng);
        }
        if (spec.with_audio) {
            sample.audio = make_clip_features(Modality::audio, spec.clips, spec.audio_dim, moments, attenuation,
                                              to_audio.direction(concept_vec), distractors,
                                              directions_for(to_audio), spec.snr, rng);
        }
        if (spec.with_text) {
            FeatureSequence text;
            text.modality = Modality::text;
            text.length = spec.text_tokens;
            text.dim = spec.text_dim;
            text.values.resize(spec.text_tokens * spec.text_dim);
            const double rms_scale = std::sqrt(static_cast<double>(spec.text_dim));
            for (std::size_t t = 0; t < spec.text_tokens; ++t) {
                for (std::size_t j = 0; j < spec.text_dim; ++j) {
                    const double value = concept_vec[j] * rms_scale + spec.text_noise * rng.normal();
                    text.values[t * spec.text_dim + j] = static_cast<float>(value);
                }
            }
            sample.text = std::move(text);
        }
        validate_sample(sample);
        samples.push_back(std::move(sample));
    }
    return samples;
}

}  // namespace umt
