#include "umt/config.hpp"

#include <array>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <type_traits>

#include "umt/error.hpp"

namespace umt {

namespace {

constexpr std::array<std::string_view, 5> kGroups = {"model", "loss", "train", "synth", "decode"};

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* expected) {
    throw ConfigError("key '" + key + "': cannot parse '" + value + "' as " + expected);
}

void parse_value(const std::string& key, const std::string& text, double& out) {
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        bad_value(key, text, "a number");
    }
}

template <typename Int>
    requires std::is_unsigned_v<Int>
void parse_value(const std::string& key, const std::string& text, Int& out) {
    const char* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        bad_value(key, text, "a non-negative integer");
    }
}

void parse_value(const std::string& key, const std::string& text, bool& out) {
    if (text == "true" || text == "1") {
        out = true;
    } else if (text == "false" || text == "0") {
        out = false;
    } else {
        bad_value(key, text, "a boolean");
    }
}

void parse_value(const std::string&, const std::string& text, FusionMerge& out) { out = parse_fusion_merge(text); }
void parse_value(const std::string&, const std::string& text, Task& out) { out = parse_task(text); }
void parse_value(const std::string&, const std::string& text, CenterMode& out) { out = parse_center_mode(text); }

std::string format_value(double v) {
    std::array<char, 32> buf{};
    const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

template <typename Int>
    requires std::is_unsigned_v<Int>
std::string format_value(Int v) {
    return std::to_string(v);
}

std::string format_value(bool v) { return v ? "true" : "false"; }
std::string format_value(FusionMerge v) { return fusion_merge_name(v); }
std::string format_value(Task v) { return task_name(v); }

template <typename F>
void visit_fields(ModelConfig& c, F&& f) {
    f("model_dim", c.model_dim);
    f("heads", c.heads);
    f("uni_layers", c.uni_layers);
    f("cross_layers", c.cross_layers);
    f("decoder_layers", c.decoder_layers);
    f("generator_layers", c.generator_layers);
    f("bottleneck_tokens", c.bottleneck_tokens);
    f("max_length", c.max_length);
    f("dropout", c.dropout);
    f("pre_dropout_av", c.pre_dropout_av);
    f("pre_dropout_text", c.pre_dropout_text);
    f("use_visual", c.use_visual);
    f("use_audio", c.use_audio);
    f("use_text", c.use_text);
    f("visual_dim", c.visual_dim);
    f("audio_dim", c.audio_dim);
    f("text_dim", c.text_dim);
    f("scale_scores", c.scale_scores);
    f("positive_window", c.positive_window);
    f("merge", c.merge);
    f("share_compress_weights", c.share_compress_weights);
}

template <typename F>
void visit_fields(LossWeights& w, F&& f) {
    f("saliency", w.saliency);
    f("center", w.center);
    f("window", w.window);
    f("offset", w.offset);
    f("alpha", w.alpha);
    f("gamma", w.gamma);
    f("mu", w.mu);
    f("rho", w.rho);
}

template <typename F>
void visit_fields(TrainConfig& t, F&& f) {
    f("learning_rate", t.learning_rate);
    f("weight_decay", t.weight_decay);
    f("beta1", t.beta1);
    f("beta2", t.beta2);
    f("epsilon", t.epsilon);
    f("batch_size", t.batch_size);
    f("epochs", t.epochs);
    f("seed", t.seed);
    f("task", t.task);
    f("checkpoint_every", t.checkpoint_every);
    f("clip_gradients", t.clip_gradients);
    f("clip_norm", t.clip_norm);
}

template <typename F>
void visit_fields(SynthSpec& s, F&& f) {
    f("videos", s.videos);
    f("clips", s.clips);
    f("visual_dim", s.visual_dim);
    f("audio_dim", s.audio_dim);
    f("text_dim", s.text_dim);
    f("text_tokens", s.text_tokens);
    f("min_moments", s.min_moments);
    f("max_moments", s.max_moments);
    f("min_window", s.min_window);
    f("max_window", s.max_window);
    f("min_gap", s.min_gap);
    f("distractors", s.distractors);
    f("snr", s.snr);
    f("attenuation_min", s.attenuation_min);
    f("text_noise", s.text_noise);
    f("clip_seconds", s.clip_seconds);
    f("with_visual", s.with_visual);
    f("with_audio", s.with_audio);
    f("with_text", s.with_text);
    f("allow_empty", s.allow_empty);
}

template <typename F>
void visit_fields(DecodeOptions& d, F&& f) {
    f("mode", d.mode);
    f("top_k", d.top_k);
}

template <typename T>
void apply_group(const KeyedConfig& config, const std::string& group, T& target) {
    std::set<std::string> known;
    visit_fields(target, [&](const char* name, auto& field) {
        const std::string key = group + "." + name;
        known.insert(key);
        if (const auto value = config.get(key)) {
            parse_value(key, *value, field);
        }
    });
    const std::string prefix = group + ".";
    for (const auto& [key, value] : config.entries()) {
        if (key.rfind(prefix, 0) == 0 && known.count(key) == 0) {
            throw ConfigError("unknown configuration key '" + key + "'");
        }
    }
}

template <typename T>
void export_group(KeyedConfig& out, const std::string& group, T target) {
    visit_fields(target, [&](const char* name, auto& field) { out.set(group + "." + name, format_value(field)); });
}

}  // namespace

KeyedConfig KeyedConfig::parse(std::string_view text, const std::string& source) {
    KeyedConfig config;
    std::istringstream in{std::string(text)};
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        const std::string where = source + ":" + std::to_string(line_no);
        std::string line = raw.substr(0, raw.find('#'));
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(where + ": expected 'key = value'");
        }
        const std::string key = trim(std::string_view(line).substr(0, eq));
        const std::string value = trim(std::string_view(line).substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw ConfigError(where + ": empty key or value");
        }
        const std::string group = key.substr(0, key.find('.'));
        if (key.find('.') == std::string::npos ||
            std::find(kGroups.begin(), kGroups.end(), group) == kGroups.end()) {
            throw ConfigError(where + ": key '" + key + "' is not in a known group (model, loss, train, synth, decode)");
        }
        if (config.contains(key)) {
            throw ConfigError(where + ": duplicate key '" + key + "'");
        }
        config.set(key, value);
    }
    return config;
}

KeyedConfig KeyedConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config file " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return parse(buffer.str(), path.string());
}

void KeyedConfig::set(const std::string& key, const std::string& value) { values_[key] = value; }

std::optional<std::string> KeyedConfig::get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::string KeyedConfig::to_text() const {
    std::string out;
    for (const auto& [key, value] : values_) {
        out += key + " = " + value + "\n";
    }
    return out;
}

void apply_config(const KeyedConfig& config, ModelConfig& model) { apply_group(config, "model", model); }
void apply_config(const KeyedConfig& config, LossWeights& weights) { apply_group(config, "loss", weights); }

void apply_config(const KeyedConfig& config, TrainConfig& train) {
    apply_group(config, "train", train);
    apply_group(config, "loss", train.loss);
}

void apply_config(const KeyedConfig& config, SynthSpec& spec) { apply_group(config, "synth", spec); }
void apply_config(const KeyedConfig& config, DecodeOptions& options) { apply_group(config, "decode", options); }

KeyedConfig to_keyed(const ModelConfig& model) {
    KeyedConfig out;
    export_group(out, "model", model);
    return out;
}

KeyedConfig to_keyed(const TrainConfig& train) {
    KeyedConfig out;
    export_group(out, "train", train);
    export_group(out, "loss", train.loss);
    return out;
}

}  // namespace umt
