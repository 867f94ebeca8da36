#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "umt/features.hpp"
#include "umt/losses.hpp"
#include "umt/model.hpp"
#include "umt/trainer.hpp"

namespace umt {

/// Flat `key = value` configuration. Lines starting with '#' and blank lines
/// are ignored; trailing `# ...` comments are stripped. Keys are grouped by
/// a dotted prefix: model.*, loss.*, train.*, synth.*, decode.*.
class KeyedConfig {
public:
    /// Throws ConfigError (with the line number) on malformed lines, duplicate
    /// keys or keys outside the known groups.
    static KeyedConfig parse(std::string_view text, const std::string& source = "<config>");
    static KeyedConfig load(const std::filesystem::path& path);

    void set(const std::string& key, const std::string& value);
    std::optional<std::string> get(const std::string& key) const;
    bool contains(const std::string& key) const { return values_.count(key) != 0; }
    const std::map<std::string, std::string>& entries() const { return values_; }

    /// Canonical text form, one `key = value` per line in key order.
    std::string to_text() const;

private:
    std::map<std::string, std::string> values_;
};

/// Overwrite fields from the matching group; unknown keys in the group throw
/// ConfigError. Values are parsed strictly.
void apply_config(const KeyedConfig& config, ModelConfig& model);
void apply_config(const KeyedConfig& config, LossWeights& weights);
void apply_config(const KeyedConfig& config, TrainConfig& train);  // train.* and loss.*
void apply_config(const KeyedConfig& config, SynthSpec& spec);
void apply_config(const KeyedConfig& config, DecodeOptions& options);

/// Every field of the struct under its group prefix, losslessly formatted.
KeyedConfig to_keyed(const ModelConfig& model);
KeyedConfig to_keyed(const TrainConfig& train);

}  // namespace umt
