#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "umt/rng.hpp"
#include "umt/tensor.hpp"

namespace umt {

enum class Modality { visual, audio, text };

std::string_view modality_name(Modality modality);

/// length x dim matrix of pre-extracted features for one modality.
struct FeatureSequence {
    Modality modality = Modality::visual;
    std::size_t length = 0;
    std::size_t dim = 0;
    std::vector<double> values;  // row-major, length * dim

    double at(std::size_t row, std::size_t col) const { return values[row * dim + col]; }
    Tensor to_tensor() const;
};

/// Ground-truth moment in 0-based clip coordinates: clip i spans [i, i + 1).
struct MomentAnnotation {
    double center = 0.0;
    double window = 0.0;

    double start() const { return center - window / 2.0; }
    double end() const { return center + window / 2.0; }
};

struct VideoSample {
    std::string id;
    std::optional<FeatureSequence> visual;
    std::optional<FeatureSequence> audio;
    std::optional<FeatureSequence> text;
    std::vector<MomentAnnotation> moments;
    std::vector<double> saliency;        // per clip, in [0, 1]
    std::vector<std::uint8_t> positives; // per clip highlight flag used by the HD metrics
    double clip_seconds = 2.0;

    /// N_v, taken from whichever of visual/audio is present.
    std::size_t num_clips() const;
};

/// Throws DataError (naming the sample id) when any VideoSample invariant fails.
void validate_sample(const VideoSample& sample);

// ---------------------------------------------------------------------------
// Binary matrix files: little-endian uint32 length, uint32 dim, then
// length * dim IEEE-754 float32 values in row-major order.

struct MatrixFile {
    std::size_t length = 0;
    std::size_t dim = 0;
    std::vector<float> values;
};

MatrixFile read_matrix_file(const std::filesystem::path& path);
void write_matrix_file(const std::filesystem::path& path, std::size_t length, std::size_t dim,
                       const std::vector<double>& values);

// ---------------------------------------------------------------------------
// Manifest (JSON). Top level:
//   {"format": "umt-manifest", "version": 1, "coordinate_base": 0,
//    "saliency_positive_threshold": 0.5, "samples": [...]}
// Each sample: {id, visual_path?, audio_path?, text_path?,
//               moments: [{center, window}], saliency: [...], clip_seconds,
//               positives?: [0/1 ...]}
// Paths are relative to the manifest's directory. With coordinate_base 1,
// moment centers are shifted to 0-based once, here.

inline constexpr double kDefaultPositiveThreshold = 0.5;

std::vector<VideoSample> load_dataset(const std::filesystem::path& manifest_path);

/// Writes one binary file per modality per sample under `directory` plus
/// `directory/manifest.json`. Returns the manifest path.
std::filesystem::path write_dataset(const std::vector<VideoSample>& samples,
                                    const std::filesystem::path& directory,
                                    double positive_threshold = kDefaultPositiveThreshold);

// ---------------------------------------------------------------------------

/// Generator parameters for desk-scale datasets with planted moments.
struct SynthSpec {
    std::size_t videos = 8;
    std::size_t clips = 16;
    std::size_t visual_dim = 16;
    std::size_t audio_dim = 8;
    std::size_t text_dim = 16;
    std::size_t text_tokens = 4;
    std::size_t min_moments = 1;
    std::size_t max_moments = 2;
    std::size_t min_window = 2;
    std::size_t max_window = 6;
    std::size_t min_gap = 1;          // background clips required between moments
    std::size_t distractors = 0;      // off-query segments carrying another concept
    double snr = 2.0;                 // per-dimension signal amplitude over unit noise
    double attenuation_min = 0.6;     // in-moment saliency drawn from [attenuation_min, 1]
    double text_noise = 0.3;
    double clip_seconds = 2.0;
    bool with_visual = true;
    bool with_audio = true;
    bool with_text = true;
    bool allow_empty = false;         // permits min_moments == 0

    void validate() const;
};

std::vector<VideoSample> synthesize_dataset(const SynthSpec& spec, Rng& rng);

}  // namespace umt
