#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "umt/model.hpp"

namespace umt {

/// Binary checkpoint layout (little-endian):
///   magic "UMTCKPT1", uint32 version,
///   uint64 config length, config text (model.* keys),
///   uint64 init seed, uint32 tensor count,
///   per tensor: uint32 name length, name, uint32 rank, uint64 dims[rank],
///               float64 values[prod(dims)].
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes to a sibling temporary file and renames it over `path`.
void save_checkpoint(const UmtModel& model, const std::filesystem::path& path);

/// Rebuilds the model from the stored config and copies every tensor in.
/// Throws DataError on a version mismatch, a truncated file, or a tensor
/// whose name or shape disagrees with the model built from the config.
std::unique_ptr<UmtModel> load_checkpoint(const std::filesystem::path& path);

}  // namespace umt
