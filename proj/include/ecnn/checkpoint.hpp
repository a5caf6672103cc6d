#pragma once

#include <string>
#include <string_view>

#include "ecnn/architectures.hpp"

namespace ecnn {

/// Binary little-endian container:
///   "ENSB", u32 version, metadata text (u32 length + UTF-8),
///   u32 count + parameters, u32 count + buffers.
/// Each tensor entry is u32 name length, name, u32 rank, u64 extents, f64 values.
std::string encode_checkpoint(const Model& model);
Model decode_checkpoint(std::string_view bytes, const ArchSpec& spec);

void save_checkpoint(const Model& model, const std::string& path);
/// Throws IncompatibleCheckpoint when `spec` differs from the stored metadata
/// and CorruptCheckpoint on a malformed or truncated file.
Model load_checkpoint(const std::string& path, const ArchSpec& spec);

/// Metadata block as stored in a checkpoint for this spec.
std::string checkpoint_metadata(const ArchSpec& spec);

}  // namespace ecnn
