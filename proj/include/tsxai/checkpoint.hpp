#pragma once

#include <filesystem>
#include <iosfwd>

#include "tsxai/training.hpp"

namespace tsxai {

/// Binary "ITCK" checkpoint: little-endian config, normalization, named float64 tensors,
/// fold id and best validation loss. Round-trips bit-exactly.
void write_checkpoint(const TrainedModel& model, std::ostream& out);
void write_checkpoint(const TrainedModel& model, const std::filesystem::path& path);

/// Throws DataError on a truncated, corrupt or incompatible file.
TrainedModel read_checkpoint(std::istream& in);
TrainedModel read_checkpoint(const std::filesystem::path& path);

}  // namespace tsxai
