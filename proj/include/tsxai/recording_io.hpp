#pragma once

#include <filesystem>
#include <string>

#include "tsxai/signal.hpp"

namespace tsxai {

/// Writes `<stem>.tsrc` (binary: "TSRC", u32 version, u32 C, u32 N, f64 fs, C*N f64 row-major,
/// all little-endian) and `<stem>.json` ({subject_id, label, channel_names}).
/// Returns the two written paths.
std::pair<std::filesystem::path, std::filesystem::path> write_recording(const Recording& recording,
                                                                        const std::filesystem::path& stem);

/// Reads a recording from its `.tsrc` path; the sidecar is the same stem with `.json`.
Recording read_recording(const std::filesystem::path& tsrc_path);

/// CSV with a header row of channel names and one row per sample.
Recording read_recording_csv(const std::filesystem::path& csv_path, std::string subject_id, ClassLabel label,
                             double sample_rate = 200.0);

}  // namespace tsxai
