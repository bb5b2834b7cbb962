#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace tsxai {

inline constexpr std::size_t kMontageChannels = 19;

/// Canonical 10-20 channel order used by every profile in the project.
inline constexpr std::array<std::string_view, kMontageChannels> kChannelNames = {
    "Fp1", "Fp2", "F7", "F3", "Fz", "F4", "F8", "T3", "C3", "Cz",
    "C4",  "T4",  "T5", "P3", "Pz", "P4", "T6", "O1", "O2"};

std::vector<std::string> default_channel_names();

/// Index of a channel name in `names`; throws std::invalid_argument when absent.
std::size_t channel_index(std::string_view name, const std::vector<std::string>& names);
std::size_t channel_index(std::string_view name);

struct Region {
  std::string name;
  std::vector<std::size_t> channels;
};

using RegionMap = std::vector<Region>;

/// Frontal, Central, Temporal, Parietal, Occipital over the canonical order.
RegionMap default_regions();
/// Throws std::invalid_argument unless every channel < n_channels belongs to exactly one non-empty region.
void validate_regions(const RegionMap& regions, std::size_t n_channels);

struct AdjacencyGraph {
  std::vector<std::string> vertices;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

/// 36-edge nearest-neighbour graph of the 19-channel montage.
AdjacencyGraph default_adjacency();
/// Builds a graph from "A-B" name pairs; rejects unknown channels, self loops and duplicates.
AdjacencyGraph make_adjacency(std::vector<std::string> vertices,
                              const std::vector<std::pair<std::string, std::string>>& edges);

/// Planar scalp coordinates (nose up, unit head radius) for topographic plots.
struct ScalpPoint {
  double x, y;
};
std::array<ScalpPoint, kMontageChannels> default_scalp_coordinates();

}  // namespace tsxai
