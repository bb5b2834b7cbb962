#include "tsxai/montage.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

namespace tsxai {

std::vector<std::string> default_channel_names() {
  return {kChannelNames.begin(), kChannelNames.end()};
}

std::size_t channel_index(std::string_view name, const std::vector<std::string>& names) {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::invalid_argument("unknown channel '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - names.begin());
}

std::size_t channel_index(std::string_view name) {
  const auto it = std::find(kChannelNames.begin(), kChannelNames.end(), name);
  if (it == kChannelNames.end()) throw std::invalid_argument("unknown channel '" + std::string(name) + "'");
  return static_cast<std::size_t>(it - kChannelNames.begin());
}

RegionMap default_regions() {
  auto make = [](std::string name, std::initializer_list<std::string_view> members) {
    Region r{std::move(name), {}};
    for (auto m : members) r.channels.push_back(channel_index(m));
    return r;
  };
  return {make("Frontal", {"Fp1", "Fp2", "F3", "F4", "F7", "F8", "Fz"}),
          make("Central", {"C3", "Cz", "C4"}),
          make("Temporal", {"T3", "T4", "T5", "T6"}),
          make("Parietal", {"P3", "Pz", "P4"}),
          make("Occipital", {"O1", "O2"})};
}

void validate_regions(const RegionMap& regions, std::size_t n_channels) {
  std::vector<int> seen(n_channels, 0);
  for (const Region& r : regions) {
    if (r.channels.empty()) throw std::invalid_argument("region '" + r.name + "' is empty");
    for (std::size_t c : r.channels) {
      if (c >= n_channels) throw std::invalid_argument("region '" + r.name + "' references an unknown channel");
      ++seen[c];
    }
  }
  for (std::size_t c = 0; c < n_channels; ++c) {
    if (seen[c] != 1) throw std::invalid_argument("channel " + std::to_string(c) + " must belong to exactly one region");
  }
}

AdjacencyGraph make_adjacency(std::vector<std::string> vertices,
                              const std::vector<std::pair<std::string, std::string>>& edges) {
  AdjacencyGraph g{std::move(vertices), {}};
  std::set<std::pair<std::size_t, std::size_t>> unique;
  for (const auto& [a, b] : edges) {
    std::size_t i = channel_index(a, g.vertices), j = channel_index(b, g.vertices);
    if (i == j) throw std::invalid_argument("adjacency: self loop at " + a);
    if (i > j) std::swap(i, j);
    if (!unique.insert({i, j}).second) throw std::invalid_argument("adjacency: duplicate edge " + a + "-" + b);
    g.edges.emplace_back(i, j);
  }
  return g;
}

AdjacencyGraph default_adjacency() {
  static const std::vector<std::pair<std::string, std::string>> kEdges = {
      {"Fp1", "Fp2"}, {"Fp1", "F7"}, {"Fp1", "F3"}, {"Fp1", "Fz"}, {"Fp2", "Fz"}, {"Fp2", "F4"},
      {"Fp2", "F8"},  {"F7", "F3"},  {"F3", "Fz"},  {"Fz", "F4"},  {"F4", "F8"},  {"F7", "T3"},
      {"F3", "C3"},   {"Fz", "Cz"},  {"F4", "C4"},  {"F8", "T4"},  {"T3", "C3"},  {"C3", "Cz"},
      {"Cz", "C4"},   {"C4", "T4"},  {"T3", "T5"},  {"C3", "P3"},  {"Cz", "Pz"},  {"C4", "P4"},
      {"T4", "T6"},   {"T5", "P3"},  {"P3", "Pz"},  {"Pz", "P4"},  {"P4", "T6"},  {"T5", "O1"},
      {"P3", "O1"},   {"Pz", "O1"},  {"Pz", "O2"},  {"P4", "O2"},  {"T6", "O2"},  {"O1", "O2"}};
  return make_adjacency(default_channel_names(), kEdges);
}

std::array<ScalpPoint, kMontageChannels> default_scalp_coordinates() {
  // Azimuthal projection of the 10-20 positions: polar angle from the vertex maps to radius,
  // Fpz/Oz/T3/T4 lie at 0.8 of the head radius.
  auto polar = [](double radius, double azimuth_deg) {
    const double a = azimuth_deg * M_PI / 180.0;
    return ScalpPoint{radius * std::sin(a), radius * std::cos(a)};
  };
  const double outer = 0.8, inner = 0.4;
  return {polar(outer, -18),  polar(outer, 18),   polar(outer, -54), polar(0.51, -40), polar(inner, 0),
          polar(0.51, 40),    polar(outer, 54),   polar(outer, -90), polar(inner, -90), ScalpPoint{0.0, 0.0},
          polar(inner, 90),   polar(outer, 90),   polar(outer, -126), polar(0.51, -140), polar(inner, 180),
          polar(0.51, 140),   polar(outer, 126),  polar(outer, -162), polar(outer, 162)};
}

}  // namespace tsxai
