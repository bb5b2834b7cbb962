#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "tsxai/agreement.hpp"
#include "tsxai/montage.hpp"

// Standalone SVG documents. Output depends only on the inputs, so repeated runs are byte-identical.
namespace tsxai::figures {

struct Rgb {
  int r, g, b;
  std::string hex() const;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Sequential colormap on [0, 1] (clamped).
Rgb sequential(double t);
/// Blue-white-red on [-1, 1] (clamped).
Rgb diverging(double t);

/// Escapes &, <, >, " and ' for use in text and attribute values.
std::string xml_escape(const std::string& text);

std::string bar_chart(const std::string& title, const std::vector<std::string>& labels, std::span<const double> values,
                      const std::vector<bool>& highlight = {});

/// Inverse-distance-weighted interpolation (power 2) of channel values over the unit head disc.
double idw_value(double x, double y, std::span<const double> values, std::span<const ScalpPoint> points);

/// Scalp map on a `grid` x `grid` raster clipped to the head, plus electrode markers.
std::string topomap(const std::string& title, std::span<const double> values, const std::vector<std::string>& names,
                    std::span<const ScalpPoint> points, std::size_t grid = 48);

/// Matrix of coloured cells with row/column labels and printed values. Diverging when lo < 0.
std::string heatmap(const std::string& title, const std::vector<std::string>& rows, const std::vector<std::string>& cols,
                    const std::vector<std::vector<double>>& values, double lo, double hi);

/// One polygon per series; values are expected in [0, 1] per axis.
std::string radar(const std::string& title, const std::vector<std::string>& axes,
                  const std::map<std::string, std::vector<double>>& series);

/// Consensus scores as bars with agreement confidence as dots, best channel first.
std::string consensus_chart(const std::vector<ConsensusEntry>& entries, const std::vector<std::string>& names);

}  // namespace tsxai::figures
