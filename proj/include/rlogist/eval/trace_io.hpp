#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "rlogist/errors.hpp"
#include "rlogist/eval/strategy.hpp"
#include "rlogist/io.hpp"

namespace rlogist::eval {

// Checks the trace invariants: strictly increasing steps, unique in-range regions.
inline void validate_trace(const PathTrace& trace) {
  std::vector<bool> seen(trace.n_regions, false);
  for (std::size_t k = 0; k < trace.steps.size(); ++k) {
    const auto& s = trace.steps[k];
    if (k > 0 && s.t <= trace.steps[k - 1].t) throw FormatError(FormatErrorKind::invalid_value, "trace steps are not increasing");
    if (s.region >= trace.n_regions) throw FormatError(FormatErrorKind::invalid_value, "trace region out of range");
    if (seen[s.region]) throw FormatError(FormatErrorKind::invalid_value, "trace revisits region " + std::to_string(s.region));
    seen[s.region] = true;
  }
}

inline void save_trace(const PathTrace& trace, const std::filesystem::path& path) {
  io::write_file(path, nlohmann::json(trace).dump(2) + "\n");
}

inline PathTrace load_trace(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(io::read_file(path)).get<PathTrace>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(FormatErrorKind::invalid_value, path.string() + ": " + e.what());
  }
}

// Binary PGM of the visit order. Regions are laid out row-major on a grid ceil(sqrt(N)) wide,
// each drawn as a cell x cell block. Unvisited regions are black; the first visit is white and
// later visits fade towards mid-grey.
inline std::string render_visit_pgm(const PathTrace& trace, std::size_t cell = 8) {
  if (trace.n_regions == 0) throw ShapeError("trace has no regions");
  if (cell == 0) throw ConfigError("cell size must be positive");
  const auto cols = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(trace.n_regions))));
  const std::size_t rows = (trace.n_regions + cols - 1) / cols;
  std::vector<std::uint8_t> shade(trace.n_regions, 0);
  const std::size_t steps = trace.steps.size();
  for (std::size_t k = 0; k < steps; ++k) {
    const double frac = steps > 1 ? static_cast<double>(k) / static_cast<double>(steps - 1) : 0.0;
    shade[trace.steps[k].region] = static_cast<std::uint8_t>(std::lround(255.0 - 155.0 * frac));
  }
  const std::size_t w = cols * cell, h = rows * cell;
  std::string out = "P5\n" + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  out.reserve(out.size() + w * h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t region = (y / cell) * cols + x / cell;
      out.push_back(static_cast<char>(region < trace.n_regions ? shade[region] : 0));
    }
  }
  return out;
}

inline void save_visit_pgm(const PathTrace& trace, const std::filesystem::path& path, std::size_t cell = 8) {
  io::write_file(path, render_visit_pgm(trace, cell));
}

}  // namespace rlogist::eval
