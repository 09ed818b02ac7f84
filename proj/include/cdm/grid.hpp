#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cdm {

// Pixel grid of a transverse wavefunction. Linear index j = iy * nx + ix (x fastest).
struct Grid2D {
  std::size_t nx{1};
  std::size_t ny{1};
  double pitch_mm{1.0};

  std::size_t size() const noexcept { return nx * ny; }

  std::size_t index(std::size_t ix, std::size_t iy) const noexcept { return iy * nx + ix; }
  std::size_t ix(std::size_t j) const noexcept { return j % nx; }
  std::size_t iy(std::size_t j) const noexcept { return j / nx; }

  // Coordinates measured in pixels from the grid midpoint.
  double cx(std::size_t ix) const noexcept { return static_cast<double>(ix) - 0.5 * static_cast<double>(nx - 1); }
  double cy(std::size_t iy) const noexcept { return static_cast<double>(iy) - 0.5 * static_cast<double>(ny - 1); }

  void validate() const {
    if (nx == 0 || ny == 0) throw std::invalid_argument("grid must have at least one pixel");
    if (!(pitch_mm > 0.0)) throw std::invalid_argument("grid pitch must be positive");
  }

  friend bool operator==(const Grid2D& a, const Grid2D& b) noexcept {
    return a.nx == b.nx && a.ny == b.ny && a.pitch_mm == b.pitch_mm;
  }
};

inline bool same_shape(const Grid2D& a, const Grid2D& b) noexcept { return a.nx == b.nx && a.ny == b.ny; }

// Parses "WxH" (W = nx columns, H = ny rows).
inline Grid2D parse_grid(const std::string& text, double pitch_mm = 1.0) {
  const auto pos = text.find_first_of("xX");
  if (pos == std::string::npos) throw std::invalid_argument("grid must be given as WxH: " + text);
  Grid2D g;
  try {
    g.nx = std::stoul(text.substr(0, pos));
    g.ny = std::stoul(text.substr(pos + 1));
  } catch (const std::exception&) {
    throw std::invalid_argument("grid must be given as WxH: " + text);
  }
  g.pitch_mm = pitch_mm;
  g.validate();
  return g;
}

}  // namespace cdm
