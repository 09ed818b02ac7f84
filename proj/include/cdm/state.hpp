#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdm/errors.hpp"
#include "cdm/grid.hpp"

namespace cdm {

using cplx = std::complex<double>;

struct StateVector {
  Grid2D grid;
  std::vector<cplx> amps;
  bool normalized{false};

  StateVector() = default;
  StateVector(Grid2D g, std::vector<cplx> a, bool is_normalized = false)
      : grid(g), amps(std::move(a)), normalized(is_normalized) {
    if (amps.size() != grid.size()) throw std::invalid_argument("amplitude count does not match grid size");
  }

  std::size_t size() const noexcept { return amps.size(); }
};

// Binary image with the same row-major layout as Grid2D.
struct BinaryImage {
  std::size_t nx{0};
  std::size_t ny{0};
  std::vector<std::uint8_t> bits;

  bool at(std::size_t ix, std::size_t iy) const { return bits[iy * nx + ix] != 0; }
};

// Aberration polynomial Phi = defocus * r^2 + astigmatism * (x^2 - y^2), coefficients in rad/px^2.
struct Aberration {
  double defocus{0.05};
  double astigmatism{0.02};
};

inline double norm2(std::span<const cplx> v) noexcept {
  double s = 0.0;
  for (const auto& z : v) s += std::norm(z);
  return s;
}

inline double norm(std::span<const cplx> v) noexcept { return std::sqrt(norm2(v)); }

// <a|b> = sum conj(a_j) b_j
inline cplx inner(std::span<const cplx> a, std::span<const cplx> b) {
  if (a.size() != b.size()) throw std::invalid_argument("inner product of vectors with different lengths");
  cplx s{0.0, 0.0};
  for (std::size_t j = 0; j < a.size(); ++j) s += std::conj(a[j]) * b[j];
  return s;
}

inline StateVector normalize(StateVector s) {
  const double n = norm(s.amps);
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateStateError("cannot normalize a zero-norm state");
  for (auto& z : s.amps) z /= n;
  s.normalized = true;
  return s;
}

namespace detail {

inline std::vector<cplx> gaussian_field(const Grid2D& grid, double waist_px, const Aberration& ab) {
  grid.validate();
  if (!(waist_px > 0.0)) throw std::invalid_argument("gaussian waist must be positive");
  const double inv_w2 = std::isinf(waist_px) ? 0.0 : 1.0 / (waist_px * waist_px);
  std::vector<cplx> amps(grid.size());
  for (std::size_t iy = 0; iy < grid.ny; ++iy) {
    const double y = grid.cy(iy);
    for (std::size_t ix = 0; ix < grid.nx; ++ix) {
      const double x = grid.cx(ix);
      const double r2 = x * x + y * y;
      const double phase = ab.defocus * r2 + ab.astigmatism * (x * x - y * y);
      amps[grid.index(ix, iy)] = std::polar(std::exp(-r2 * inv_w2), phase);
    }
  }
  return amps;
}

}  // namespace detail

// Normalized aberrated Gaussian exp(-(x^2+y^2)/w^2) exp(i Phi(x,y)) on grid-centered
// coordinates. waist_px may be +infinity for a flat amplitude.
inline StateVector gaussian_state(const Grid2D& grid, double waist_px, const Aberration& ab = {}) {
  return normalize(StateVector(grid, detail::gaussian_field(grid, waist_px, ab)));
}

// Gaussian-amplitude state with an extra phase `jump` on pixels where the mask is set.
inline StateVector phase_mask_state(const Grid2D& grid, const BinaryImage& mask, double jump_rad,
                                    double waist_px, const Aberration& ab = {0.0, 0.0}) {
  if (mask.nx != grid.nx || mask.ny != grid.ny) throw std::invalid_argument("mask dimensions do not match grid");
  auto amps = detail::gaussian_field(grid, waist_px, ab);
  const cplx kick = std::polar(1.0, jump_rad);
  for (std::size_t j = 0; j < amps.size(); ++j)
    if (mask.bits[j]) amps[j] *= kick;
  return normalize(StateVector(grid, std::move(amps)));
}

// Post-selection overlap <o|psi> with the zero-frequency state <o|x_j> = 1/sqrt(N).
struct PostSelector {
  cplx phi0;
};

inline PostSelector zero_frequency_overlap(const StateVector& s) {
  cplx sum{0.0, 0.0};
  for (const auto& z : s.amps) sum += z;
  return {sum / std::sqrt(static_cast<double>(s.size()))};
}

// Rotates the global phase so that <o|psi> is real and positive.
inline StateVector fix_global_phase(StateVector s) {
  const cplx phi0 = zero_frequency_overlap(s).phi0;
  const double mag = std::abs(phi0);
  if (!(mag > 0.0)) throw PostSelectionError("state is orthogonal to the zero-frequency post-selection state");
  const cplx rot = std::conj(phi0) / mag;
  for (auto& z : s.amps) z *= rot;
  return s;
}

// |<a|b>| for unit vectors; inputs are normalized internally.
inline double fidelity(const StateVector& a, const StateVector& b) {
  if (!same_shape(a.grid, b.grid)) throw std::invalid_argument("fidelity of states on different grids");
  const double na = norm(a.amps);
  const double nb = norm(b.amps);
  if (!(na > 0.0) || !(nb > 0.0)) throw DegenerateStateError("fidelity of a zero-norm state");
  const double f = std::abs(inner(a.amps, b.amps)) / (na * nb);
  return std::min(f, 1.0);
}

}  // namespace cdm
