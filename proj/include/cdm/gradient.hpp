#pragma once

#include <cmath>
#include <complex>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdm/grid.hpp"
#include "cdm/state.hpp"

namespace cdm {

// Forward differences along x and y; the difference leaving the grid is zero (Neumann).
struct GradientField {
  std::vector<cplx> dx;
  std::vector<cplx> dy;
};

inline void grad2d(const Grid2D& g, std::span<const cplx> psi, std::span<cplx> dx, std::span<cplx> dy) {
  const std::size_t nx = g.nx, ny = g.ny;
  for (std::size_t iy = 0; iy < ny; ++iy) {
    const std::size_t row = iy * nx;
    for (std::size_t ix = 0; ix + 1 < nx; ++ix) dx[row + ix] = psi[row + ix + 1] - psi[row + ix];
    dx[row + nx - 1] = 0.0;
  }
  for (std::size_t iy = 0; iy + 1 < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix) dy[iy * nx + ix] = psi[(iy + 1) * nx + ix] - psi[iy * nx + ix];
  for (std::size_t ix = 0; ix < nx; ++ix) dy[(ny - 1) * nx + ix] = 0.0;
}

inline GradientField grad2d(const StateVector& s) {
  GradientField f{std::vector<cplx>(s.size()), std::vector<cplx>(s.size())};
  grad2d(s.grid, s.amps, f.dx, f.dy);
  return f;
}

// Adjoint of grad2d (negative divergence): <grad psi, g> = <psi, grad2d_adjoint(g)>.
inline void grad2d_adjoint(const Grid2D& g, std::span<const cplx> gx, std::span<const cplx> gy, std::span<cplx> out) {
  const std::size_t nx = g.nx, ny = g.ny;
  for (std::size_t iy = 0; iy < ny; ++iy)
    for (std::size_t ix = 0; ix < nx; ++ix) {
      const std::size_t j = iy * nx + ix;
      cplx v{0.0, 0.0};
      if (ix + 1 < nx) v -= gx[j];
      if (ix > 0) v += gx[j - 1];
      if (iy + 1 < ny) v -= gy[j];
      if (iy > 0) v += gy[j - nx];
      out[j] = v;
    }
}

inline std::vector<cplx> grad2d_adjoint(const Grid2D& g, const GradientField& f) {
  std::vector<cplx> out(g.size());
  grad2d_adjoint(g, f.dx, f.dy, out);
  return out;
}

// Isotropic shrinkage of the per-pixel complex 2-vector (zx, zy): z * max(1 - t/r, 0).
inline void complex_shrink(std::span<cplx> zx, std::span<cplx> zy, double t) {
  if (t < 0.0) throw std::invalid_argument("shrinkage threshold must be non-negative");
  for (std::size_t j = 0; j < zx.size(); ++j) {
    const double r = std::sqrt(std::norm(zx[j]) + std::norm(zy[j]));
    const double scale = r > t ? 1.0 - t / r : 0.0;
    zx[j] *= scale;
    zy[j] *= scale;
  }
}

inline GradientField complex_shrink(GradientField z, double t) {
  complex_shrink(z.dx, z.dy, t);
  return z;
}

// sum_j sqrt(|dx_j|^2 + |dy_j|^2)
inline double isotropic_tv(std::span<const cplx> dx, std::span<const cplx> dy) noexcept {
  double s = 0.0;
  for (std::size_t j = 0; j < dx.size(); ++j) s += std::sqrt(std::norm(dx[j]) + std::norm(dy[j]));
  return s;
}

inline double isotropic_tv(const Grid2D& g, std::span<const cplx> psi) {
  std::vector<cplx> dx(psi.size()), dy(psi.size());
  grad2d(g, psi, dx, dy);
  return isotropic_tv(dx, dy);
}

}  // namespace cdm
