#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdm/grid.hpp"

namespace cdm {

// Unitary 2-D DFT on a Grid2D (factor 1/sqrt(N) in both directions), evaluated
// separably with precomputed twiddles. O(N (nx + ny)); meant for diagnostics and
// test fixtures, not the solver hot path.
class UnitaryDft2D {
 public:
  explicit UnitaryDft2D(const Grid2D& grid) : grid_(grid), wx_(twiddles(grid.nx)), wy_(twiddles(grid.ny)) {}

  std::vector<std::complex<double>> forward(std::span<const std::complex<double>> in) const { return run(in, false); }
  std::vector<std::complex<double>> inverse(std::span<const std::complex<double>> in) const { return run(in, true); }

  // Basis element k (a unit vector) as a spatial-domain array: f_k(j) = exp(2 pi i k.x_j) / sqrt(N).
  std::vector<std::complex<double>> basis(std::size_t k) const {
    const std::size_t kx = grid_.ix(k), ky = grid_.iy(k);
    const double s = 1.0 / std::sqrt(static_cast<double>(grid_.size()));
    std::vector<std::complex<double>> f(grid_.size());
    for (std::size_t iy = 0; iy < grid_.ny; ++iy)
      for (std::size_t ix = 0; ix < grid_.nx; ++ix)
        f[grid_.index(ix, iy)] = std::conj(wx_[(kx * ix) % grid_.nx] * wy_[(ky * iy) % grid_.ny]) * s;
    return f;
  }

 private:
  static std::vector<std::complex<double>> twiddles(std::size_t n) {
    std::vector<std::complex<double>> w(n);
    for (std::size_t k = 0; k < n; ++k)
      w[k] = std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n));
    return w;
  }

  std::vector<std::complex<double>> run(std::span<const std::complex<double>> in, bool inv) const {
    const std::size_t nx = grid_.nx, ny = grid_.ny;
    if (in.size() != grid_.size()) throw std::invalid_argument("DFT input size does not match grid");
    auto tw = [inv](const std::complex<double>& w) { return inv ? std::conj(w) : w; };
    std::vector<std::complex<double>> rows(in.size()), out(in.size());
    for (std::size_t iy = 0; iy < ny; ++iy)
      for (std::size_t kx = 0; kx < nx; ++kx) {
        std::complex<double> acc{};
        for (std::size_t ix = 0; ix < nx; ++ix) acc += in[iy * nx + ix] * tw(wx_[(kx * ix) % nx]);
        rows[iy * nx + kx] = acc;
      }
    const double scale = 1.0 / std::sqrt(static_cast<double>(nx * ny));
    for (std::size_t ky = 0; ky < ny; ++ky)
      for (std::size_t kx = 0; kx < nx; ++kx) {
        std::complex<double> acc{};
        for (std::size_t iy = 0; iy < ny; ++iy) acc += rows[iy * nx + kx] * tw(wy_[(ky * iy) % ny]);
        out[ky * nx + kx] = acc * scale;
      }
    return out;
  }

  Grid2D grid_;
  std::vector<std::complex<double>> wx_, wy_;
};

}  // namespace cdm
