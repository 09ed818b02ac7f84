#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "cdm/random.hpp"
#include "cdm/recovery.hpp"
#include "cdm/sensing.hpp"
#include "cdm/state.hpp"
#include "cdm/weak_sim.hpp"

namespace cdm {

// Pixels scanned by a (partial) raster, in scan order.
struct RasterPlan {
  std::vector<std::size_t> indices;
  std::uint64_t seed{0};
  double fraction{1.0};

  void validate(std::size_t n) const {
    std::vector<bool> seen(n, false);
    for (auto j : indices) {
      if (j >= n) throw std::invalid_argument("raster index out of range");
      if (seen[j]) throw std::invalid_argument("raster indices must be unique");
      seen[j] = true;
    }
  }
};

inline std::size_t measurement_count(std::size_t n, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("measurement fraction must lie in (0, 1]");
  const auto m = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  return std::clamp<std::size_t>(m, 1, n);
}

// round(fraction * N) pixels drawn uniformly without replacement (partial Fisher-Yates).
inline RasterPlan make_raster_plan(std::size_t n, double fraction, std::uint64_t seed) {
  const std::size_t m = measurement_count(n, fraction);
  std::vector<std::size_t> perm(n);
  for (std::size_t j = 0; j < n; ++j) perm[j] = j;
  PhiloxStream rng(seed, StreamTag::kRaster, 0);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t pick = i + static_cast<std::size_t>(rng.below(n - i));
    std::swap(perm[i], perm[pick]);
  }
  perm.resize(m);
  return {std::move(perm), seed, fraction};
}

inline RasterPlan full_raster_plan(std::size_t n) {
  RasterPlan p;
  p.indices.resize(n);
  for (std::size_t j = 0; j < n; ++j) p.indices[j] = j;
  return p;
}

// Measures the planned pixels one at a time; unmeasured pixels are 0 (minimum-norm completion).
inline StateVector partial_raster_recover(const StateVector& state, const RasterPlan& plan, double alpha, MeasurementModel model,
                                          const std::optional<NoiseMeta>& noise = std::nullopt) {
  if (plan.indices.empty()) throw std::invalid_argument("raster plan is empty");
  plan.validate(state.size());
  const auto q = SensingMatrix::single_pixel_rows(state.size(), plan.indices);
  const auto rec = simulate(state, q, alpha, model, noise);
  // Each row measures the weak value pi_w = psi_j / (phi0 sqrt(N)); invert it.
  const double scale = rec.phi0 * std::sqrt(static_cast<double>(state.size()));
  std::vector<cplx> amps(state.size(), cplx{0.0, 0.0});
  std::vector<bool> invalid(plan.indices.size(), false);
  for (auto m : rec.invalid_rows) invalid[m] = true;
  for (std::size_t i = 0; i < plan.indices.size(); ++i) {
    if (invalid[i]) continue;
    const cplx weak_value = rec.phi[i] / scale;
    amps[plan.indices[i]] = scale * weak_value;
  }
  StateVector out(state.grid, std::move(amps));
  SolveReport rep;
  detail::finalize(out, rep);
  if (rep.degenerate) throw DegenerateStateError("raster scan recorded no signal");
  return out;
}

// Full pixel-by-pixel direct measurement.
inline StateVector raster_dm(const StateVector& state, double alpha, MeasurementModel model,
                             const std::optional<NoiseMeta>& noise = std::nullopt) {
  return partial_raster_recover(state, full_raster_plan(state.size()), alpha, model, noise);
}

}  // namespace cdm
