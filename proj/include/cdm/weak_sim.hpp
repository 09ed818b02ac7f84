#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdm/errors.hpp"
#include "cdm/random.hpp"
#include "cdm/sensing.hpp"
#include "cdm/state.hpp"

namespace cdm {

inline constexpr double kDefaultAlpha = 20.0 * std::numbers::pi / 180.0;

// Polarization pointer in the (H, V) basis.
struct PointerState {
  cplx h{0.0, 0.0};
  cplx v{1.0, 0.0};

  double norm2() const noexcept { return std::norm(h) + std::norm(v); }
  PointerState normalized() const {
    const double n = std::sqrt(norm2());
    if (!(n > 0.0)) throw PostSelectionError("post-selected pointer has zero amplitude");
    return {h / n, v / n};
  }
  // sigma_x eigenstates are diagonal/antidiagonal, sigma_y eigenstates circular.
  double expect_x() const noexcept { return 2.0 * (std::conj(h) * v).real(); }
  double expect_y() const noexcept { return 2.0 * (std::conj(h) * v).imag(); }
};

enum class MeasurementModel { analytic, exact, counts };

inline std::string to_string(MeasurementModel m) {
  switch (m) {
    case MeasurementModel::analytic: return "analytic";
    case MeasurementModel::exact: return "exact";
    case MeasurementModel::counts: return "counts";
  }
  return "analytic";
}

inline MeasurementModel parse_model(const std::string& s) {
  if (s == "analytic") return MeasurementModel::analytic;
  if (s == "exact") return MeasurementModel::exact;
  if (s == "counts") return MeasurementModel::counts;
  throw std::invalid_argument("unknown measurement model: " + s);
}

struct NoiseMeta {
  double budget{0.0};  // photons per mask per analyzer setting
  std::uint64_t seed{0};
};

struct MeasurementRecord {
  SensingMatrix matrix;
  std::vector<cplx> phi;
  double alpha{kDefaultAlpha};
  double phi0{1.0};
  double kappa{0.0};
  Grid2D grid;
  MeasurementModel model{MeasurementModel::analytic};
  std::optional<NoiseMeta> noise;
  // Rows whose readout is undefined (zero post-selection amplitude or zero counts).
  std::vector<std::size_t> invalid_rows;

  std::size_t rows() const noexcept { return matrix.rows(); }
  std::size_t dim() const noexcept { return grid.size(); }
};

// Per mask row: sigma_x analyzer (+,-) then sigma_y analyzer (+,-).
struct DetectorCounts {
  std::vector<std::array<std::uint64_t, 4>> rows;
};

// kappa = 2 alpha / (phi0 sqrt(N))
inline double calibration_kappa(double alpha, double phi0, std::size_t n) {
  return 2.0 * alpha / (phi0 * std::sqrt(static_cast<double>(n)));
}

// Pointer after exp(-i alpha Q_m (x) sigma_x) and projection on |o>, unnormalized, given
// total = sum_j psi_j and masked = sum_j Q_{m,j} psi_j. Masked pixels map
// |V> -> cos(alpha)|V> - i sin(alpha)|H>; the squared norm is the post-selection probability.
inline PointerState post_selected_pointer(cplx total, cplx masked, double alpha, std::size_t n) {
  const double rn = 1.0 / std::sqrt(static_cast<double>(n));
  return {cplx{0.0, -std::sin(alpha)} * masked * rn, (total - (1.0 - std::cos(alpha)) * masked) * rn};
}

namespace detail {

// S_m = sum_j Q_{m,j} psi_j
inline cplx masked_sum(const SensingMatrix& q, std::size_t m, std::span<const cplx> psi) {
  cplx s{0.0, 0.0};
  for (std::size_t w = 0; w < q.words_per_row(); ++w)
    for (std::uint64_t x = q.word(m, w); x != 0; x &= x - 1) s += psi[64 * w + static_cast<std::size_t>(std::countr_zero(x))];
  return s;
}

struct Prepared {
  StateVector state;  // phase-fixed
  double phi0;
  double kappa;
  cplx total;  // sum_j psi_j = sqrt(N) phi0
};

inline Prepared prepare(const StateVector& state, const SensingMatrix& masks, double alpha) {
  if (masks.cols() != state.size()) throw std::invalid_argument("mask length does not match state dimension");
  if (!std::isfinite(alpha)) throw std::invalid_argument("coupling angle must be finite");
  StateVector s = state.normalized ? state : normalize(state);
  s = fix_global_phase(std::move(s));
  const double phi0 = zero_frequency_overlap(s).phi0.real();
  const std::size_t n = s.size();
  return {std::move(s), phi0, calibration_kappa(alpha, phi0, n), cplx{phi0 * std::sqrt(static_cast<double>(n)), 0.0}};
}

inline MeasurementRecord make_record(const SensingMatrix& masks, const Prepared& p, double alpha, MeasurementModel model) {
  MeasurementRecord rec;
  rec.matrix = masks;
  rec.phi.assign(masks.rows(), cplx{0.0, 0.0});
  rec.alpha = alpha;
  rec.phi0 = p.phi0;
  rec.kappa = p.kappa;
  rec.grid = p.state.grid;
  rec.model = model;
  return rec;
}

}  // namespace detail

// First-order pointer expectations sigma_x = kappa Q Im(psi), sigma_y = kappa Q Re(psi),
// combined as phi = (sigma_y + i sigma_x) / kappa. Linear in psi.
inline std::vector<cplx> analytic_readout(const SensingMatrix& masks, std::span<const cplx> psi, double kappa) {
  std::vector<cplx> phi(masks.rows(), cplx{0.0, 0.0});
  if (kappa == 0.0) return phi;
  for (std::size_t m = 0; m < masks.rows(); ++m) {
    const cplx s = detail::masked_sum(masks, m, psi);
    const double sx = kappa * s.imag();
    const double sy = kappa * s.real();
    phi[m] = cplx{sy, sx} / kappa;
  }
  return phi;
}

// Weak-limit readout of the normalized, phase-fixed state: phi = Q psi.
inline MeasurementRecord simulate_analytic(const StateVector& state, const SensingMatrix& masks, double alpha = kDefaultAlpha) {
  const auto p = detail::prepare(state, masks, alpha);
  auto rec = detail::make_record(masks, p, alpha, MeasurementModel::analytic);
  rec.phi = analytic_readout(masks, p.state.amps, p.kappa);
  return rec;
}

// Exact pointer evolution without the Taylor truncation.
inline MeasurementRecord simulate_exact(const StateVector& state, const SensingMatrix& masks, double alpha = kDefaultAlpha) {
  const auto p = detail::prepare(state, masks, alpha);
  auto rec = detail::make_record(masks, p, alpha, MeasurementModel::exact);
  if (alpha == 0.0) return rec;
  const std::size_t n = p.state.size();
  for (std::size_t m = 0; m < masks.rows(); ++m) {
    const cplx s = detail::masked_sum(masks, m, p.state.amps);
    const auto raw = post_selected_pointer(p.total, s, alpha, n);
    if (!(raw.norm2() > 0.0)) {
      rec.invalid_rows.push_back(m);
      continue;
    }
    const auto ptr = raw.normalized();
    rec.phi[m] = cplx{ptr.expect_y(), ptr.expect_x()} / p.kappa;
  }
  return rec;
}

struct CountsResult {
  DetectorCounts counts;
  MeasurementRecord record;
};

// Poisson photon counting at the four analyzer ports. Port means are
// budget * p_m * (1 +/- <sigma>) / 2 with p_m the post-selection probability.
inline CountsResult simulate_counts(const StateVector& state, const SensingMatrix& masks, double alpha, double budget,
                                    std::uint64_t seed) {
  if (!(budget > 0.0)) throw std::invalid_argument("photon budget must be positive");
  const auto p = detail::prepare(state, masks, alpha);
  CountsResult out{{}, detail::make_record(masks, p, alpha, MeasurementModel::counts)};
  out.record.noise = NoiseMeta{budget, seed};
  out.counts.rows.resize(masks.rows());
  const std::size_t n = p.state.size();
  for (std::size_t m = 0; m < masks.rows(); ++m) {
    const cplx s = detail::masked_sum(masks, m, p.state.amps);
    const auto raw = post_selected_pointer(p.total, s, alpha, n);
    const double prob = raw.norm2();
    double ex = 0.0, ey = 0.0;
    if (prob > 0.0) {
      const auto ptr = raw.normalized();
      ex = ptr.expect_x();
      ey = ptr.expect_y();
    }
    PhiloxStream rng(seed, StreamTag::kCounts, m);
    auto& c = out.counts.rows[m];
    const double mean = budget * prob;
    c[0] = rng.poisson(mean * 0.5 * (1.0 + ex));
    c[1] = rng.poisson(mean * 0.5 * (1.0 - ex));
    c[2] = rng.poisson(mean * 0.5 * (1.0 + ey));
    c[3] = rng.poisson(mean * 0.5 * (1.0 - ey));
    const auto tx = c[0] + c[1], ty = c[2] + c[3];
    if (tx == 0 || ty == 0) {
      out.record.invalid_rows.push_back(m);
      continue;
    }
    const double sx = (static_cast<double>(c[0]) - static_cast<double>(c[1])) / static_cast<double>(tx);
    const double sy = (static_cast<double>(c[2]) - static_cast<double>(c[3])) / static_cast<double>(ty);
    out.record.phi[m] = cplx{sy, sx} / p.kappa;
  }
  return out;
}

inline MeasurementRecord simulate(const StateVector& state, const SensingMatrix& masks, double alpha, MeasurementModel model,
                                  const std::optional<NoiseMeta>& noise = std::nullopt) {
  switch (model) {
    case MeasurementModel::analytic: return simulate_analytic(state, masks, alpha);
    case MeasurementModel::exact: return simulate_exact(state, masks, alpha);
    case MeasurementModel::counts:
      if (!noise) throw std::invalid_argument("counts model needs a photon budget");
      return simulate_counts(state, masks, alpha, noise->budget, noise->seed).record;
  }
  throw std::invalid_argument("unknown measurement model");
}

// Per-measurement signal gain sqrt(N)/2 times the measurement-count reduction N/M.
inline double speedup_estimate(std::size_t n, std::size_t m) {
  if (n == 0 || m == 0) throw std::invalid_argument("speedup needs n, m >= 1");
  const double nd = static_cast<double>(n);
  return 0.5 * std::sqrt(nd) * nd / static_cast<double>(m);
}

}  // namespace cdm
