#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "cdm/binary_operator.hpp"
#include "cdm/cg.hpp"
#include "cdm/dft.hpp"
#include "cdm/errors.hpp"
#include "cdm/gradient.hpp"
#include "cdm/state.hpp"
#include "cdm/weak_sim.hpp"

namespace cdm {

struct TvParams {
  std::optional<double> mu;  // unset: 2^8 * M / ||phi||_1
  double beta0{1.0};
  std::optional<double> beta_max;  // unset: mu * M / 4, the scale of mu Q^T Q away from its DC mode
  double continuation{2.0};
  double tol{1e-6};
  std::size_t max_outer{300};
  double cg_tol{0.1};  // relative to the warm-start residual
  std::size_t cg_max_iter{200};
  // Consecutive objective increases treated as divergence; 0 disables the check.
  std::size_t divergence_window{10};

  void validate() const {
    if (mu && !(*mu > 0.0)) throw std::invalid_argument("mu must be positive");
    if (!(beta0 > 0.0) || (beta_max && !(*beta_max >= beta0))) throw std::invalid_argument("beta schedule must satisfy 0 < beta0 <= beta_max");
    if (!(continuation >= 1.0)) throw std::invalid_argument("continuation factor must be >= 1");
    if (!(tol > 0.0)) throw std::invalid_argument("tolerance must be positive");
    if (max_outer < 1) throw std::invalid_argument("max_outer must be >= 1");
  }
};

struct SolveReport {
  std::string method;
  std::size_t iterations{0};
  std::size_t cg_iterations{0};
  double objective{0.0};
  double residual{0.0};
  double mu{0.0};
  double beta_max{0.0};
  std::vector<double> trace;
  bool converged{false};
  bool degenerate{false};
  bool phase_fixed{false};
};

struct Recovery {
  StateVector state;
  SolveReport report;
};

namespace detail {

inline std::vector<cplx> active_phi(const MeasurementRecord& rec, const BinaryOperator& op) {
  if (rec.phi.size() != rec.matrix.rows()) throw std::invalid_argument("record has mismatched phi length");
  std::vector<cplx> out;
  out.reserve(op.rows());
  for (auto m : op.active_rows()) out.push_back(rec.phi[m]);
  return out;
}

inline double data_residual(const BinaryOperator& op, std::span<const cplx> psi, std::span<const cplx> phi) {
  std::vector<cplx> q(op.rows());
  op.apply<cplx>(psi, q);
  double s = 0.0;
  for (std::size_t m = 0; m < q.size(); ++m) s += std::norm(q[m] - phi[m]);
  return std::sqrt(s);
}

// Unit-normalize and rotate so <o|psi> > 0. Zero vectors are returned as-is and flagged.
inline void finalize(StateVector& s, SolveReport& rep) {
  const double n = norm(s.amps);
  if (!(n > 0.0)) {
    rep.degenerate = true;
    s.normalized = false;
    return;
  }
  s = normalize(std::move(s));
  try {
    s = fix_global_phase(std::move(s));
    rep.phase_fixed = true;
  } catch (const PostSelectionError&) {
    rep.phase_fixed = false;
  }
}

// Numerical rank of a symmetric PSD matrix by pivoted Cholesky.
inline std::size_t estimate_rank(std::vector<double> k, std::size_t m, double rel_tol = 1e-10) {
  double maxdiag = 0.0;
  for (std::size_t i = 0; i < m; ++i) maxdiag = std::max(maxdiag, k[i * m + i]);
  std::vector<std::size_t> perm(m);
  for (std::size_t i = 0; i < m; ++i) perm[i] = i;
  std::size_t rank = 0;
  std::vector<bool> used(m, false);
  for (std::size_t step = 0; step < m; ++step) {
    std::size_t piv = m;
    double best = 0.0;
    for (std::size_t i = 0; i < m; ++i)
      if (!used[i] && k[i * m + i] > best) best = k[i * m + i], piv = i;
    if (piv == m || best <= rel_tol * maxdiag) break;
    used[piv] = true;
    ++rank;
    const double d = std::sqrt(best);
    std::vector<double> col(m, 0.0);
    for (std::size_t i = 0; i < m; ++i)
      if (!used[i]) col[i] = k[i * m + piv] / d;
    for (std::size_t i = 0; i < m; ++i)
      if (!used[i])
        for (std::size_t j = 0; j < m; ++j)
          if (!used[j]) k[i * m + j] -= col[i] * col[j];
  }
  return rank;
}

}  // namespace detail

// Minimum-norm solution psi = Q^T (Q Q^T)^-1 phi, by CG on the jittered Gram system.
inline Recovery pinv_recover(const MeasurementRecord& rec) {
  BinaryOperator op(rec.matrix, rec.invalid_rows);
  const auto phi = detail::active_phi(rec, op);
  const std::size_t m = op.rows();
  Recovery out{StateVector(rec.grid, std::vector<cplx>(rec.grid.size())), SolveReport{}};
  out.report.method = "pinv";

  double trace = 0.0;
  for (std::size_t r = 0; r < m; ++r) trace += static_cast<double>(op.matrix().row_ones(r));
  if (trace == 0.0) throw std::invalid_argument("sensing matrix has no nonzero row");
  const double jitter = 1e-10 * trace / static_cast<double>(m);

  constexpr std::size_t kDenseGramLimit = 4096;
  std::vector<double> gram;
  if (m <= kDenseGramLimit) gram = op.gram_rows();
  std::vector<cplx> tmp(op.cols());
  auto apply_gram = [&](std::span<const cplx> y, std::span<cplx> out_y) {
    if (!gram.empty()) {
      for (std::size_t a = 0; a < m; ++a) {
        cplx acc{0.0, 0.0};
        const double* row = gram.data() + a * m;
        for (std::size_t b = 0; b < m; ++b) acc += row[b] * y[b];
        out_y[a] = acc + jitter * y[a];
      }
    } else {
      op.apply_adjoint<cplx>(y, tmp);
      op.apply<cplx>(tmp, out_y);
      for (std::size_t a = 0; a < m; ++a) out_y[a] += jitter * y[a];
    }
  };

  auto fail = [&](double rel) {
    std::ostringstream msg;
    msg << "Q Q^T is numerically singular (relative residual " << rel;
    if (!gram.empty()) msg << ", rank estimate " << detail::estimate_rank(gram, m) << " of " << m;
    msg << ")";
    throw SolverError(msg.str());
  };

  // The jitter biases the solution by about jitter / sigma_min^2; a few rounds of
  // refinement on the data residual remove it. Q^T annihilates null(Q Q^T), so an
  // inconsistent phi cannot blow up psi.
  auto& psi = out.state.amps;
  std::vector<cplx> y(m), r(phi.begin(), phi.end()), qpsi(m);
  double rnorm = norm(r);
  constexpr std::size_t kRefinements = 8;
  for (std::size_t pass = 0; pass <= kRefinements && rnorm > 0.0; ++pass) {
    std::fill(y.begin(), y.end(), cplx{0.0, 0.0});
    const auto cg = conjugate_gradient(apply_gram, r, y, 1e-14, std::max<std::size_t>(400, 4 * m));
    out.report.cg_iterations += cg.iterations;
    if (pass == 0 && !cg.converged && cg.relative_residual > 1e-8) fail(cg.relative_residual);
    op.apply_adjoint<cplx>(y, tmp);
    std::vector<cplx> trial(psi);
    for (std::size_t j = 0; j < trial.size(); ++j) trial[j] += tmp[j];
    op.apply<cplx>(trial, qpsi);
    std::vector<cplx> r_new(m);
    for (std::size_t a = 0; a < m; ++a) r_new[a] = phi[a] - qpsi[a];
    const double n_new = norm(r_new);
    if (pass > 0 && !(n_new < 0.5 * rnorm)) break;
    psi = std::move(trial);
    r = std::move(r_new);
    rnorm = n_new;
    out.report.iterations = pass + 1;
  }
  out.report.converged = true;
  out.report.residual = detail::data_residual(op, out.state.amps, phi);
  out.report.objective = norm(out.state.amps);
  out.report.trace.push_back(out.report.objective);
  detail::finalize(out.state, out.report);
  return out;
}

// sum_j |grad psi|_j + mu/2 ||Q psi - phi||^2
inline double tv_objective(const BinaryOperator& op, const Grid2D& g, std::span<const cplx> psi, std::span<const cplx> phi,
                           double mu) {
  const double r = detail::data_residual(op, psi, phi);
  return isotropic_tv(g, psi) + 0.5 * mu * r * r;
}

inline double default_mu(std::span<const cplx> phi) {
  double l1 = 0.0;
  for (const auto& z : phi) l1 += std::abs(z);
  return 256.0 * static_cast<double>(phi.size()) / l1;
}

// Isotropic-TV regularized least squares by an augmented-Lagrangian splitting d = grad psi:
// shrink d, CG solve (mu Q^T Q + beta grad^T grad) psi = mu Q^T phi + grad^T (beta d - lambda),
// update lambda; beta grows geometrically to beta_max.
inline Recovery tv_admm_recover(const MeasurementRecord& rec, const TvParams& params = {}) {
  params.validate();
  BinaryOperator op(rec.matrix, rec.invalid_rows);
  const auto phi = detail::active_phi(rec, op);
  const Grid2D& g = rec.grid;
  const std::size_t n = g.size();
  if (op.cols() != n) throw std::invalid_argument("record grid does not match mask length");

  Recovery out{StateVector(g, std::vector<cplx>(n)), SolveReport{}};
  out.report.method = "tv";
  if (norm(phi) == 0.0) {
    out.report.degenerate = true;
    out.report.converged = true;
    return out;
  }
  const double mu = params.mu.value_or(default_mu(phi));
  const double beta_max = std::max(params.beta0, params.beta_max.value_or(0.25 * mu * static_cast<double>(phi.size())));
  out.report.mu = mu;
  out.report.beta_max = beta_max;

  std::vector<cplx> qt_phi(n), rhs(n), gx(n), gy(n), dx(n), dy(n), lx(n), ly(n), tmpx(n), tmpy(n), normal(n), lap(n);
  op.apply_adjoint<cplx>(phi, qt_phi);
  auto& psi = out.state.amps;
  std::vector<cplx> prev(n);

  double beta = params.beta0;
  auto apply_system = [&](std::span<const cplx> x, std::span<cplx> y) {
    op.apply_normal(x, normal);
    grad2d(g, x, tmpx, tmpy);
    grad2d_adjoint(g, tmpx, tmpy, lap);
    for (std::size_t j = 0; j < n; ++j) y[j] = mu * normal[j] + beta * lap[j];
  };

  double last_obj = std::numeric_limits<double>::infinity();
  std::size_t rising = 0;
  double rise_start = 0.0;
  for (std::size_t k = 0; k < params.max_outer; ++k) {
    grad2d(g, psi, gx, gy);
    for (std::size_t j = 0; j < n; ++j) {
      dx[j] = gx[j] + lx[j] / beta;
      dy[j] = gy[j] + ly[j] / beta;
    }
    complex_shrink(dx, dy, 1.0 / beta);

    for (std::size_t j = 0; j < n; ++j) {
      tmpx[j] = beta * dx[j] - lx[j];
      tmpy[j] = beta * dy[j] - ly[j];
    }
    grad2d_adjoint(g, tmpx, tmpy, rhs);
    for (std::size_t j = 0; j < n; ++j) rhs[j] += mu * qt_phi[j];

    prev = psi;
    const auto cg = conjugate_gradient(apply_system, rhs, psi, params.cg_tol, params.cg_max_iter, CgStop::relative_to_initial);
    out.report.cg_iterations += cg.iterations;

    grad2d(g, psi, gx, gy);
    for (std::size_t j = 0; j < n; ++j) {
      lx[j] -= beta * (dx[j] - gx[j]);
      ly[j] -= beta * (dy[j] - gy[j]);
    }

    const double obj = tv_objective(op, g, psi, phi, mu);
    if (!std::isfinite(obj)) throw SolverError("TV solver produced a non-finite objective");
    out.report.trace.push_back(obj);
    out.report.iterations = k + 1;

    // Divergence: a run of consecutive increases that has also climbed more than 1%.
    // Near convergence ADMM wobbles at the 1e-6 level, which is not divergence.
    if (obj > last_obj) {
      if (rising++ == 0) rise_start = last_obj;
    } else {
      rising = 0;
    }
    if (params.divergence_window > 0 && rising >= params.divergence_window && obj > 1.01 * rise_start) {
      std::ostringstream msg;
      msg << "TV solver diverging (objective rose for " << rising << " consecutive iterations); use a smaller continuation factor";
      throw SolverError(msg.str());
    }
    last_obj = obj;

    double dn = 0.0;
    for (std::size_t j = 0; j < n; ++j) dn += std::norm(psi[j] - prev[j]);
    const double pn = norm(psi);
    const double rel = pn > 0.0 ? std::sqrt(dn) / pn : 0.0;

    if (beta < beta_max) {
      beta = std::min(beta * params.continuation, beta_max);
    } else if (rel < params.tol) {
      out.report.converged = true;
      break;
    }
  }
  out.report.objective = out.report.trace.back();
  out.report.residual = detail::data_residual(op, psi, phi);
  detail::finalize(out.state, out.report);
  return out;
}

enum class SparsityTransform { identity, gradient_frame, dft };

struct CoherenceReport {
  double value{0.0};
  std::vector<std::size_t> skipped_rows;  // all-zero rows
};

// sqrt(N) times the largest |<q_m, t_k>| over unit-normalized sensing rows q_m and transform atoms t_k.
// For gradient_frame the atoms are the normalized forward-difference stencils (a frame, not a basis).
inline CoherenceReport mutual_coherence(const SensingMatrix& masks, const Grid2D& g, SparsityTransform t) {
  if (masks.cols() != g.size()) throw std::invalid_argument("mask length does not match grid");
  const std::size_t n = g.size();
  CoherenceReport rep;
  std::optional<UnitaryDft2D> dft;
  if (t == SparsityTransform::dft) dft.emplace(g);
  double best = 0.0;
  std::vector<cplx> row(n);
  for (std::size_t m = 0; m < masks.rows(); ++m) {
    const std::size_t ones = masks.row_ones(m);
    if (ones == 0) {
      rep.skipped_rows.push_back(m);
      continue;
    }
    const double inv = 1.0 / std::sqrt(static_cast<double>(ones));
    switch (t) {
      case SparsityTransform::identity: best = std::max(best, inv); break;
      case SparsityTransform::dft: {
        for (std::size_t j = 0; j < n; ++j) row[j] = masks.get(m, j) ? inv : 0.0;
        for (const auto& c : dft->forward(row)) best = std::max(best, std::abs(c));
        break;
      }
      case SparsityTransform::gradient_frame: {
        const double s = inv / std::sqrt(2.0);
        for (std::size_t iy = 0; iy < g.ny; ++iy)
          for (std::size_t ix = 0; ix < g.nx; ++ix) {
            const double here = masks.get(m, g.index(ix, iy));
            if (ix + 1 < g.nx) best = std::max(best, s * std::abs(masks.get(m, g.index(ix + 1, iy)) - here));
            if (iy + 1 < g.ny) best = std::max(best, s * std::abs(masks.get(m, g.index(ix, iy + 1)) - here));
          }
        break;
      }
    }
  }
  rep.value = std::sqrt(static_cast<double>(n)) * best;
  return rep;
}

}  // namespace cdm
