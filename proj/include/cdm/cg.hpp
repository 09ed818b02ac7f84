#pragma once

#include <cmath>
#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace cdm {

struct CgResult {
  std::size_t iterations{0};
  double relative_residual{0.0};
  bool converged{false};
};

enum class CgStop {
  relative_to_rhs,      // ||r|| <= tol ||b||
  relative_to_initial,  // ||r|| <= tol ||b - A x0||, for warm starts
};

// Conjugate gradients for a Hermitian positive-definite operator, starting from x.
// apply(in, out) must write A*in into out. relative_residual is reported against ||b||.
template <typename Apply>
CgResult conjugate_gradient(Apply&& apply, std::span<const std::complex<double>> b, std::span<std::complex<double>> x,
                            double rel_tol, std::size_t max_iter, CgStop stop = CgStop::relative_to_rhs) {
  using C = std::complex<double>;
  const std::size_t n = b.size();
  double bnorm2 = 0.0;
  for (const auto& v : b) bnorm2 += std::norm(v);
  if (bnorm2 == 0.0) {
    for (auto& v : x) v = 0.0;
    return {0, 0.0, true};
  }
  std::vector<C> r(n), p(n), ap(n);
  apply(std::span<const C>(x.data(), n), std::span<C>(ap));
  double rs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    r[i] = b[i] - ap[i];
    rs += std::norm(r[i]);
  }
  const double stop2 = rel_tol * rel_tol * (stop == CgStop::relative_to_rhs ? bnorm2 : rs);
  CgResult res;
  if (rs <= stop2 || rs == 0.0) {
    res.converged = true;
    res.relative_residual = std::sqrt(rs / bnorm2);
    return res;
  }
  p = r;
  while (res.iterations < max_iter) {
    apply(std::span<const C>(p), std::span<C>(ap));
    double pap = 0.0;
    for (std::size_t i = 0; i < n; ++i) pap += (std::conj(p[i]) * ap[i]).real();
    if (!(pap > 0.0)) break;
    const double a = rs / pap;
    double rs_new = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      x[i] += a * p[i];
      r[i] -= a * ap[i];
      rs_new += std::norm(r[i]);
    }
    ++res.iterations;
    if (rs_new <= stop2) {
      rs = rs_new;
      res.converged = true;
      break;
    }
    const double beta = rs_new / rs;
    rs = rs_new;
    for (std::size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  res.relative_residual = std::sqrt(rs / bnorm2);
  return res;
}

}  // namespace cdm
