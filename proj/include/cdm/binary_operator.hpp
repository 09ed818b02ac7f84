#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <complex>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdm/sensing.hpp"

namespace cdm {

namespace detail {

// y = A x for a bit-packed 0/1 matrix A (rows x cols), using per-byte subset-sum
// tables: for each group of 8 columns the 256 partial sums of x are tabulated once,
// then every row adds one table entry per byte. Cost ~ rows*cols/8 + 32*cols adds.
template <typename T>
void packed_matvec(const SensingMatrix& a, std::span<const T> x, std::span<T> y) {
  const std::size_t rows = a.rows(), cols = a.cols(), stride = a.stride();
  const auto bytes = a.data();
  std::fill(y.begin(), y.end(), T{});
  std::array<T, 256> table;
  const std::size_t groups = (cols + 7) / 8;
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = 8 * g;
    const std::size_t width = std::min<std::size_t>(8, cols - base);
    table[0] = T{};
    for (unsigned b = 1; b < 256; ++b) {
      const unsigned low = static_cast<unsigned>(std::countr_zero(b));
      table[b] = table[b & (b - 1)] + (low < width ? x[base + low] : T{});
    }
    const std::uint8_t* col = bytes.data() + g;
    for (std::size_t r = 0; r < rows; ++r) y[r] += table[col[r * stride]];
  }
}

}  // namespace detail

// Matrix-free Q, Q^T and Q^T Q for a binary sensing matrix, optionally with some
// rows removed. Both Q and Q^T are kept bit-packed.
class BinaryOperator {
 public:
  BinaryOperator() = default;
  explicit BinaryOperator(const SensingMatrix& q, std::span<const std::size_t> excluded = {}) {
    if (excluded.empty()) {
      q_ = q;
      for (std::size_t m = 0; m < q.rows(); ++m) active_.push_back(m);
    } else {
      std::vector<bool> drop(q.rows(), false);
      for (auto m : excluded)
        if (m < q.rows()) drop[m] = true;
      for (std::size_t m = 0; m < q.rows(); ++m)
        if (!drop[m]) active_.push_back(m);
      if (active_.empty()) throw std::invalid_argument("all sensing rows are excluded");
      q_ = q.select_rows(active_);
    }
    qt_ = q_.transposed();
    scratch_.resize(q_.rows());
  }

  std::size_t rows() const noexcept { return q_.rows(); }
  std::size_t cols() const noexcept { return q_.cols(); }
  const SensingMatrix& matrix() const noexcept { return q_; }
  // Original row index of each active row.
  const std::vector<std::size_t>& active_rows() const noexcept { return active_; }

  template <typename T>
  void apply(std::span<const T> x, std::span<T> y) const {
    check(x.size() == cols() && y.size() == rows());
    detail::packed_matvec<T>(q_, x, y);
  }

  template <typename T>
  void apply_adjoint(std::span<const T> y, std::span<T> x) const {
    check(y.size() == rows() && x.size() == cols());
    detail::packed_matvec<T>(qt_, y, x);
  }

  // x -> Q^T Q x. Not thread-safe (shared scratch buffer).
  void apply_normal(std::span<const std::complex<double>> x, std::span<std::complex<double>> out) {
    apply<std::complex<double>>(x, scratch_);
    apply_adjoint<std::complex<double>>(scratch_, out);
  }

  // Dense M x M Gram matrix Q Q^T via popcounts, row-major.
  std::vector<double> gram_rows() const {
    const std::size_t m = rows();
    std::vector<double> k(m * m);
    for (std::size_t a = 0; a < m; ++a)
      for (std::size_t b = a; b < m; ++b) k[a * m + b] = k[b * m + a] = static_cast<double>(q_.row_overlap(a, b));
    return k;
  }

 private:
  static void check(bool ok) {
    if (!ok) throw std::invalid_argument("operator dimension mismatch");
  }

  SensingMatrix q_;
  SensingMatrix qt_;
  std::vector<std::size_t> active_;
  std::vector<std::complex<double>> scratch_;
};

}  // namespace cdm
