#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <vector>

#include "cdm/grid.hpp"
#include "cdm/random.hpp"

namespace cdm {

// M x N binary mask matrix, one bit-packed row per measurement setting.
// Bits are LSB-first within each byte (column j -> byte j/8, bit j%8); rows are
// padded with zero bytes to a multiple of 8 bytes so they can be read as words.
class SensingMatrix {
 public:
  SensingMatrix() = default;
  SensingMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), stride_(((cols + 63) / 64) * 8), bytes_(rows * stride_, 0) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("sensing matrix needs at least one row and column");
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t stride() const noexcept { return stride_; }
  std::size_t packed_row_bytes() const noexcept { return (cols_ + 7) / 8; }

  double density() const noexcept { return density_; }
  std::uint64_t seed() const noexcept { return seed_; }
  void set_provenance(double density, std::uint64_t seed) noexcept {
    density_ = density;
    seed_ = seed;
  }

  bool get(std::size_t m, std::size_t j) const noexcept { return (bytes_[m * stride_ + j / 8] >> (j % 8)) & 1u; }
  void set(std::size_t m, std::size_t j, bool v) noexcept {
    auto& b = bytes_[m * stride_ + j / 8];
    const auto mask = static_cast<std::uint8_t>(1u << (j % 8));
    b = v ? static_cast<std::uint8_t>(b | mask) : static_cast<std::uint8_t>(b & ~mask);
  }

  std::span<const std::uint8_t> row_bytes(std::size_t m) const noexcept { return {bytes_.data() + m * stride_, stride_}; }
  std::span<std::uint8_t> row_bytes(std::size_t m) noexcept { return {bytes_.data() + m * stride_, stride_}; }
  std::span<const std::uint8_t> data() const noexcept { return bytes_; }

  std::uint64_t word(std::size_t m, std::size_t w) const noexcept {
    std::uint64_t x;
    std::memcpy(&x, bytes_.data() + m * stride_ + 8 * w, 8);
    return x;
  }
  std::size_t words_per_row() const noexcept { return stride_ / 8; }

  std::size_t row_ones(std::size_t m) const noexcept {
    std::size_t c = 0;
    for (std::size_t w = 0; w < words_per_row(); ++w) c += static_cast<std::size_t>(std::popcount(word(m, w)));
    return c;
  }

  // popcount(row_a AND row_b): entry (a, b) of Q Q^T.
  std::size_t row_overlap(std::size_t a, std::size_t b) const noexcept {
    std::size_t c = 0;
    for (std::size_t w = 0; w < words_per_row(); ++w)
      c += static_cast<std::size_t>(std::popcount(word(a, w) & word(b, w)));
    return c;
  }

  std::vector<std::size_t> zero_rows() const {
    std::vector<std::size_t> out;
    for (std::size_t m = 0; m < rows_; ++m)
      if (row_ones(m) == 0) out.push_back(m);
    return out;
  }

  double ones_fraction() const noexcept {
    std::size_t c = 0;
    for (std::size_t m = 0; m < rows_; ++m) c += row_ones(m);
    return static_cast<double>(c) / static_cast<double>(rows_ * cols_);
  }

  SensingMatrix transposed() const {
    SensingMatrix t(cols_, rows_);
    for (std::size_t m = 0; m < rows_; ++m)
      for (std::size_t w = 0; w < words_per_row(); ++w)
        for (std::uint64_t x = word(m, w); x != 0; x &= x - 1) t.set(64 * w + std::countr_zero(x), m, true);
    t.set_provenance(density_, seed_);
    return t;
  }

  // Subset of rows, in the given order.
  SensingMatrix select_rows(std::span<const std::size_t> which) const {
    SensingMatrix out(which.size(), cols_);
    for (std::size_t i = 0; i < which.size(); ++i) {
      if (which[i] >= rows_) throw std::out_of_range("row index out of range");
      std::memcpy(out.bytes_.data() + i * stride_, bytes_.data() + which[i] * stride_, stride_);
    }
    out.set_provenance(density_, seed_);
    return out;
  }

  static SensingMatrix identity(std::size_t n) {
    SensingMatrix q(n, n);
    for (std::size_t j = 0; j < n; ++j) q.set(j, j, true);
    return q;
  }

  // Rows e_{idx[0]}, e_{idx[1]}, ... of the N x N identity.
  static SensingMatrix single_pixel_rows(std::size_t n, std::span<const std::size_t> idx) {
    SensingMatrix q(idx.size(), n);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= n) throw std::out_of_range("pixel index out of range");
      q.set(i, idx[i], true);
    }
    return q;
  }

  friend bool operator==(const SensingMatrix& a, const SensingMatrix& b) noexcept {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.bytes_ == b.bytes_;
  }

 private:
  std::size_t rows_{0};
  std::size_t cols_{0};
  std::size_t stride_{0};
  std::vector<std::uint8_t> bytes_;
  double density_{0.0};
  std::uint64_t seed_{0};
};

// Fills row m of a mask matrix from the counter-based generator (see random.hpp).
inline void fill_mask_row(SensingMatrix& q, std::size_t m, double density, std::uint64_t seed) {
  const auto threshold = static_cast<std::uint64_t>(std::ldexp(density, 32));
  const auto key = key_from_seed(seed);
  const std::size_t n = q.cols();
  for (std::size_t block = 0; 4 * block < n; ++block) {
    const auto r = philox4x32_10({static_cast<std::uint32_t>(block), static_cast<std::uint32_t>(StreamTag::kMasks),
                                  static_cast<std::uint32_t>(m), static_cast<std::uint32_t>(std::uint64_t{m} >> 32)},
                                 key);
    for (std::size_t i = 0; i < 4 && 4 * block + i < n; ++i) q.set(m, 4 * block + i, r[i] < threshold);
  }
}

// m random masks with independent Bernoulli(density) entries. Row m depends only on (seed, m).
inline SensingMatrix generate_masks(std::size_t m, const Grid2D& grid, double density, std::uint64_t seed) {
  grid.validate();
  if (m == 0) throw std::invalid_argument("need at least one mask");
  if (!(density > 0.0 && density <= 1.0)) throw std::invalid_argument("mask density must lie in (0, 1]");
  SensingMatrix q(m, grid.size());
  for (std::size_t row = 0; row < m; ++row) fill_mask_row(q, row, density, seed);
  q.set_provenance(density, seed);
  return q;
}

}  // namespace cdm
