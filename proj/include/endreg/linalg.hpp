#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace endreg {

// Dense row-major matrix of doubles. Feature batches follow the
// columns-as-samples convention: a batch of M vectors of size N is an N x M
// matrix, so the Gramian of a normalized batch is simply Y' * Y.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);
  static Matrix from_data(std::size_t rows, std::size_t cols,
                          std::vector<double> data);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept {
    return data_[r * cols_ + c];
  }
  double operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  std::vector<double> column(std::size_t c) const;
  void set_column(std::size_t c, std::span<const double> values);

  Matrix transposed() const;
  bool all_finite() const noexcept;

  Matrix& operator+=(const Matrix& other);
  Matrix& operator-=(const Matrix& other);
  Matrix& operator*=(double s) noexcept;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

Matrix operator+(Matrix a, const Matrix& b);
Matrix operator-(Matrix a, const Matrix& b);
Matrix operator*(double s, Matrix a);

// Standard product a * b. Accumulation order is fixed (k outer, j inner per
// row), so results are bit-reproducible for a given build.
Matrix matmul(const Matrix& a, const Matrix& b);

// a' * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);

std::vector<double> column_l2_norms(const Matrix& a);

double max_abs(const Matrix& a) noexcept;
double max_abs_diff(const Matrix& a, const Matrix& b);

// Symmetric eigenvalues by cyclic Jacobi rotations, ascending. Intended for
// small matrices (Gramian property checks).
std::vector<double> symmetric_eigenvalues(const Matrix& a);

// xoshiro256** (Blackman & Vigna) seeded through splitmix64. The stream is a
// pure function of the seed on every platform; nothing here touches the
// standard library's unspecified distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) noexcept;
  // Independent substream, e.g. one per sample or per worker shard.
  Rng(std::uint64_t seed, std::uint64_t stream) noexcept;

  std::uint64_t seed() const noexcept { return seed_; }

  std::uint64_t next_u64() noexcept;
  // Uniform in [0, 1) with 53 bits of resolution.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept;
  // Uniform integer in [0, n); n must be positive.
  std::uint64_t below(std::uint64_t n) noexcept;
  // Standard normal via the Box-Muller transform.
  double normal() noexcept;

  template <typename T>
  void shuffle(std::span<T> values) noexcept {
    for (std::size_t i = values.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(values[i - 1], values[j]);
    }
  }

  const std::array<std::uint64_t, 4>& state() const noexcept { return s_; }

 private:
  std::uint64_t seed_;
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

std::uint64_t splitmix64(std::uint64_t& state) noexcept;

std::vector<double> rng_uniform(Rng& rng, std::size_t n);

Matrix random_normal(Rng& rng, std::size_t rows, std::size_t cols);

}  // namespace endreg
