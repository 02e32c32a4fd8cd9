// Reference implementations written from the definitions with plain loops.
// They share no code with the library beyond the Matrix container.
#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "endreg/end_core.hpp"
#include "endreg/linalg.hpp"

namespace oracle {

using endreg::Label;
using endreg::Matrix;

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

inline Matrix normalize(const Matrix& y) {
  Matrix out(y.rows(), y.cols());
  for (std::size_t j = 0; j < y.cols(); ++j) {
    double n = 0.0;
    for (std::size_t i = 0; i < y.rows(); ++i) n += y(i, j) * y(i, j);
    n = std::sqrt(n);
    for (std::size_t i = 0; i < y.rows(); ++i) out(i, j) = y(i, j) / n;
  }
  return out;
}

inline double dot(const Matrix& y, std::size_t i, std::size_t j) {
  double s = 0.0;
  for (std::size_t k = 0; k < y.rows(); ++k) s += y(k, i) * y(k, j);
  return s;
}

// Mean |g| over every same-bias block (diagonal included), averaged over the
// bias classes that occur.
inline double r_perp(const Matrix& yt, const std::vector<Label>& biases,
                     std::size_t num_biases) {
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t b = 0; b < num_biases; ++b) {
    double sum = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < yt.cols(); ++i) {
      if (biases[i] != b) continue;
      ++m;
      for (std::size_t j = 0; j < yt.cols(); ++j)
        if (biases[j] == b) sum += std::abs(dot(yt, i, j));
    }
    if (m == 0) continue;
    ++present;
    total += sum / static_cast<double>(m * m);
  }
  return present ? total / static_cast<double>(present) : 0.0;
}

// One minus the mean g over every same-target block, averaged over targets.
inline double r_hat_par(const Matrix& yt, const std::vector<Label>& targets,
                        std::size_t num_targets) {
  double total = 0.0;
  std::size_t present = 0;
  for (std::size_t t = 0; t < num_targets; ++t) {
    double sum = 0.0;
    std::size_t m = 0;
    for (std::size_t i = 0; i < yt.cols(); ++i) {
      if (targets[i] != t) continue;
      ++m;
      for (std::size_t j = 0; j < yt.cols(); ++j)
        if (targets[j] == t) sum += dot(yt, i, j);
    }
    if (m == 0) continue;
    ++present;
    total += sum / static_cast<double>(m * m);
  }
  return present ? 1.0 - total / static_cast<double>(present) : 1.0;
}

struct ParResult {
  double value = 0.0;
  std::size_t skipped = 0;
};

// For each sample: mean g against same-target samples with a different bias.
// Samples without such partners are skipped.
inline ParResult r_par(const Matrix& yt, const std::vector<Label>& targets,
                       const std::vector<Label>& biases) {
  double total = 0.0;
  std::size_t used = 0, skipped = 0;
  for (std::size_t i = 0; i < yt.cols(); ++i) {
    double sum = 0.0;
    std::size_t partners = 0;
    for (std::size_t j = 0; j < yt.cols(); ++j) {
      if (targets[j] != targets[i] || biases[j] == biases[i]) continue;
      ++partners;
      sum += dot(yt, i, j);
    }
    if (partners == 0) {
      ++skipped;
      continue;
    }
    ++used;
    total += sum / static_cast<double>(partners);
  }
  if (used == 0) return {0.0, skipped};
  return {1.0 - total / static_cast<double>(used), skipped};
}

// Central differences of f with respect to every entry of x.
inline Matrix numeric_gradient(const std::function<double(const Matrix&)>& f,
                               Matrix x, double h) {
  Matrix g(x.rows(), x.cols());
  for (std::size_t r = 0; r < x.rows(); ++r)
    for (std::size_t c = 0; c < x.cols(); ++c) {
      const double keep = x(r, c);
      x(r, c) = keep + h;
      const double up = f(x);
      x(r, c) = keep - h;
      const double down = f(x);
      x(r, c) = keep;
      g(r, c) = (up - down) / (2.0 * h);
    }
  return g;
}

inline double max_rel_err(const Matrix& a, const Matrix& n) {
  double scale = 0.0;
  for (double v : n.data()) scale = std::max(scale, std::abs(v));
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const double x = a.data()[k], y = n.data()[k];
    const double den =
        std::max({std::abs(x), std::abs(y), 1e-3 * scale, 1e-12});
    worst = std::max(worst, std::abs(x - y) / den);
  }
  return worst;
}

}  // namespace oracle
