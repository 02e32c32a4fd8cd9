#include "endreg/end_core.hpp"

#include <cmath>
#include <string>

#include "endreg/errors.hpp"

namespace endreg {

void LabeledBatch::validate() const {
  const std::size_t m = features.cols();
  if (targets.size() != m || biases.size() != m) {
    throw PreconditionError("label arrays must have one entry per column (" +
                            std::to_string(m) + ")");
  }
  if (num_targets < 1 || num_biases < 1)
    throw PreconditionError("label cardinalities must be at least 1");
  for (std::size_t i = 0; i < m; ++i) {
    if (targets[i] >= num_targets)
      throw PreconditionError("target label out of range at sample " +
                              std::to_string(i));
    if (biases[i] >= num_biases)
      throw PreconditionError("bias label out of range at sample " +
                              std::to_string(i));
  }
}

void EnDConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha))
    throw PreconditionError("alpha must be a finite non-negative number");
  if (!(beta >= 0.0) || !std::isfinite(beta))
    throw PreconditionError("beta must be a finite non-negative number");
  if (!(norm_epsilon > 0.0))
    throw PreconditionError("norm_epsilon must be positive");
}

BatchPartition partition_batch(const LabeledBatch& batch) {
  batch.validate();
  BatchPartition p;
  p.num_targets = batch.num_targets;
  p.num_biases = batch.num_biases;
  p.m_tb.assign(p.num_targets * p.num_biases, 0);
  p.m_t.assign(p.num_targets, 0);
  p.m_b.assign(p.num_biases, 0);
  p.cells.resize(p.num_targets * p.num_biases);
  p.by_target.resize(p.num_targets);
  p.by_bias.resize(p.num_biases);
  p.targets = batch.targets;
  p.biases = batch.biases;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::size_t t = batch.targets[i];
    const std::size_t b = batch.biases[i];
    ++p.m_tb[t * p.num_biases + b];
    ++p.m_t[t];
    ++p.m_b[b];
    p.cells[t * p.num_biases + b].push_back(i);
    p.by_target[t].push_back(i);
    p.by_bias[b].push_back(i);
  }
  return p;
}

Matrix normalize_columns(const Matrix& y, double norm_epsilon) {
  const auto norms = column_l2_norms(y);
  Matrix out(y.rows(), y.cols());
  for (std::size_t c = 0; c < y.cols(); ++c) {
    if (!(norms[c] >= norm_epsilon)) {
      throw DegenerateFeatureError(
          c, "feature column " + std::to_string(c) + " has norm " +
                 std::to_string(norms[c]) + " below epsilon");
    }
    const double inv = 1.0 / norms[c];
    for (std::size_t r = 0; r < y.rows(); ++r) out(r, c) = y(r, c) * inv;
  }
  return out;
}

Matrix normalize_batch(const LabeledBatch& batch, const EnDConfig& cfg) {
  return normalize_columns(batch.features, cfg.norm_epsilon);
}

Gramian gramian(const Matrix& ytilde) {
  const auto norms = column_l2_norms(ytilde);
  for (std::size_t c = 0; c < norms.size(); ++c) {
    if (std::abs(norms[c] - 1.0) > 1e-6) {
      throw PreconditionError("gramian: column " + std::to_string(c) +
                              " is not unit-norm");
    }
  }
  return {matmul_tn(ytilde, ytilde),
          "normalized batch of " + std::to_string(ytilde.cols()) + " samples"};
}

namespace {

// Given a symmetric sensitivity S = dR/dG + (dR/dG)', dR/dY = Y * S.
Matrix grad_from_sensitivity(const Matrix& ytilde, Matrix sens) {
  const std::size_t m = sens.rows();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      const double s = sens(i, j) + sens(j, i);
      sens(i, j) = s;
      sens(j, i) = s;
    }
  }
  return matmul(ytilde, sens);
}

inline double sign(double v) noexcept {
  return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0);
}

void check_partition(const Matrix& ytilde, const BatchPartition& p) {
  if (p.total() != ytilde.cols()) {
    throw DimensionError("partition covers " + std::to_string(p.total()) +
                         " samples, features have " +
                         std::to_string(ytilde.cols()));
  }
}

}  // namespace

TermResult disentangling_term(const Matrix& ytilde, const BatchPartition& p) {
  check_partition(ytilde, p);
  const std::size_t m = ytilde.cols();
  const Matrix g = matmul_tn(ytilde, ytilde);

  std::size_t present = 0;
  for (std::size_t count : p.m_b) present += count > 0 ? 1 : 0;

  TermResult out;
  Matrix dg(m, m);
  if (present > 0) {
    const double inv_b = 1.0 / static_cast<double>(present);
    for (std::size_t b = 0; b < p.num_biases; ++b) {
      const auto& idx = p.by_bias[b];
      if (idx.empty()) continue;
      const double mb = static_cast<double>(idx.size());
      const double w = inv_b / (mb * mb);
      double sum = 0.0;
      for (std::size_t i : idx) {
        for (std::size_t j : idx) {
          sum += std::abs(g(i, j));
          dg(i, j) = w * sign(g(i, j));
        }
      }
      out.value += w * sum;
    }
  }
  out.grad = grad_from_sensitivity(ytilde, std::move(dg));
  return out;
}

TermResult naive_entangling_term(const Matrix& ytilde,
                                 const BatchPartition& p) {
  check_partition(ytilde, p);
  const std::size_t m = ytilde.cols();
  const Matrix g = matmul_tn(ytilde, ytilde);

  std::size_t present = 0;
  for (std::size_t count : p.m_t) present += count > 0 ? 1 : 0;

  TermResult out;
  Matrix dg(m, m);
  if (present == 0) {
    out.grad = Matrix(ytilde.rows(), m);
    return out;
  }
  const double inv_t = 1.0 / static_cast<double>(present);
  double total = 0.0;
  for (std::size_t t = 0; t < p.num_targets; ++t) {
    const auto& idx = p.by_target[t];
    if (idx.empty()) continue;
    const double mt = static_cast<double>(idx.size());
    const double w = inv_t / (mt * mt);
    double sum = 0.0;
    for (std::size_t i : idx) {
      for (std::size_t j : idx) {
        sum += g(i, j);
        dg(i, j) = -w;
      }
    }
    total += w * sum;
  }
  out.value = 1.0 - total;
  out.grad = grad_from_sensitivity(ytilde, std::move(dg));
  return out;
}

TermResult entangling_term(const Matrix& ytilde, const BatchPartition& p,
                           const EnDConfig& cfg) {
  check_partition(ytilde, p);
  (void)cfg.empty_cross_bias_policy;  // skip_sample is the only policy
  const std::size_t m = ytilde.cols();
  const Matrix g = matmul_tn(ytilde, ytilde);

  // Cross-bias partner count of sample i: same target, any other bias.
  std::vector<double> weight(m, 0.0);
  std::size_t active = 0;
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t t = p.targets[i];
    const std::size_t partners = p.m_t[t] - p.count(t, p.biases[i]);
    if (partners == 0) continue;
    weight[i] = 1.0 / static_cast<double>(partners);
    ++active;
  }

  TermResult out;
  out.skipped = m - active;
  Matrix dg(m, m);
  if (active == 0) {
    out.grad = Matrix(ytilde.rows(), m);
    return out;
  }
  const double inv_active = 1.0 / static_cast<double>(active);
  double total = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    if (weight[i] == 0.0) continue;
    double sum = 0.0;
    for (std::size_t j : p.by_target[p.targets[i]]) {
      if (p.biases[j] == p.biases[i]) continue;
      sum += g(i, j);
      dg(i, j) = -inv_active * weight[i];
    }
    total += weight[i] * sum;
  }
  out.value = 1.0 - inv_active * total;
  out.grad = grad_from_sensitivity(ytilde, std::move(dg));
  return out;
}

Matrix normalization_backward(const Matrix& y, const Matrix& ytilde,
                              const Matrix& grad_ytilde) {
  const auto norms = column_l2_norms(y);
  Matrix grad(y.rows(), y.cols());
  for (std::size_t c = 0; c < y.cols(); ++c) {
    double proj = 0.0;
    for (std::size_t r = 0; r < y.rows(); ++r)
      proj += ytilde(r, c) * grad_ytilde(r, c);
    const double inv = 1.0 / norms[c];
    for (std::size_t r = 0; r < y.rows(); ++r)
      grad(r, c) = (grad_ytilde(r, c) - ytilde(r, c) * proj) * inv;
  }
  return grad;
}

RegularizerOutput end_regularizer(const LabeledBatch& batch,
                                  const EnDConfig& cfg) {
  cfg.validate();
  const BatchPartition p = partition_batch(batch);
  const Matrix ytilde = normalize_batch(batch, cfg);

  RegularizerOutput out;
  Matrix grad_ytilde(ytilde.rows(), ytilde.cols());
  const TermResult perp = disentangling_term(ytilde, p);
  const TermResult par = entangling_term(ytilde, p, cfg);
  out.r_perp = perp.value;
  out.r_par = par.value;
  out.skipped = par.skipped;
  out.r = cfg.alpha * out.r_perp + cfg.beta * out.r_par;
  if (cfg.alpha != 0.0) grad_ytilde += cfg.alpha * perp.grad;
  if (cfg.beta != 0.0) grad_ytilde += cfg.beta * par.grad;
  out.grad = normalization_backward(batch.features, ytilde, grad_ytilde);
  return out;
}

}  // namespace endreg
