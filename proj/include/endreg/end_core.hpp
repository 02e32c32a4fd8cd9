#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "endreg/linalg.hpp"

namespace endreg {

using Label = std::uint16_t;

// N x M feature matrix (column i is sample i) with per-sample target and
// bias classes.
struct LabeledBatch {
  Matrix features;
  std::vector<Label> targets;
  std::vector<Label> biases;
  std::size_t num_targets = 1;
  std::size_t num_biases = 1;

  std::size_t size() const noexcept { return features.cols(); }
  // Throws PreconditionError when labels and features disagree.
  void validate() const;
};

// Label counts of a batch. Index lists are in ascending sample order.
struct BatchPartition {
  std::size_t num_targets = 0;
  std::size_t num_biases = 0;
  std::vector<std::size_t> m_tb;  // row-major T x B
  std::vector<std::size_t> m_t;
  std::vector<std::size_t> m_b;
  std::vector<std::vector<std::size_t>> cells;  // indices per (t, b)
  std::vector<std::vector<std::size_t>> by_target;
  std::vector<std::vector<std::size_t>> by_bias;
  std::vector<Label> targets;
  std::vector<Label> biases;

  std::size_t count(std::size_t t, std::size_t b) const {
    return m_tb[t * num_biases + b];
  }
  std::size_t total() const noexcept { return targets.size(); }
};

enum class EmptyCrossBiasPolicy { skip_sample };

struct EnDConfig {
  double alpha = 1.0;
  double beta = 1.0;
  double norm_epsilon = 1e-12;
  EmptyCrossBiasPolicy empty_cross_bias_policy =
      EmptyCrossBiasPolicy::skip_sample;

  void validate() const;
};

struct Gramian {
  Matrix g;
  std::string source;
};

// Value of one regularizer term and its gradient with respect to the
// normalized features.
struct TermResult {
  double value = 0.0;
  Matrix grad;
  std::size_t skipped = 0;
};

struct RegularizerOutput {
  double r_perp = 0.0;
  double r_par = 0.0;
  double r = 0.0;
  Matrix grad;  // dR/dy for the raw features
  std::size_t skipped = 0;
};

BatchPartition partition_batch(const LabeledBatch& batch);

Matrix normalize_batch(const LabeledBatch& batch, const EnDConfig& cfg);
Matrix normalize_columns(const Matrix& y, double norm_epsilon);

Gramian gramian(const Matrix& ytilde);

// Mean absolute correlation inside each same-bias Gramian, diagonal included.
TermResult disentangling_term(const Matrix& ytilde,
                              const BatchPartition& partition);

// One minus the mean correlation inside each same-target Gramian. Kept for
// ablation; it ignores bias labels entirely.
TermResult naive_entangling_term(const Matrix& ytilde,
                                 const BatchPartition& partition);

// One minus the mean correlation between each sample and the same-target
// samples carrying a different bias. Samples with no such partner are
// skipped; TermResult::skipped reports how many.
TermResult entangling_term(const Matrix& ytilde,
                           const BatchPartition& partition,
                           const EnDConfig& cfg);

// Backpropagates dR/dytilde through y_i / |y_i|.
Matrix normalization_backward(const Matrix& y, const Matrix& ytilde,
                              const Matrix& grad_ytilde);

RegularizerOutput end_regularizer(const LabeledBatch& batch,
                                  const EnDConfig& cfg);

}  // namespace endreg
