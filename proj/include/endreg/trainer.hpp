#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "endreg/data.hpp"
#include "endreg/end_core.hpp"
#include "endreg/net.hpp"

namespace endreg {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t batch_size = 128;
  OptimizerConfig optimizer;
  EnDConfig end;
  std::uint64_t seed = 0;
  std::size_t eval_every = 1;
  // Empty layer list: conv_preset for images, mlp_preset for vectors.
  Architecture architecture;
  std::size_t mlp_hidden = 32;
  // false removes the regularizer branch entirely (no forward, no gradient).
  bool end_enabled = true;
  std::size_t workers = 1;

  void validate() const;
};

Architecture default_architecture(const BiasedDataset& data,
                                  std::size_t mlp_hidden);

struct TrainRecord {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  double r_perp = 0.0;
  double r_par = 0.0;
  double r = 0.0;
  double j = 0.0;
  double acc_train = 0.0;
  // NaN when the split was not evaluated this epoch. acc_unbiased is the
  // mean over (target, bias) cells of the unbiased split.
  double acc_biased = 0.0;
  double acc_unbiased = 0.0;
  double skipped_frac = 0.0;
};

struct EvalReport {
  std::size_t samples = 0;
  std::size_t num_targets = 0;
  std::size_t num_biases = 0;
  double accuracy = 0.0;
  std::vector<std::size_t> cell_count;    // T x B
  std::vector<std::size_t> cell_correct;  // T x B
  std::vector<double> per_tb_accuracy;    // NaN for empty cells
  std::size_t empty_cells = 0;
  double unbiased_avg_accuracy = 0.0;
  // Binary tasks only; class 1 is the positive class.
  std::optional<double> tpr;
  std::optional<double> tnr;
  std::optional<double> balanced_accuracy;
};

EvalReport evaluate_predictions(std::span<const Label> predictions,
                                std::span<const Label> targets,
                                std::span<const Label> biases,
                                std::size_t num_targets, std::size_t num_biases);

template <typename T>
std::vector<Label> predict(const Network<T>& net, const BiasedDataset& data);

EvalReport evaluate(const Network<float>& net, const BiasedDataset& data);

// One minibatch of J = L + alpha R_perp + beta R_par with gradients for every
// parameter. This is exactly the step the trainer takes.
template <typename T>
struct Objective {
  double loss = 0.0;
  double r_perp = 0.0;
  double r_par = 0.0;
  double r = 0.0;
  double j = 0.0;
  std::size_t skipped = 0;
  std::size_t correct = 0;
  Gradients<T> grads;
};

template <typename T>
Objective<T> objective(const Network<T>& net, const Tensor<T>& inputs,
                       std::span<const Label> targets,
                       std::span<const Label> biases, std::size_t num_targets,
                       std::size_t num_biases, const EnDConfig& end,
                       bool end_enabled, bool with_gradients = true);

template <typename T>
Tensor<T> gather_batch(const BiasedDataset& data,
                       std::span<const std::size_t> indices);

struct EvalSets {
  const BiasedDataset* biased = nullptr;
  const BiasedDataset* unbiased = nullptr;
};

struct TrainResult {
  std::vector<TrainRecord> records;
  Network<float> model;
};

TrainResult train(const TrainConfig& config, const BiasedDataset& train_set,
                  const EvalSets& eval_sets = {});

struct KickInOptions {
  double drop_fraction = 0.2;
  double loss_threshold = 0.5;
};

// First epoch whose R sits more than drop_fraction below the running maximum
// of R while L is under loss_threshold.
std::optional<std::size_t> detect_kick_in(std::span<const TrainRecord> records,
                                          const KickInOptions& options = {});

struct AblationArm {
  std::string label;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<std::uint64_t> seeds;
  std::vector<std::vector<TrainRecord>> records;  // per seed
  std::vector<EvalReport> biased;                 // per seed
  std::vector<EvalReport> unbiased;               // per seed
  double mean_biased = 0.0;    // overall accuracy
  double mean_unbiased = 0.0;  // (target, bias) cell average
};

// Arms in fixed order: vanilla, disentangling only, entangling only, full.
std::vector<AblationArm> ablate(const TrainConfig& config,
                                const BiasedDataset& train_set,
                                const BiasedDataset& biased_test,
                                const BiasedDataset& unbiased_test,
                                std::span<const std::uint64_t> seeds);

std::string ablation_table(std::span<const AblationArm> arms);

struct GradcheckConfig {
  std::uint64_t seed = 0;
  std::size_t regularizer_instances = 20;
  std::size_t max_samples = 16;
  std::size_t max_features = 8;
  std::size_t network_instances = 3;
  double step = 1e-6;
  double alpha = 0.7;
  double beta = 0.3;
  double regularizer_tolerance = 1e-5;
  double network_tolerance = 1e-4;
};

struct GradcheckReport {
  std::size_t regularizer_instances = 0;
  std::size_t network_instances = 0;
  std::size_t network_parameters = 0;
  double max_rel_err_regularizer = 0.0;
  double max_rel_err_network = 0.0;
  double max_regularizer_grad_norm = 0.0;
  // Network entries whose finite difference straddles a ReLU kink at every
  // step size tried.
  std::size_t kink_skipped = 0;
  bool passed = false;
};

// |a - n| / max(|a|, |n|, 1e-3 * max|n|, 1e-12), maximized over entries.
double max_relative_error(std::span<const double> analytic,
                          std::span<const double> numeric);

GradcheckReport gradcheck(const GradcheckConfig& config);

// Metrics CSV: header then one %.6f row per record.
std::string metrics_csv(std::span<const TrainRecord> records);

}  // namespace endreg
