#include "endreg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>
#include <thread>

#include "endreg/errors.hpp"

namespace endreg {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr std::size_t kEvalChunk = 512;
}  // namespace

void TrainConfig::validate() const {
  if (epochs < 1) throw PreconditionError("epochs must be at least 1");
  if (batch_size < 2) throw PreconditionError("batch_size must be at least 2");
  if (eval_every < 1) throw PreconditionError("eval_every must be at least 1");
  if (!(optimizer.lr > 0.0)) throw PreconditionError("lr must be positive");
  end.validate();
}

Architecture default_architecture(const BiasedDataset& data,
                                  std::size_t mlp_hidden) {
  const std::size_t classes = data.spec.n_targets;
  if (data.shape.height > 1 || data.shape.width > 1)
    return conv_preset(data.shape, classes);
  return mlp_preset(data.shape.size(), mlp_hidden, classes);
}

EvalReport evaluate_predictions(std::span<const Label> predictions,
                                std::span<const Label> targets,
                                std::span<const Label> biases,
                                std::size_t num_targets, std::size_t num_biases) {
  const std::size_t n = targets.size();
  if (n == 0) throw EvalError("cannot evaluate an empty dataset");
  if (predictions.size() != n || biases.size() != n)
    throw EvalError("prediction and label arrays differ in length");
  EvalReport r;
  r.samples = n;
  r.num_targets = num_targets;
  r.num_biases = num_biases;
  r.cell_count.assign(num_targets * num_biases, 0);
  r.cell_correct.assign(num_targets * num_biases, 0);
  std::size_t correct = 0, tp = 0, pos = 0, tn = 0, neg = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (targets[i] >= num_targets || biases[i] >= num_biases)
      throw EvalError("label out of range at sample " + std::to_string(i));
    const bool hit = predictions[i] == targets[i];
    const std::size_t cell = targets[i] * num_biases + biases[i];
    ++r.cell_count[cell];
    if (hit) {
      ++r.cell_correct[cell];
      ++correct;
    }
    if (targets[i] == 1) {
      ++pos;
      tp += hit ? 1 : 0;
    } else {
      ++neg;
      tn += hit ? 1 : 0;
    }
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  r.per_tb_accuracy.assign(r.cell_count.size(), kNaN);
  double sum = 0.0;
  std::size_t filled = 0;
  for (std::size_t c = 0; c < r.cell_count.size(); ++c) {
    if (r.cell_count[c] == 0) {
      ++r.empty_cells;
      continue;
    }
    r.per_tb_accuracy[c] = static_cast<double>(r.cell_correct[c]) /
                           static_cast<double>(r.cell_count[c]);
    sum += r.per_tb_accuracy[c];
    ++filled;
  }
  r.unbiased_avg_accuracy = sum / static_cast<double>(filled);
  if (num_targets == 2) {
    r.tpr = pos > 0 ? static_cast<double>(tp) / static_cast<double>(pos) : kNaN;
    r.tnr = neg > 0 ? static_cast<double>(tn) / static_cast<double>(neg) : kNaN;
    r.balanced_accuracy = (*r.tpr + *r.tnr) / 2.0;
  }
  return r;
}

template <typename T>
Tensor<T> gather_batch(const BiasedDataset& data,
                       std::span<const std::size_t> indices) {
  Tensor<T> t(indices.size(), data.shape);
  for (std::size_t k = 0; k < indices.size(); ++k) {
    auto s = data.sample(indices[k]);
    std::copy(s.begin(), s.end(), t.sample(k));
  }
  return t;
}

namespace {

template <typename T>
Label argmax(const T* z, std::size_t n) {
  std::size_t best = 0;
  for (std::size_t k = 1; k < n; ++k)
    if (z[k] > z[best]) best = k;
  return static_cast<Label>(best);
}

}  // namespace

template <typename T>
std::vector<Label> predict(const Network<T>& net, const BiasedDataset& data) {
  std::vector<Label> out(data.size());
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += kEvalChunk) {
    const std::size_t end = std::min(data.size(), start + kEvalChunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const ForwardTrace<T> tr = net.forward(gather_batch<T>(data, idx));
    const Tensor<T>& lg = tr.logits();
    for (std::size_t k = 0; k < idx.size(); ++k)
      out[start + k] = argmax(lg.sample(k), lg.sample_size());
  }
  return out;
}

EvalReport evaluate(const Network<float>& net, const BiasedDataset& data) {
  if (data.size() == 0) throw EvalError("cannot evaluate an empty dataset");
  const std::vector<Label> pred = predict(net, data);
  return evaluate_predictions(pred, data.targets, data.biases,
                              data.spec.n_targets, data.spec.n_biases);
}

template <typename T>
Objective<T> objective(const Network<T>& net, const Tensor<T>& inputs,
                       std::span<const Label> targets,
                       std::span<const Label> biases, std::size_t num_targets,
                       std::size_t num_biases, const EnDConfig& end,
                       bool end_enabled, bool with_gradients) {
  const ForwardTrace<T> trace = net.forward(inputs);
  Objective<T> out;
  Tensor<T> grad_logits;
  out.loss = softmax_cross_entropy(trace.logits(), targets,
                                   with_gradients ? &grad_logits : nullptr);
  const Tensor<T>& lg = trace.logits();
  for (std::size_t i = 0; i < lg.batch; ++i)
    out.correct += argmax(lg.sample(i), lg.sample_size()) == targets[i] ? 1 : 0;

  Matrix grad_gamma;
  if (end_enabled) {
    LabeledBatch batch;
    batch.features = trace.gamma_output();
    batch.targets.assign(targets.begin(), targets.end());
    batch.biases.assign(biases.begin(), biases.end());
    batch.num_targets = num_targets;
    batch.num_biases = num_biases;
    const bool active = end.alpha != 0.0 || end.beta != 0.0;
    if (!active) {
      // Monitoring only: nothing flows back, so degenerate columns are
      // dropped instead of aborting the run.
      const auto norms = column_l2_norms(batch.features);
      std::vector<std::size_t> keep;
      for (std::size_t c = 0; c < norms.size(); ++c)
        if (norms[c] >= end.norm_epsilon) keep.push_back(c);
      if (keep.size() != norms.size()) {
        LabeledBatch kept;
        kept.num_targets = num_targets;
        kept.num_biases = num_biases;
        kept.features = Matrix(batch.features.rows(), keep.size());
        for (std::size_t k = 0; k < keep.size(); ++k) {
          kept.features.set_column(k, batch.features.column(keep[k]));
          kept.targets.push_back(batch.targets[keep[k]]);
          kept.biases.push_back(batch.biases[keep[k]]);
        }
        batch = std::move(kept);
      }
    }
    const RegularizerOutput reg = end_regularizer(batch, end);
    out.r_perp = reg.r_perp;
    out.r_par = reg.r_par;
    out.r = reg.r;
    out.skipped = reg.skipped;
    if (active) grad_gamma = reg.grad;
  }
  out.j = out.loss + out.r;
  if (with_gradients) out.grads = net.backward(trace, grad_logits, grad_gamma);
  return out;
}

TrainResult train(const TrainConfig& config, const BiasedDataset& train_set,
                  const EvalSets& eval_sets) {
  config.validate();
  if (train_set.size() == 0) throw PreconditionError("training set is empty");
  const Architecture arch = config.architecture.layers.empty()
                                ? default_architecture(train_set, config.mlp_hidden)
                                : config.architecture;
  TrainResult result{{}, Network<float>(arch, config.seed)};
  Network<float>& net = result.model;
  const std::size_t classes = train_set.spec.n_targets;
  if (arch.num_classes() != classes)
    throw DimensionError("network emits " + std::to_string(arch.num_classes()) +
                         " logits for " + std::to_string(classes) + " classes");

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Label> bt, bb;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(config.seed, 0x5eed0000ULL + epoch);
    shuffle_rng.shuffle(std::span<std::size_t>(order));

    TrainRecord rec;
    rec.epoch = epoch;
    std::size_t batches = 0, seen = 0, correct = 0, skipped = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      if (end - start < 2) break;
      std::span<const std::size_t> idx(order.data() + start, end - start);
      const Tensor<float> inputs = gather_batch<float>(train_set, idx);
      bt.clear();
      bb.clear();
      for (std::size_t i : idx) {
        bt.push_back(train_set.targets[i]);
        bb.push_back(train_set.biases[i]);
      }
      Objective<float> obj;
      try {
        obj = objective(net, inputs, bt, bb, classes, train_set.spec.n_biases,
                        config.end, config.end_enabled);
      } catch (const DegenerateFeatureError& e) {
        throw DegenerateFeatureError(
            e.sample(), "epoch " + std::to_string(epoch) + ", batch " +
                            std::to_string(batches) + ": " + e.what());
      }
      optimizer_step(net, obj.grads, config.optimizer);
      rec.loss += obj.loss;
      rec.r_perp += obj.r_perp;
      rec.r_par += obj.r_par;
      rec.r += obj.r;
      rec.j += obj.j;
      correct += obj.correct;
      skipped += obj.skipped;
      seen += idx.size();
      ++batches;
    }
    if (!net.all_finite())
      throw PreconditionError("parameters became non-finite in epoch " +
                              std::to_string(epoch));
    const double nb = static_cast<double>(std::max<std::size_t>(batches, 1));
    rec.loss /= nb;
    rec.r_perp /= nb;
    rec.r_par /= nb;
    rec.r /= nb;
    rec.j /= nb;
    rec.acc_train = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
    rec.skipped_frac =
        seen ? static_cast<double>(skipped) / static_cast<double>(seen) : 0.0;
    const bool eval_now = epoch % config.eval_every == 0 || epoch == config.epochs;
    rec.acc_biased = eval_now && eval_sets.biased
                         ? evaluate(net, *eval_sets.biased).accuracy
                         : kNaN;
    rec.acc_unbiased = eval_now && eval_sets.unbiased
                           ? evaluate(net, *eval_sets.unbiased).unbiased_avg_accuracy
                           : kNaN;
    result.records.push_back(rec);
  }
  return result;
}

std::optional<std::size_t> detect_kick_in(std::span<const TrainRecord> records,
                                          const KickInOptions& options) {
  if (records.size() < 3) return std::nullopt;
  double running_max = records.front().r;
  for (std::size_t k = 1; k < records.size(); ++k) {
    const TrainRecord& rec = records[k];
    if (rec.loss < options.loss_threshold &&
        running_max - rec.r > options.drop_fraction * running_max)
      return rec.epoch;
    running_max = std::max(running_max, rec.r);
  }
  return std::nullopt;
}

std::vector<AblationArm> ablate(const TrainConfig& config,
                                const BiasedDataset& train_set,
                                const BiasedDataset& biased_test,
                                const BiasedDataset& unbiased_test,
                                std::span<const std::uint64_t> seeds) {
  if (seeds.empty()) throw PreconditionError("ablation needs at least one seed");
  const double a = config.end.alpha, b = config.end.beta;
  std::vector<AblationArm> arms = {{"vanilla", 0.0, 0.0, {}, {}, {}, {}, 0, 0},
                                   {"disentangling_only", a, 0.0, {}, {}, {}, {}, 0, 0},
                                   {"entangling_only", 0.0, b, {}, {}, {}, {}, 0, 0},
                                   {"full", a, b, {}, {}, {}, {}, 0, 0}};
  const std::size_t ns = seeds.size();
  for (auto& arm : arms) {
    arm.seeds.assign(seeds.begin(), seeds.end());
    arm.records.resize(ns);
    arm.biased.resize(ns);
    arm.unbiased.resize(ns);
  }
  const std::size_t jobs = arms.size() * ns;
  auto run = [&](std::size_t job) {
    AblationArm& arm = arms[job / ns];
    const std::size_t s = job % ns;
    TrainConfig cfg = config;
    cfg.seed = seeds[s];
    cfg.end.alpha = arm.alpha;
    cfg.end.beta = arm.beta;
    TrainResult res = train(cfg, train_set, {&biased_test, &unbiased_test});
    arm.records[s] = std::move(res.records);
    arm.biased[s] = evaluate(res.model, biased_test);
    arm.unbiased[s] = evaluate(res.model, unbiased_test);
  };
  const std::size_t workers = std::max<std::size_t>(1, std::min(config.workers, jobs));
  if (workers == 1) {
    for (std::size_t j = 0; j < jobs; ++j) run(j);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (std::size_t j = w; j < jobs; j += workers) run(j);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  for (auto& arm : arms) {
    for (std::size_t s = 0; s < ns; ++s) {
      arm.mean_biased += arm.biased[s].accuracy / static_cast<double>(ns);
      arm.mean_unbiased +=
          arm.unbiased[s].unbiased_avg_accuracy / static_cast<double>(ns);
    }
  }
  return arms;
}

std::string ablation_table(std::span<const AblationArm> arms) {
  std::ostringstream os;
  os << "setting,alpha,beta,seeds,mean_acc_biased,mean_acc_unbiased\n";
  char buf[256];
  for (const auto& arm : arms) {
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%zu,%.6f,%.6f\n",
                  arm.label.c_str(), arm.alpha, arm.beta, arm.seeds.size(),
                  arm.mean_biased, arm.mean_unbiased);
    os << buf;
  }
  return os.str();
}

double max_relative_error(std::span<const double> analytic,
                          std::span<const double> numeric) {
  if (analytic.size() != numeric.size())
    throw DimensionError("gradient length mismatch");
  double scale = 0.0;
  for (double v : numeric) scale = std::max(scale, std::abs(v));
  const double floor = std::max(1e-3 * scale, 1e-12);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric[i]), floor});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]) / denom);
  }
  return worst;
}

namespace {

LabeledBatch random_batch(Rng& rng, std::size_t m, std::size_t n) {
  LabeledBatch b;
  b.num_targets = 1 + rng.below(3);
  b.num_biases = 1 + rng.below(3);
  b.features = random_normal(rng, n, m);
  for (std::size_t i = 0; i < m; ++i) {
    b.targets.push_back(static_cast<Label>(rng.below(b.num_targets)));
    b.biases.push_back(static_cast<Label>(rng.below(b.num_biases)));
  }
  return b;
}

std::vector<char> relu_signature(const Network<double>& net,
                                 const Tensor<double>& inputs) {
  const ForwardTrace<double> tr = net.forward(inputs);
  std::vector<char> sig;
  const auto& layers = net.architecture().layers;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].kind != LayerKind::relu) continue;
    for (double v : tr.activations[l].data) sig.push_back(v > 0.0 ? 1 : 0);
  }
  return sig;
}

Architecture small_conv(std::size_t classes) {
  Architecture a;
  a.input = Shape{6, 6, 3};
  a.layers = {LayerSpec::Conv(3, 4, 3, 1, 1), LayerSpec::Relu(),
              LayerSpec::Conv(4, 6, 3, 2, 1), LayerSpec::Relu(),
              LayerSpec::GlobalAvgPool().tag_gamma(), LayerSpec::Dense(6, classes)};
  return a;
}

}  // namespace

GradcheckReport gradcheck(const GradcheckConfig& config) {
  GradcheckReport rep;
  EnDConfig end;
  end.alpha = config.alpha;
  end.beta = config.beta;
  const double h = config.step;

  for (std::size_t inst = 0; inst < config.regularizer_instances; ++inst) {
    Rng rng(config.seed, 0x6c00 + inst);
    const std::size_t m = 2 + rng.below(std::max<std::size_t>(config.max_samples, 2) - 1);
    const std::size_t n = 2 + rng.below(std::max<std::size_t>(config.max_features, 2) - 1);
    LabeledBatch batch = random_batch(rng, m, n);
    const RegularizerOutput out = end_regularizer(batch, end);
    double norm = 0.0;
    for (double g : out.grad.data()) norm += g * g;
    rep.max_regularizer_grad_norm = std::max(rep.max_regularizer_grad_norm, std::sqrt(norm));
    std::vector<double> numeric(batch.features.size());
    for (std::size_t k = 0; k < numeric.size(); ++k) {
      double& v = batch.features.data()[k];
      const double saved = v;
      v = saved + h;
      const double up = end_regularizer(batch, end).r;
      v = saved - h;
      const double down = end_regularizer(batch, end).r;
      v = saved;
      numeric[k] = (up - down) / (2.0 * h);
    }
    rep.max_rel_err_regularizer = std::max(
        rep.max_rel_err_regularizer, max_relative_error(out.grad.data(), numeric));
    ++rep.regularizer_instances;
  }

  for (std::size_t inst = 0; inst < config.network_instances; ++inst) {
    // Redraw until no Γ column is degenerate; the regularizer rejects those.
    for (std::uint64_t attempt = 0;; ++attempt) {
      Rng rng(config.seed, 0x7e00 + inst * 1000 + attempt);
      const std::size_t classes = 3, biases = 3, m = 8;
      const Architecture arch =
          inst % 2 == 0 ? small_conv(classes) : mlp_preset(6, 8, classes);
      Network<double> net(arch, config.seed + 31 * inst + attempt);
      for (auto& p : net.params())
        for (double& b : p.bias) b = 0.1 * rng.normal();
      Tensor<double> x(m, arch.input);
      for (double& v : x.data) v = rng.normal();
      std::vector<Label> t(m), b(m);
      for (std::size_t i = 0; i < m; ++i) {
        t[i] = static_cast<Label>(rng.below(classes));
        b[i] = static_cast<Label>(rng.below(biases));
      }
      Objective<double> obj;
      try {
        obj = objective(net, x, t, b, classes, biases, end, true);
      } catch (const DegenerateFeatureError&) {
        continue;
      }
      const std::vector<char> base_sig = relu_signature(net, x);
      std::vector<double> analytic, numeric;
      for (std::size_t l = 0; l < net.params().size(); ++l) {
        for (int which = 0; which < 2; ++which) {
          std::vector<double>& blob =
              which == 0 ? net.params()[l].weight : net.params()[l].bias;
          const std::vector<double>& gblob =
              which == 0 ? obj.grads[l].weight : obj.grads[l].bias;
          for (std::size_t k = 0; k < blob.size(); ++k) {
            const double saved = blob[k];
            bool ok = false;
            double fd = 0.0;
            for (double step = h; step >= h * 1e-3; step *= 0.1) {
              blob[k] = saved + step;
              const bool same_up = relu_signature(net, x) == base_sig;
              const double up =
                  objective(net, x, t, b, classes, biases, end, true, false).j;
              blob[k] = saved - step;
              const bool same_down = relu_signature(net, x) == base_sig;
              const double down =
                  objective(net, x, t, b, classes, biases, end, true, false).j;
              blob[k] = saved;
              if (same_up && same_down) {
                fd = (up - down) / (2.0 * step);
                ok = true;
                break;
              }
            }
            if (!ok) {
              ++rep.kink_skipped;
              continue;
            }
            analytic.push_back(gblob[k]);
            numeric.push_back(fd);
          }
        }
      }
      rep.network_parameters += net.parameter_count();
      rep.max_rel_err_network =
          std::max(rep.max_rel_err_network, max_relative_error(analytic, numeric));
      ++rep.network_instances;
      break;
    }
  }
  rep.passed = rep.max_rel_err_regularizer < config.regularizer_tolerance &&
               rep.max_rel_err_network < config.network_tolerance;
  return rep;
}

std::string metrics_csv(std::span<const TrainRecord> records) {
  std::ostringstream os;
  os << "epoch,loss,r_perp,r_par,r,j,acc_train,acc_biased,acc_unbiased,skipped_frac\n";
  char buf[512];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f,%.6f\n",
                  r.epoch, r.loss, r.r_perp, r.r_par, r.r, r.j, r.acc_train,
                  r.acc_biased, r.acc_unbiased, r.skipped_frac);
    os << buf;
  }
  return os.str();
}

template Tensor<float> gather_batch<float>(const BiasedDataset&, std::span<const std::size_t>);
template Tensor<double> gather_batch<double>(const BiasedDataset&, std::span<const std::size_t>);
template std::vector<Label> predict<float>(const Network<float>&, const BiasedDataset&);
template std::vector<Label> predict<double>(const Network<double>&, const BiasedDataset&);
template Objective<float> objective<float>(const Network<float>&, const Tensor<float>&,
                                           std::span<const Label>, std::span<const Label>,
                                           std::size_t, std::size_t, const EnDConfig&,
                                           bool, bool);
template Objective<double> objective<double>(const Network<double>&, const Tensor<double>&,
                                             std::span<const Label>, std::span<const Label>,
                                             std::size_t, std::size_t, const EnDConfig&,
                                             bool, bool);

}  // namespace endreg
