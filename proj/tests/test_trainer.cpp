#include <gtest/gtest.h>

#include <cmath>
#include <memory>
#include <set>
#include <thread>

#include "endreg/errors.hpp"
#include "endreg/trainer.hpp"

using namespace endreg;

namespace {

DatasetSpec gaussian(std::size_t n, double rho, std::uint64_t seed = 0) {
  DatasetSpec s;
  s.generator = Generator::gaussian_clusters;
  s.n_samples = n;
  s.n_targets = s.n_biases = 3;
  s.rho = rho;
  s.shape = Shape{1, 1, 8};
  s.seed = seed;
  s.noise = 0.5;
  return s;
}

TrainConfig small_config(std::size_t epochs = 3) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 16;
  c.mlp_hidden = 12;
  c.end.alpha = 0.5;
  c.end.beta = 0.5;
  c.optimizer.lr = 1e-2;
  return c;
}

std::vector<TrainRecord> series(const std::vector<double>& r, double loss = 0.1) {
  std::vector<TrainRecord> out;
  for (std::size_t k = 0; k < r.size(); ++k) {
    TrainRecord rec;
    rec.epoch = k + 1;
    rec.r = r[k];
    rec.loss = loss;
    out.push_back(rec);
  }
  return out;
}

std::size_t scan_skipped(std::span<const Label> t, std::span<const Label> b) {
  std::size_t skipped = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    bool partner = false;
    for (std::size_t j = 0; j < t.size(); ++j) partner |= t[j] == t[i] && b[j] != b[i];
    skipped += !partner;
  }
  return skipped;
}

}  // namespace

TEST(Evaluate, PerfectPredictions) {
  const std::vector<Label> t{0, 1, 1, 0}, b{0, 0, 1, 1};
  const EvalReport r = evaluate_predictions(t, t, b, 2, 2);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.unbiased_avg_accuracy, 1.0);
  EXPECT_EQ(*r.balanced_accuracy, 1.0);
}

TEST(Evaluate, BinaryRates) {
  const std::vector<Label> t{1, 1, 0, 0}, b{0, 1, 0, 1}, p{1, 1, 1, 1};
  const EvalReport r = evaluate_predictions(p, t, b, 2, 2);
  EXPECT_EQ(*r.tpr, 1.0);
  EXPECT_EQ(*r.tnr, 0.0);
  EXPECT_EQ(*r.balanced_accuracy, 0.5);
  EXPECT_NEAR(*r.balanced_accuracy, (*r.tpr + *r.tnr) / 2, 1e-12);
}

TEST(Evaluate, CellAverage) {
  // Cells (t, b): (0,0) 3 samples 3 hits, (0,1) 1 sample 0 hits, (1,0) 2
  // samples 1 hit, (1,1) empty.
  const std::vector<Label> t{0, 0, 0, 0, 1, 1};
  const std::vector<Label> b{0, 0, 0, 1, 0, 0};
  const std::vector<Label> p{0, 0, 0, 1, 1, 0};
  const EvalReport r = evaluate_predictions(p, t, b, 2, 2);
  EXPECT_EQ(r.empty_cells, 1u);
  EXPECT_NEAR(r.unbiased_avg_accuracy, (1.0 + 0.0 + 0.5) / 3.0, 1e-15);
  EXPECT_NEAR(r.accuracy, 4.0 / 6.0, 1e-15);
  EXPECT_TRUE(std::isnan(r.per_tb_accuracy[3]));
  EXPECT_FALSE(evaluate_predictions(p, t, b, 3, 2).tpr.has_value());
}

TEST(Evaluate, EmptyDatasetThrows) {
  EXPECT_THROW(evaluate_predictions({}, {}, {}, 2, 2), EvalError);
}

TEST(Objective, SkippedMatchesLabelScan) {
  const BiasedDataset ds = generate(gaussian(200, 0.7, 1));
  const Network<float> net(default_architecture(ds, 12), 1);
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<std::size_t> idx(2 + rng.below(20));
    for (auto& i : idx) i = rng.below(ds.size());
    std::vector<Label> t, b;
    for (auto i : idx) {
      t.push_back(ds.targets[i]);
      b.push_back(ds.biases[i]);
    }
    EnDConfig end;
    const auto obj = objective(net, gather_batch<float>(ds, idx), t, b, 3, 3, end, true);
    EXPECT_EQ(obj.skipped, scan_skipped(t, b));
    EXPECT_NEAR(obj.j, obj.loss + obj.r, 1e-12);
  }
}

TEST(Train, RecordsSatisfyInvariants) {
  const BiasedDataset ds = generate(gaussian(300, 0.9, 2));
  const BiasedDataset biased = build_eval_split(ds, SplitMode::biased_test, 200);
  const BiasedDataset unbiased = build_eval_split(ds, SplitMode::unbiased_test, 200);
  const TrainResult res = train(small_config(4), ds, {&biased, &unbiased});
  ASSERT_EQ(res.records.size(), 4u);
  for (const TrainRecord& r : res.records) {
    EXPECT_NEAR(r.j, r.loss + r.r, 1e-9);
    EXPECT_NEAR(r.r, 0.5 * r.r_perp + 0.5 * r.r_par, 1e-9);
    EXPECT_GE(r.skipped_frac, 0.0);
    EXPECT_LE(r.skipped_frac, 1.0);
    for (double a : {r.acc_train, r.acc_biased, r.acc_unbiased}) {
      EXPECT_GE(a, 0.0);
      EXPECT_LE(a, 1.0);
    }
  }
}

TEST(Train, SkippedFractionExtremes) {
  // Every sample shares its bias with all same-target samples.
  const BiasedDataset aligned = generate(gaussian(96, 1.0, 3));
  for (const TrainRecord& r : train(small_config(2), aligned).records)
    EXPECT_EQ(r.skipped_frac, 1.0);
}

TEST(Train, ZeroWeightsMatchDisabledBranch) {
  const BiasedDataset ds = generate(gaussian(200, 0.8, 4));
  TrainConfig a = small_config(3);
  a.end.alpha = a.end.beta = 0.0;
  TrainConfig b = a;
  b.end_enabled = false;
  const TrainResult ra = train(a, ds), rb = train(b, ds);
  for (std::size_t l = 0; l < ra.model.params().size(); ++l) {
    EXPECT_EQ(ra.model.params()[l].weight, rb.model.params()[l].weight);
    EXPECT_EQ(ra.model.params()[l].bias, rb.model.params()[l].bias);
  }
  for (std::size_t e = 0; e < ra.records.size(); ++e) {
    EXPECT_EQ(ra.records[e].loss, rb.records[e].loss);
    EXPECT_EQ(ra.records[e].acc_train, rb.records[e].acc_train);
    EXPECT_EQ(ra.records[e].r, 0.0);
  }
}

TEST(Train, SmokeObjectiveDecreasesOverOneEpoch) {
  const BiasedDataset ds = generate(gaussian(64, 0.8, 5));
  Network<float> net(default_architecture(ds, 12), 5);
  OptimizerConfig opt;
  opt.lr = 1e-2;
  EnDConfig end;
  std::vector<double> js;
  for (std::size_t start = 0; start < 64; start += 8) {
    std::vector<std::size_t> idx;
    std::vector<Label> t, b;
    for (std::size_t i = start; i < start + 8; ++i) {
      idx.push_back(i);
      t.push_back(ds.targets[i]);
      b.push_back(ds.biases[i]);
    }
    // J on the whole set before each step.
    std::vector<std::size_t> all(64);
    std::vector<Label> ta(ds.targets), ba(ds.biases);
    for (std::size_t i = 0; i < 64; ++i) all[i] = i;
    js.push_back(objective(net, gather_batch<float>(ds, all), ta, ba, 3, 3, end, true, false).j);
    const auto obj = objective(net, gather_batch<float>(ds, idx), t, b, 3, 3, end, true);
    optimizer_step(net, obj.grads, opt);
  }
  EXPECT_LT(js.back(), js.front());
}

TEST(Train, ReproducibleForSameSeed) {
  const BiasedDataset ds = generate(gaussian(200, 0.8, 6));
  const TrainResult a = train(small_config(3), ds), b = train(small_config(3), ds);
  EXPECT_EQ(metrics_csv(a.records), metrics_csv(b.records));
  TrainConfig other = small_config(3);
  other.seed = 1;
  EXPECT_NE(metrics_csv(train(other, ds).records), metrics_csv(a.records));
}

// Results must not depend on where the heap places buffers, including a
// different thread's allocator arena.
TEST(Train, ReproducibleAcrossHeapLayouts) {
  DatasetSpec spec;
  spec.generator = Generator::colored_patterns;
  spec.n_samples = 1000;
  spec.rho = 0.9;
  spec.shape = Shape{16, 16, 3};
  const BiasedDataset ds = generate(spec);
  TrainConfig cfg = small_config(1);
  cfg.batch_size = 128;
  auto weights = [&] {
    const TrainResult r = train(cfg, ds);
    std::vector<float> w;
    for (const auto& p : r.model.params()) {
      w.insert(w.end(), p.weight.begin(), p.weight.end());
      w.insert(w.end(), p.bias.begin(), p.bias.end());
    }
    return w;
  };
  const std::vector<float> a = weights();
  std::vector<std::unique_ptr<char[]>> hold;
  for (std::size_t n = 1; n < 40; n += 3) hold.push_back(std::make_unique<char[]>(n));
  const std::vector<float> b = weights();
  std::vector<float> c;
  std::thread([&] { c = weights(); }).join();
  EXPECT_EQ(a, b);
  EXPECT_EQ(a, c);
}

TEST(Train, ConfigValidation) {
  TrainConfig c = small_config();
  c.batch_size = 1;
  EXPECT_THROW(c.validate(), PreconditionError);
  c = small_config();
  c.epochs = 0;
  EXPECT_THROW(c.validate(), PreconditionError);
}

TEST(MetricsCsv, HeaderAndFormat) {
  const std::string csv = metrics_csv(series({0.5, 0.25}));
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "epoch,loss,r_perp,r_par,r,j,acc_train,acc_biased,acc_unbiased,skipped_frac");
  EXPECT_NE(csv.find("\n1,0.100000,0.000000,0.000000,0.500000,"), std::string::npos);
}

TEST(KickIn, FlatSeriesHasNone) {
  EXPECT_FALSE(detect_kick_in(series({1, 1, 1, 1, 1, 1, 1, 1, 1, 1})).has_value());
}

TEST(KickIn, StepDropDetected) {
  const auto rec = series({1, 1.02, 1.05, 1.04, 1.05, 1.03, 0.6, 0.5, 0.45, 0.4});
  EXPECT_EQ(detect_kick_in(rec), std::optional<std::size_t>(7));
}

TEST(KickIn, IgnoredWhileLossIsHigh) {
  EXPECT_FALSE(detect_kick_in(series({1, 1, 1, 0.5, 0.4}, 2.0)).has_value());
  EXPECT_FALSE(detect_kick_in(series({1, 0.1})).has_value());
}

TEST(Ablate, FourDistinctArmsAndVanillaMatchesPlainRun) {
  const BiasedDataset ds = generate(gaussian(150, 0.9, 7));
  const BiasedDataset biased = build_eval_split(ds, SplitMode::biased_test, 100);
  const BiasedDataset unbiased = build_eval_split(ds, SplitMode::unbiased_test, 100);
  const std::vector<std::uint64_t> seeds{0, 1};
  const auto arms = ablate(small_config(2), ds, biased, unbiased, seeds);
  ASSERT_EQ(arms.size(), 4u);
  std::set<std::string> labels;
  for (const auto& a : arms) labels.insert(a.label);
  EXPECT_EQ(labels.size(), 4u);
  EXPECT_EQ(arms[0].alpha, 0.0);
  EXPECT_EQ(arms[0].beta, 0.0);
  EXPECT_EQ(arms[3].alpha, 0.5);
  TrainConfig vanilla = small_config(2);
  vanilla.end.alpha = vanilla.end.beta = 0.0;
  vanilla.seed = 1;
  const TrainResult plain = train(vanilla, ds, {&biased, &unbiased});
  EXPECT_EQ(metrics_csv(arms[0].records[1]), metrics_csv(plain.records));
  const std::string table = ablation_table(arms);
  for (const auto& l : labels) EXPECT_NE(table.find(l), std::string::npos);
}

TEST(Gradcheck, DefaultPasses) {
  const GradcheckReport r = gradcheck(GradcheckConfig{});
  EXPECT_TRUE(r.passed);
  EXPECT_LT(r.max_rel_err_regularizer, 1e-5);
  EXPECT_LT(r.max_rel_err_network, 1e-4);
  EXPECT_EQ(r.regularizer_instances, 20u);
}

TEST(Gradcheck, ZeroWeightsGiveZeroGradient) {
  GradcheckConfig c;
  c.alpha = c.beta = 0.0;
  c.network_instances = 1;
  EXPECT_EQ(gradcheck(c).max_regularizer_grad_norm, 0.0);
}
