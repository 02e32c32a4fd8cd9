#include "endreg/commands.hpp"

#include <cmath>
#include <filesystem>

#include "json.hpp"

#include "endreg/binary_io.hpp"
#include "endreg/errors.hpp"

namespace endreg {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }

json eval_json(const EvalReport& r) {
  json cells = json::array();
  json counts = json::array();
  for (std::size_t t = 0; t < r.num_targets; ++t) {
    json row = json::array(), crow = json::array();
    for (std::size_t b = 0; b < r.num_biases; ++b) {
      row.push_back(number_or_null(r.per_tb_accuracy[t * r.num_biases + b]));
      crow.push_back(r.cell_count[t * r.num_biases + b]);
    }
    cells.push_back(row);
    counts.push_back(crow);
  }
  json out = {{"samples", r.samples},
              {"num_targets", r.num_targets},
              {"num_biases", r.num_biases},
              {"accuracy", r.accuracy},
              {"unbiased_avg_accuracy", number_or_null(r.unbiased_avg_accuracy)},
              {"empty_cells", r.empty_cells},
              {"per_tb_accuracy", cells},
              {"cell_count", counts}};
  if (r.tpr) out["tpr"] = *r.tpr;
  if (r.tnr) out["tnr"] = *r.tnr;
  if (r.balanced_accuracy) out["balanced_accuracy"] = *r.balanced_accuracy;
  return out;
}

json config_json(const RunConfig& cfg) {
  json out = json::object();
  for (const auto& [k, v] : config_echo(cfg)) out[k] = v;
  return out;
}

fs::path prepare_out_dir(const RunConfig& cfg) {
  const fs::path dir(cfg.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir))
    throw IoError("cannot create output directory '" + cfg.out_dir + "'");
  return dir;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file(path.string(), std::span<const char>(text.data(), text.size()));
}

struct Inputs {
  BiasedDataset train;
  BiasedDataset biased;
  BiasedDataset unbiased;
};

Inputs load_inputs(const RunConfig& cfg) {
  Inputs in;
  in.train = cfg.train_data.empty() ? generate(cfg.data, Split::train)
                                    : read_dataset(cfg.train_data);
  in.biased = cfg.biased_data.empty()
                  ? build_eval_split(in.train, SplitMode::biased_test, cfg.eval_samples)
                  : read_dataset(cfg.biased_data);
  in.unbiased =
      cfg.unbiased_data.empty()
          ? build_eval_split(in.train, SplitMode::unbiased_test, cfg.eval_samples)
          : read_dataset(cfg.unbiased_data);
  return in;
}

TrainConfig train_config(const RunConfig& cfg, const BiasedDataset& train) {
  TrainConfig tc = cfg.train;
  tc.architecture = resolve_architecture(cfg, train.shape, train.spec.n_targets);
  return tc;
}

json dataset_json(const BiasedDataset& ds, const std::string& file) {
  return {{"file", file},
          {"split", to_string(ds.split)},
          {"samples", ds.size()},
          {"aligned_fraction", number_or_null(ds.aligned_fraction())}};
}

json kick_in_json(std::span<const TrainRecord> records, const KickInOptions& k) {
  const auto epoch = detect_kick_in(records, k);
  return epoch ? json(*epoch) : json(nullptr);
}

}  // namespace

std::string eval_report_json(const EvalReport& report) {
  return eval_json(report).dump(2);
}

std::string run_generate(const RunConfig& cfg) {
  const fs::path dir = prepare_out_dir(cfg);
  const BiasedDataset train = cfg.train_data.empty() ? generate(cfg.data, Split::train)
                                                     : read_dataset(cfg.train_data);
  const BiasedDataset biased =
      build_eval_split(train, SplitMode::biased_test, cfg.eval_samples);
  const BiasedDataset unbiased =
      build_eval_split(train, SplitMode::unbiased_test, cfg.eval_samples);
  const BiasedDataset conflicting = bias_conflicting(unbiased);
  json files = json::array();
  const std::pair<const BiasedDataset*, const char*> outputs[] = {
      {&train, "train.endd"},
      {&biased, "biased_test.endd"},
      {&unbiased, "unbiased_test.endd"},
      {&conflicting, "bias_conflicting.endd"}};
  for (const auto& [ds, name] : outputs) {
    write_dataset(*ds, (dir / name).string());
    files.push_back(dataset_json(*ds, name));
  }
  return json{{"command", "generate"}, {"out_dir", cfg.out_dir}, {"files", files}}
      .dump(2);
}

std::string run_train(const RunConfig& cfg) {
  Inputs in = load_inputs(cfg);
  const TrainConfig tc = train_config(cfg, in.train);
  const fs::path dir = prepare_out_dir(cfg);
  const TrainResult res = train(tc, in.train, {&in.biased, &in.unbiased});
  write_text(dir / "metrics.csv", metrics_csv(res.records));
  save_checkpoint(res.model, (dir / "model.endm").string());
  json summary = {
      {"command", "train"},
      {"config", config_json(cfg)},
      {"seed", tc.seed},
      {"epochs", res.records.size()},
      {"parameters", res.model.parameter_count()},
      {"kick_in_epoch", kick_in_json(res.records, cfg.kick_in)},
      {"final",
       {{"train", eval_json(evaluate(res.model, in.train))},
        {"biased_test", eval_json(evaluate(res.model, in.biased))},
        {"unbiased_test", eval_json(evaluate(res.model, in.unbiased))}}},
      {"files", {"metrics.csv", "model.endm", "summary.json"}}};
  if (!res.records.empty()) {
    const TrainRecord& last = res.records.back();
    summary["last_record"] = {{"loss", last.loss},       {"r_perp", last.r_perp},
                              {"r_par", last.r_par},     {"r", last.r},
                              {"j", last.j},             {"acc_train", last.acc_train},
                              {"acc_biased", number_or_null(last.acc_biased)},
                              {"acc_unbiased", number_or_null(last.acc_unbiased)},
                              {"skipped_frac", last.skipped_frac}};
  }
  const std::string text = summary.dump(2);
  write_text(dir / "summary.json", text + "\n");
  return text;
}

std::string run_eval(const RunConfig& cfg) {
  if (cfg.checkpoint.empty())
    throw ConfigError("checkpoint", "checkpoint: eval needs a model file");
  if (cfg.eval_data.empty())
    throw ConfigError("eval_data", "eval_data: eval needs a dataset file");
  const Network<float> net = load_checkpoint<float>(cfg.checkpoint);
  const BiasedDataset ds = read_dataset(cfg.eval_data);
  json out = eval_json(evaluate(net, ds));
  out["checkpoint"] = cfg.checkpoint;
  out["dataset"] = cfg.eval_data;
  out["split"] = to_string(ds.split);
  return out.dump(2);
}

std::string run_ablate(const RunConfig& cfg) {
  Inputs in = load_inputs(cfg);
  const TrainConfig tc = train_config(cfg, in.train);
  const fs::path dir = prepare_out_dir(cfg);
  const auto arms = ablate(tc, in.train, in.biased, in.unbiased, cfg.seeds);
  write_text(dir / "ablation.csv", ablation_table(arms));
  json jarms = json::array();
  for (const AblationArm& arm : arms) {
    json runs = json::array();
    for (std::size_t s = 0; s < arm.seeds.size(); ++s) {
      const std::string name =
          "metrics_" + arm.label + "_seed" + std::to_string(arm.seeds[s]) + ".csv";
      write_text(dir / name, metrics_csv(arm.records[s]));
      runs.push_back({{"seed", arm.seeds[s]},
                      {"metrics", name},
                      {"kick_in_epoch", kick_in_json(arm.records[s], cfg.kick_in)},
                      {"biased_test", eval_json(arm.biased[s])},
                      {"unbiased_test", eval_json(arm.unbiased[s])}});
    }
    jarms.push_back({{"setting", arm.label},
                     {"alpha", arm.alpha},
                     {"beta", arm.beta},
                     {"mean_acc_biased", arm.mean_biased},
                     {"mean_acc_unbiased", arm.mean_unbiased},
                     {"runs", runs}});
  }
  const json report = {{"command", "ablate"},
                       {"config", config_json(cfg)},
                       {"seeds", cfg.seeds},
                       {"arms", jarms}};
  const std::string text = report.dump(2);
  write_text(dir / "ablation.json", text + "\n");
  return text;
}

std::string run_gradcheck(const RunConfig& cfg, bool* passed) {
  GradcheckConfig gc = cfg.gradcheck;
  gc.alpha = cfg.train.end.alpha;
  gc.beta = cfg.train.end.beta;
  const GradcheckReport r = gradcheck(gc);
  if (passed) *passed = r.passed;
  return json{{"command", "gradcheck"},
              {"seed", gc.seed},
              {"alpha", gc.alpha},
              {"beta", gc.beta},
              {"step", gc.step},
              {"regularizer_instances", r.regularizer_instances},
              {"network_instances", r.network_instances},
              {"network_parameters", r.network_parameters},
              {"max_rel_err_regularizer", r.max_rel_err_regularizer},
              {"max_rel_err_network", r.max_rel_err_network},
              {"regularizer_tolerance", gc.regularizer_tolerance},
              {"network_tolerance", gc.network_tolerance},
              {"max_regularizer_grad_norm", r.max_regularizer_grad_norm},
              {"kink_skipped", r.kink_skipped},
              {"passed", r.passed}}
      .dump(2);
}

}  // namespace endreg
