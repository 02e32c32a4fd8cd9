// Command-line front end. Links only the C API.
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "endreg/endreg.h"

namespace {

struct SchemaKey {
  std::string name, type, help;
};

std::vector<SchemaKey> schema() {
  char* text = nullptr;
  std::vector<SchemaKey> out;
  if (endreg_config_schema(&text) != ENDREG_OK) return out;
  std::istringstream in(text);
  endreg_string_free(text);
  std::string line;
  while (std::getline(in, line)) {
    SchemaKey k;
    std::istringstream fields(line);
    std::getline(fields, k.name, '\t');
    std::getline(fields, k.type, '\t');
    std::getline(fields, k.help);
    out.push_back(k);
  }
  return out;
}

int report_failure(int status) {
  std::fprintf(stderr, "endreg: %s error: %s\n", endreg_status_name(status),
               endreg_last_error());
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bias-aware feature regularization experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> assignments;
  std::map<std::string, std::string> flag_values;
  const std::vector<SchemaKey> keys = schema();

  const char* commands[][2] = {
      {"generate", "write train and evaluation splits as ENDD files"},
      {"train", "train one model; write metrics.csv, summary.json, model.endm"},
      {"eval", "score a checkpoint on a dataset and print the report"},
      {"ablate", "train the four regularizer settings over several seeds"},
      {"gradcheck", "compare analytic gradients with finite differences"}};
  for (const auto& [name, help] : commands) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "key=value config file");
    sub->add_option("--set", assignments, "key=value override (repeatable)");
    for (const SchemaKey& k : keys)
      sub->add_option("--" + k.name, flag_values[k.name], k.help + " [" + k.type + "]");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::fprintf(stderr, "endreg: usage error: %s\n", e.what());
    return ENDREG_ERR_USAGE;
  }
  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();

  // File first, then --set, then named flags.
  std::map<std::string, std::string> overrides;
  for (const std::string& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) {
      std::fprintf(stderr, "endreg: usage error: --set expects key=value, got '%s'\n",
                   a.c_str());
      return ENDREG_ERR_USAGE;
    }
    overrides[a.substr(0, eq)] = a.substr(eq + 1);
  }
  for (const SchemaKey& k : keys)
    if (sub->count("--" + k.name) > 0) overrides[k.name] = flag_values[k.name];

  endreg_config* cfg = nullptr;
  int status = config_path.empty() ? endreg_config_new(&cfg)
                                   : endreg_config_load(config_path.c_str(), &cfg);
  if (status != ENDREG_OK) return report_failure(status);
  std::vector<const char*> names, values;
  for (const auto& [k, v] : overrides) {
    names.push_back(k.c_str());
    values.push_back(v.c_str());
  }
  status = endreg_config_set_many(cfg, names.data(), values.data(), names.size());
  if (status != ENDREG_OK) {
    endreg_config_free(cfg);
    return report_failure(status);
  }

  char* report = nullptr;
  if (command == "generate") status = endreg_run_generate(cfg, &report);
  else if (command == "train") status = endreg_run_train(cfg, &report);
  else if (command == "eval") status = endreg_run_eval(cfg, &report);
  else if (command == "ablate") status = endreg_run_ablate(cfg, &report);
  else status = endreg_run_gradcheck(cfg, &report);
  endreg_config_free(cfg);

  if (report != nullptr) {
    std::printf("%s\n", report);
    endreg_string_free(report);
  }
  if (status != ENDREG_OK) return report_failure(status);
  return 0;
}
