#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "endreg/data.hpp"
#include "endreg/trainer.hpp"

namespace endreg {

// Everything a CLI command needs. Dataset paths are optional: when empty the
// train/test splits are generated in memory from `data`.
struct RunConfig {
  DatasetSpec data;
  TrainConfig train;
  std::string out_dir = "out";
  std::string train_data;
  std::string biased_data;
  std::string unbiased_data;
  std::string eval_data;
  std::string checkpoint;
  std::string palette;
  std::string architecture = "auto";  // auto, conv, mlp
  std::size_t eval_samples = 2000;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  KickInOptions kick_in;
  GradcheckConfig gradcheck;
};

struct ConfigKey {
  const char* name;
  const char* type;
  const char* help;
};

// The documented schema, in file order.
const std::vector<ConfigKey>& config_schema();

// Raw key=value pairs; only the line syntax is checked.
std::map<std::string, std::string> config_values_from_text(const std::string& text);
std::map<std::string, std::string> config_values_from_file(const std::string& path);

// key=value lines, '#' starts a comment, blank lines ignored. Later entries
// override earlier ones; `overrides` wins over the file.
RunConfig parse_config_text(const std::string& text,
                            const std::map<std::string, std::string>& overrides = {});
RunConfig parse_config_file(const std::string& path,
                            const std::map<std::string, std::string>& overrides = {});
RunConfig parse_config_map(const std::map<std::string, std::string>& values);

// Preset named by the `architecture` key; empty for "auto", which lets the
// trainer pick from the data.
Architecture resolve_architecture(const RunConfig& cfg, const Shape& shape,
                                  std::size_t classes);

// Flat key=value echo of the effective configuration.
std::map<std::string, std::string> config_echo(const RunConfig& cfg);

}  // namespace endreg
