#pragma once

#include <string>

#include "endreg/config.hpp"
#include "endreg/trainer.hpp"

namespace endreg {

// The five CLI commands. Each writes only inside cfg.out_dir and returns a
// JSON report.
std::string run_generate(const RunConfig& cfg);
std::string run_train(const RunConfig& cfg);
std::string run_eval(const RunConfig& cfg);
std::string run_ablate(const RunConfig& cfg);
// Sets `passed` from the report.
std::string run_gradcheck(const RunConfig& cfg, bool* passed);

std::string eval_report_json(const EvalReport& report);

}  // namespace endreg
