// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration (JSON file + flag overrides, flags win) and the
// generate | train | eval | ablate commands. run_cli returns the process
// exit code: 0 ok, 2 config error, 3 data error, 4 numeric divergence.

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dsr/data.h"
#include "dsr/trainer.h"

namespace dsr {

struct ExperimentConfig {
  TrainConfig train;
  std::optional<GenSpec> generator;
  std::string source_csv;
  std::string target_csv;
  std::string oracle_csv;    // optional ground-truth latents for evaluation
  std::string checkpoint;    // for eval / ablate
  std::string out_dir;
  bool force = false;
  std::vector<std::string> evaluations = {"target_accuracy", "probes", "embedding"};

  // Exactly one data source: generator spec XOR csv paths.
  void validate_data_source() const;
};

ExperimentConfig config_from_json_file(const std::string& path);
std::string config_to_json(const ExperimentConfig& cfg);

int run_cli(int argc, const char* const* argv);

// Individual commands, callable from tests. They throw the library errors;
// run_cli maps them to exit codes.
void cmd_generate(const ExperimentConfig& cfg);
void cmd_train(const ExperimentConfig& cfg);
void cmd_eval(const ExperimentConfig& cfg);
void cmd_ablate(const ExperimentConfig& cfg);

}  // namespace dsr
