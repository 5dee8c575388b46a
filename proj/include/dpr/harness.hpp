#pragma once

#include <cstdint>
#include <string>

#include "dpr/config.hpp"
#include "dpr/engine.hpp"
#include "dpr/group_eval.hpp"

namespace dpr {

// Dataset construction for one experiment cell. Train data uses the cell's
// seed directly; the unbiased test set uses a disjoint derived seed.
BiasedDataset make_train_data(const ExperimentConfig& cfg, double rho, std::uint64_t seed);
BiasedDataset make_test_data(const ExperimentConfig& cfg, std::uint64_t seed);

// One (rho, seed) cell of the configured mode.
struct CellArtifacts {
  ClassifierModel biased;  // empty for mode=erm
  ClassifierModel final_model;
  GroupMetrics biased_test;   // test-set metrics of the biased model
  GroupMetrics final_test;    // test-set metrics of the final model
  double unbiased_acc = 0.0;  // final model
  double worst_group_acc = 0.0;
  double biased_worst_group_acc = 0.0;  // 0 for mode=erm
  TrainLog log;                         // concatenated phase logs
};
CellArtifacts run_single_cell(const ExperimentConfig& cfg, double rho, std::uint64_t seed);

// Subcommand bodies shared by the CLI and the tests. Each returns a process
// exit code: 0 = success, 1 = at least one failed cell or a runtime failure.
// Config validation errors (exit 2) are thrown as ParamError by the caller's
// config handling, not here.
int cmd_generate(const ExperimentConfig& cfg, const std::string& out_path);
int cmd_run(const ExperimentConfig& cfg);
int cmd_ablate(const ExperimentConfig& cfg);
int cmd_verify_bounds(const ExperimentConfig& cfg, const std::string& checkpoint_path);
int cmd_diagnose(const ExperimentConfig& cfg, const std::string& checkpoint_path);

}  // namespace dpr
