#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dpr/data.hpp"
#include "dpr/engine.hpp"

namespace dpr {

inline constexpr const char* kCodeVersion = "dpr-1.0.0";

struct BoundsConfig {
  std::vector<double> c_grid;             // empty = {4 ln K} at run time
  std::vector<double> delta_grid = {0.05};
  std::size_t population_per_group = 50000;
  std::size_t bound_seeds = 100;    // independent train-set redraws
  std::size_t train_n = 2000;       // redraw size per bound evaluation
  std::size_t hoeffding_trials = 10000;
  std::size_t hoeffding_nb = 50;
};

struct ExperimentConfig {
  GenConfig gen;
  std::size_t n_train = 20000;
  std::size_t n_test = 10000;
  std::vector<double> rhos = {0.01};
  std::string idx_images, idx_labels;            // colorized-idx train inputs
  std::string idx_test_images, idx_test_labels;  // colorized-idx test inputs

  TrainSchedule schedule;
  std::string mode = "dpr";  // dpr | erm | reweighted

  std::vector<double> q_grid, tau_grid;  // ablation sweeps

  std::vector<std::uint64_t> seeds = {0, 1, 2};
  std::string out_dir = "out";
  int histogram_bins = 20;

  BoundsConfig bounds;

  void validate() const;  // throws ParamError; CLI maps that to exit code 2
};

// key=value lines under [section] headers; '#' and ';' start comments.
// Unknown sections or keys are errors.
ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// Full serialization with fixed key order; reparsing it reproduces the
// config. This is the byte stream the run id hashes.
std::string canonical_config_text(const ExperimentConfig& cfg);

// FNV-1a over (canonical text, code version), hex encoded.
std::string compute_run_id(const ExperimentConfig& cfg);

}  // namespace dpr
