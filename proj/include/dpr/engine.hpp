#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dpr/data.hpp"
#include "dpr/nn.hpp"

namespace dpr {

struct TrainSchedule {
  std::size_t t_biased = 3000;    // iterations for the biased model
  std::size_t t_debiased = 3000;  // iterations for the debiased model
  std::size_t batch_size = 128;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double weight_decay = 0.001;
  double lr_decay_factor = 1.0;  // multiplicative decay every lr_decay_period steps
  std::size_t lr_decay_period = 0;
  double q = 0.7;    // GCE parameter
  double tau = 1.0;  // disagreement temperature

  bool augment = true;             // augmentation during debiased training
  bool augment_biased = false;     // also augment biased/baseline batches
  bool init_from_biased = true;    // initialize the debiased model from the biased one
  bool use_gce = true;             // biased model loss (false = plain CE, for ablation)

  int hidden_width = 128;
  int hidden_layers = 1;

  std::size_t log_every = 100;        // training-log cadence
  std::size_t log_group_every = 0;    // 0 = no periodic group-loss snapshots
  AugmentParams augment_params;

  // T may be zero (returns the initialized model unchanged); batch size,
  // rates, q, tau are range-checked.
  void validate() const;
};

struct TrainLogEntry {
  std::size_t step = 0;
  std::string phase;
  double loss = 0.0;
  double lr = 0.0;
};

struct GroupLossSnap {
  std::size_t step = 0;
  double aligned_loss = 0.0;
  double conflicting_loss = 0.0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  std::vector<GroupLossSnap> group_snaps;
};

// CSV: step,phase,loss,lr
void write_train_log_csv(const TrainLog& log, const std::string& path);

struct TrainResult {
  ClassifierModel model;
  TrainLog log;
};

// 1 - softmax(f(x)/tau)[y].
double disagreement_prob(const ClassifierModel& model, std::span<const double> features, int y,
                         double tau);
std::vector<double> per_example_disagreements(const ClassifierModel& model,
                                              const BiasedDataset& data, double tau);
// Mean disagreement over the dataset.
double estimate_marginal_disagreement(const ClassifierModel& model, const BiasedDataset& data,
                                      double tau);

struct SamplingTable {
  std::vector<double> probs;                    // normalized over the training set
  std::vector<double> per_example_disagreement; // 1 - p_bias(y_i|x_i)
  std::vector<double> cdf;                      // inverse-CDF sampling; cdf.back() == 1
  double marginal = 0.0;                        // estimated p(y != y_bias)

  void validate() const;  // normalization and proportionality identities
};

// probs[i] = disagreement[i] / sum_j disagreement[j]; throws
// DegenerateTableError when every disagreement is below 1e-9.
SamplingTable compute_sampling_table(const ClassifierModel& model, const BiasedDataset& train,
                                     double tau);

// batch_size independent draws with replacement from the categorical
// distribution given by table.probs; returns example indices.
std::vector<std::size_t> sample_minibatch(const SamplingTable& table, const BiasedDataset& train,
                                          std::size_t batch_size, Rng& rng);

// Biased model f_phi: GCE (or CE when !use_gce) over uniform minibatches.
TrainResult train_biased(const BiasedDataset& train, const TrainSchedule& schedule,
                         std::uint64_t seed);

// Debiased model f_theta: CE over minibatches drawn from the sampling table,
// initialized from the biased model when schedule.init_from_biased.
TrainResult train_debiased(const BiasedDataset& train, const SamplingTable& table,
                           const ClassifierModel& biased_model, const TrainSchedule& schedule,
                           std::uint64_t seed);

// Ablation: uniform batches with per-example CE weights n * probs[i].
TrainResult train_reweighted(const BiasedDataset& train, const SamplingTable& table,
                             const ClassifierModel& biased_model, const TrainSchedule& schedule,
                             std::uint64_t seed);

// Plain CE baseline, fresh initialization, trained for t_biased + t_debiased
// steps (budget parity with the two-phase pipeline).
TrainResult train_erm(const BiasedDataset& train, const TrainSchedule& schedule,
                      std::uint64_t seed);

// sum_i weights[i] * ce_loss_i over the whole dataset.
double weighted_group_objective(const ClassifierModel& model, const BiasedDataset& data,
                                std::span<const double> weights);

// Oracle weights r(x,y,b) = conflict_indicator / n_conflicting, built from the
// true flags; with these, weighted_group_objective equals the
// conflicting-group average loss.
std::vector<double> oracle_conflict_weights(const BiasedDataset& data);

}  // namespace dpr
