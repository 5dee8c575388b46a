#include "dpr/engine.hpp"

#include <algorithm>
#include <cmath>

#include "dpr/csv.hpp"
#include "dpr/group_eval.hpp"

namespace dpr {

void TrainSchedule::validate() const {
  if (batch_size < 1) throw ParamError("schedule: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ParamError("schedule: learning_rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ParamError("schedule: momentum must lie in [0,1)");
  if (weight_decay < 0.0) throw ParamError("schedule: weight_decay must be nonnegative");
  if (!(lr_decay_factor > 0.0 && lr_decay_factor <= 1.0))
    throw ParamError("schedule: lr_decay_factor must lie in (0,1]");
  if (!(q > 0.0 && q <= 1.0)) throw ParamError("schedule: q must lie in (0,1]");
  if (!(tau > 0.0)) throw ParamError("schedule: tau must be positive");
  if (hidden_width < 1 || hidden_layers < 1) throw ParamError("schedule: hidden dims must be >= 1");
  if (log_every < 1) throw ParamError("schedule: log_every must be >= 1");
}

void write_train_log_csv(const TrainLog& log, const std::string& path) {
  std::string out = "step,phase,loss,lr\n";
  for (const auto& e : log.entries) {
    out += std::to_string(e.step);
    out += ',';
    out += e.phase;
    out += ',';
    out += fmt_double(e.loss);
    out += ',';
    out += fmt_double(e.lr);
    out += '\n';
  }
  write_text_file(path, out);
}

double disagreement_prob(const ClassifierModel& model, std::span<const double> features, int y,
                         double tau) {
  if (y < 0 || y >= model.num_classes()) throw IndexError("disagreement: label out of range");
  const std::vector<double> logits = forward_one(model, features);
  const std::vector<double> p = softmax_with_temperature(logits, tau);
  return std::max(0.0, 1.0 - p[static_cast<std::size_t>(y)]);
}

namespace {

constexpr std::size_t kChunk = 4096;

// Phase-distinct rng streams; the debiased phase must not replay the biased
// phase's draw sequence.
constexpr std::uint64_t kBatchDebiased = stream::kBatch + 0x10;
constexpr std::uint64_t kAugmentDebiased = stream::kAugment + 0x10;

void gather_rows(const BiasedDataset& data, std::size_t begin, std::size_t count, Matrix& X) {
  const std::size_t dim = data.feature_dim();
  if (X.rows != count || X.cols != dim) X = Matrix(count, dim);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(count); ++i) {
    const auto& f = data.examples[begin + static_cast<std::size_t>(i)].features;
    std::copy(f.begin(), f.end(), X.row(static_cast<std::size_t>(i)));
  }
}

}  // namespace

std::vector<double> per_example_disagreements(const ClassifierModel& model,
                                              const BiasedDataset& data, double tau) {
  if (data.examples.empty()) throw ParamError("disagreements: empty dataset");
  if (!(tau > 0.0)) throw ParamError("disagreements: tau must be positive");
  const std::size_t n = data.size();
  std::vector<double> dis(n);
  Matrix X, logits;
  for (std::size_t begin = 0; begin < n; begin += kChunk) {
    const std::size_t count = std::min(kChunk, n - begin);
    gather_rows(data, begin, count, X);
    forward_batch(model, X, logits);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(count); ++i) {
      const std::size_t e = static_cast<std::size_t>(i);
      const std::vector<double> p =
          softmax_with_temperature({logits.row(e), logits.cols}, tau);
      const int y = data.examples[begin + e].y;
      dis[begin + e] = std::max(0.0, 1.0 - p[static_cast<std::size_t>(y)]);
    }
  }
  return dis;
}

double estimate_marginal_disagreement(const ClassifierModel& model, const BiasedDataset& data,
                                      double tau) {
  const std::vector<double> dis = per_example_disagreements(model, data, tau);
  double sum = 0.0;
  for (double d : dis) sum += d;
  return sum / static_cast<double>(dis.size());
}

void SamplingTable::validate() const {
  const std::size_t n = probs.size();
  if (n == 0) throw ParamError("sampling table: empty");
  if (per_example_disagreement.size() != n || cdf.size() != n)
    throw ParamError("sampling table: field length mismatch");
  double sum_probs = 0.0, sum_dis = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!(probs[i] >= 0.0)) throw ParamError("sampling table: negative probability");
    if (!(per_example_disagreement[i] >= 0.0 && per_example_disagreement[i] <= 1.0))
      throw ParamError("sampling table: disagreement outside [0,1]");
    sum_probs += probs[i];
    sum_dis += per_example_disagreement[i];
  }
  if (std::abs(sum_probs - 1.0) > 1e-9) throw ParamError("sampling table: probabilities must sum to 1");
  for (std::size_t i = 0; i < n; ++i)
    if (std::abs(probs[i] - per_example_disagreement[i] / sum_dis) > 1e-12)
      throw ParamError("sampling table: proportionality identity broken");
  for (std::size_t i = 1; i < n; ++i)
    if (cdf[i] < cdf[i - 1]) throw ParamError("sampling table: cdf not nondecreasing");
  if (cdf.back() != 1.0) throw ParamError("sampling table: cdf must end at 1");
}

SamplingTable compute_sampling_table(const ClassifierModel& model, const BiasedDataset& train,
                                     double tau) {
  SamplingTable t;
  t.per_example_disagreement = per_example_disagreements(model, train, tau);
  const std::size_t n = t.per_example_disagreement.size();

  double max_dis = 0.0, sum = 0.0;
  for (double d : t.per_example_disagreement) {
    max_dis = std::max(max_dis, d);
    sum += d;
  }
  if (max_dis < 1e-9)
    throw DegenerateTableError("every disagreement below 1e-9; biased model is perfectly confident");

  t.probs.resize(n);
  t.cdf.resize(n);
  double running = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    t.probs[i] = t.per_example_disagreement[i] / sum;
    running += t.probs[i];
    t.cdf[i] = running;
  }
  t.cdf.back() = 1.0;
  t.marginal = sum / static_cast<double>(n);
  t.validate();
  return t;
}

std::vector<std::size_t> sample_minibatch(const SamplingTable& table, const BiasedDataset& train,
                                          std::size_t batch_size, Rng& rng) {
  if (table.probs.size() != train.size())
    throw ParamError("sample_minibatch: table does not match dataset");
  std::vector<std::size_t> idx(batch_size);
  for (std::size_t i = 0; i < batch_size; ++i) {
    const double u = rng.next_double();
    const auto it = std::upper_bound(table.cdf.begin(), table.cdf.end(), u);
    idx[i] = std::min<std::size_t>(it - table.cdf.begin(), train.size() - 1);
  }
  return idx;
}

namespace {

struct PhaseSpec {
  const char* name;
  std::size_t steps;
  bool gce;                          // GCE loss (else CE)
  bool augment;
  const SamplingTable* table;        // non-null: draw batches by inverse CDF
  const std::vector<double>* weights;  // non-null: per-example CE weights
  std::uint64_t batch_stream, augment_stream;
};

TrainResult train_phase(const BiasedDataset& train, const TrainSchedule& s, std::uint64_t seed,
                        const PhaseSpec& ph, const ClassifierModel* init_model) {
  s.validate();
  if (train.examples.empty()) throw ParamError("train: empty dataset");
  const std::size_t n = train.size();
  const std::size_t dim = train.feature_dim();

  TrainResult res;
  if (init_model) {
    res.model = *init_model;
  } else {
    Rng init_rng = Rng::fork(seed, stream::kModelInit);
    const std::vector<int> hidden(s.hidden_layers, s.hidden_width);
    res.model = make_mlp(dim, hidden, train.num_classes, init_rng);
  }

  OptimizerState opt;
  opt.learning_rate = s.learning_rate;
  opt.momentum = s.momentum;
  opt.weight_decay = s.weight_decay;
  opt.lr_decay_factor = s.lr_decay_factor;
  opt.lr_decay_period = static_cast<long>(s.lr_decay_period);

  Rng batch_rng = Rng::fork(seed, ph.batch_stream);
  Rng aug_rng = Rng::fork(seed, ph.augment_stream);

  const std::size_t B = s.batch_size;
  Matrix X(B, dim), logits, dlogits;
  std::vector<int> labels(B);
  std::vector<double> weights;
  GradientBuffer grads = GradientBuffer::zeros_like(res.model);
  ForwardWorkspace ws;
  std::vector<std::size_t> idx;

  for (std::size_t t = 0; t < ph.steps; ++t) {
    if (ph.table) {
      idx = sample_minibatch(*ph.table, train, B, batch_rng);
    } else {
      idx.resize(B);
      for (std::size_t i = 0; i < B; ++i) idx[i] = batch_rng.next_below(n);
    }

    if (ph.weights) {
      weights.resize(B);
      for (std::size_t i = 0; i < B; ++i)
        weights[i] = static_cast<double>(n) * (*ph.weights)[idx[i]];
    }

    // Gather (and possibly augment) serially so the augment stream is
    // consumed in draw order.
    for (std::size_t i = 0; i < B; ++i) {
      const BiasedExample& ex = train.examples[idx[i]];
      labels[i] = ex.y;
      if (ph.augment) {
        const BiasedExample aug = augment(ex, train.shape, s.augment_params, aug_rng);
        std::copy(aug.features.begin(), aug.features.end(), X.row(i));
      } else {
        std::copy(ex.features.begin(), ex.features.end(), X.row(i));
      }
    }

    forward_batch(res.model, X, logits, &ws);
    const double loss =
        ph.gce ? batch_gce_loss_grad(logits, labels, s.q, dlogits)
               : batch_ce_loss_grad(logits, labels,
                                    ph.weights ? std::span<const double>(weights)
                                               : std::span<const double>(),
                                    dlogits);
    if (!std::isfinite(loss)) throw TrainingError("non-finite batch loss", static_cast<long>(t));
    grads.zero();  // backward accumulates
    backward_batch(res.model, ws, X, dlogits, grads);
    sgd_step(res.model, grads, opt, static_cast<long>(t));

    if (t % s.log_every == 0 || t + 1 == ph.steps)
      res.log.entries.push_back({t, ph.name, loss, opt.lr_at(static_cast<long>(t))});
    if (s.log_group_every && (t % s.log_group_every == 0 || t + 1 == ph.steps)) {
      const GroupMetrics gm = group_losses(res.model, train, LossKind::CE);
      res.log.group_snaps.push_back({t, gm.aligned.avg_loss, gm.conflicting.avg_loss});
    }
  }
  return res;
}

}  // namespace

TrainResult train_biased(const BiasedDataset& train, const TrainSchedule& schedule,
                         std::uint64_t seed) {
  PhaseSpec ph{"biased",  schedule.t_biased,   schedule.use_gce, schedule.augment_biased,
               nullptr,   nullptr,             stream::kBatch,   stream::kAugment};
  return train_phase(train, schedule, seed, ph, nullptr);
}

TrainResult train_debiased(const BiasedDataset& train, const SamplingTable& table,
                           const ClassifierModel& biased_model, const TrainSchedule& schedule,
                           std::uint64_t seed) {
  if (table.probs.size() != train.size())
    throw ParamError("train_debiased: table does not match dataset");
  PhaseSpec ph{"debiased", schedule.t_debiased, false, schedule.augment,
               &table,     nullptr,             kBatchDebiased, kAugmentDebiased};
  return train_phase(train, schedule, seed, ph,
                     schedule.init_from_biased ? &biased_model : nullptr);
}

TrainResult train_reweighted(const BiasedDataset& train, const SamplingTable& table,
                             const ClassifierModel& biased_model, const TrainSchedule& schedule,
                             std::uint64_t seed) {
  if (table.probs.size() != train.size())
    throw ParamError("train_reweighted: table does not match dataset");
  PhaseSpec ph{"reweighted", schedule.t_debiased, false, schedule.augment,
               nullptr,      &table.probs,        kBatchDebiased, kAugmentDebiased};
  return train_phase(train, schedule, seed, ph,
                     schedule.init_from_biased ? &biased_model : nullptr);
}

TrainResult train_erm(const BiasedDataset& train, const TrainSchedule& schedule,
                      std::uint64_t seed) {
  PhaseSpec ph{"erm",   schedule.t_biased + schedule.t_debiased,
               false,   schedule.augment_biased,
               nullptr, nullptr,
               stream::kBatch, stream::kAugment};
  return train_phase(train, schedule, seed, ph, nullptr);
}

double weighted_group_objective(const ClassifierModel& model, const BiasedDataset& data,
                                std::span<const double> weights) {
  if (weights.size() != data.size())
    throw ShapeError("weighted objective: one weight per example required");
  const EvalArrays ev = evaluate_examples(model, data, LossKind::CE);
  double obj = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) obj += weights[i] * ev.loss[i];
  return obj;
}

std::vector<double> oracle_conflict_weights(const BiasedDataset& data) {
  if (data.examples.empty()) throw ParamError("oracle weights: empty dataset");
  std::size_t n_conflicting = 0;
  for (const auto& ex : data.examples) n_conflicting += is_conflicting(ex);
  if (n_conflicting == 0) throw ParamError("oracle weights: no conflicting examples");
  std::vector<double> w(data.size(), 0.0);
  for (std::size_t i = 0; i < data.size(); ++i)
    if (is_conflicting(data.examples[i])) w[i] = 1.0 / static_cast<double>(n_conflicting);
  return w;
}

}  // namespace dpr
