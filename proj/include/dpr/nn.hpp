#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "dpr/errors.hpp"
#include "dpr/rng.hpp"

namespace dpr {

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double* row(std::size_t r) { return data.data() + r * cols; }
  const double* row(std::size_t r) const { return data.data() + r * cols; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  void zero() { std::fill(data.begin(), data.end(), 0.0); }
};

// Dense rectifier MLP producing K logits. Serves as both the biased and the
// debiased model; the two roles differ only in how the parameters were fit.
struct ClassifierModel {
  struct Layer {
    Matrix weight;             // [out x in]
    std::vector<double> bias;  // [out]
  };
  std::vector<Layer> layers;  // rectifier between layers, none after the last

  int num_classes() const { return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows); }
  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols; }
  std::size_t num_params() const;

  // Checks dimension chaining and finiteness; throws ShapeError.
  void validate() const;
};

// Same shapes as the model it was built for.
struct GradientBuffer {
  std::vector<ClassifierModel::Layer> layers;

  static GradientBuffer zeros_like(const ClassifierModel& m);
  void zero();
  bool all_finite() const;
};

struct OptimizerState {
  double learning_rate = 0.02;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double lr_decay_factor = 1.0;  // multiplicative, applied every lr_decay_period steps
  long lr_decay_period = 0;      // 0 disables the schedule
  std::vector<ClassifierModel::Layer> velocity;  // lazily sized on first step

  double lr_at(long step_index) const;
};

// Per-layer activations captured by a forward pass, consumed by backward_batch.
struct ForwardWorkspace {
  std::vector<Matrix> pre;  // pre-activation per layer [batch x out]
  std::vector<Matrix> act;  // post-rectifier per layer (last entry == logits)
};

// Uniform fan-in init: W ~ U[-1/sqrt(in), 1/sqrt(in)], biases zero.
ClassifierModel make_mlp(std::size_t input_dim, const std::vector<int>& hidden, int num_classes,
                         Rng& rng);

// Batch forward pass; X is [batch x input_dim], logits [batch x K].
// Parallel over examples; bitwise equal to the serial reference for any
// thread count.
void forward_batch(const ClassifierModel& model, const Matrix& X, Matrix& logits,
                   ForwardWorkspace* ws = nullptr);
std::vector<double> forward_one(const ClassifierModel& model, std::span<const double> x);

// Softmax with temperature, max-subtracted. tau must be positive.
std::vector<double> softmax_with_temperature(std::span<const double> logits, double tau);

// Cross-entropy on one logit vector: loss = logsumexp(z) - z_y,
// grad = softmax(z) - onehot(y).
double ce_loss_and_grad(std::span<const double> logits, int y, std::span<double> grad);
double ce_loss(std::span<const double> logits, int y);

// Generalized cross-entropy: loss = (1 - p_y^q)/q, grad = p_y^q * (p - onehot(y)).
// p_y is clamped to [1e-12, 1] before the power.
double gce_loss_and_grad(std::span<const double> logits, int y, double q, std::span<double> grad);
double gce_loss(std::span<const double> logits, int y, double q);

// Batch loss heads: mean over the batch of per-example loss, with optional
// per-example weights (weight w_i scales both the loss term and its gradient;
// empty weights mean all ones). dlogits receives d(mean loss)/dlogits.
double batch_ce_loss_grad(const Matrix& logits, std::span<const int> labels,
                          std::span<const double> weights, Matrix& dlogits);
double batch_gce_loss_grad(const Matrix& logits, std::span<const int> labels, double q,
                           Matrix& dlogits);

// Backprop dlogits through the network; accumulates into grads (zeroed first).
// Parallel over weight rows with a fixed per-row accumulation order.
void backward_batch(const ClassifierModel& model, const ForwardWorkspace& ws, const Matrix& X,
                    const Matrix& dlogits, GradientBuffer& grads);

// velocity <- momentum*velocity + grad + weight_decay*param;
// param <- param - lr_at(step)*velocity.
void sgd_step(ClassifierModel& model, const GradientBuffer& grads, OptimizerState& state,
              long step_index);

// Checkpoint file: magic "DPRM", version u16, layer count u32, then per layer
// rows u32, cols u32, row-major f64 LE weights, then f64 LE biases.
void save_model(const ClassifierModel& model, const std::string& path);
ClassifierModel load_model(const std::string& path);

}  // namespace dpr
