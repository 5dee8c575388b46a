#include "dpr/nn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "dpr/binary_io.hpp"

namespace dpr {

namespace {

bool finite_all(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

std::size_t ClassifierModel::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.weight.data.size() + l.bias.size();
  return n;
}

void ClassifierModel::validate() const {
  if (layers.empty()) throw ShapeError("model has no layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.weight.rows == 0 || l.weight.cols == 0) throw ShapeError("empty layer " + std::to_string(i));
    if (l.bias.size() != l.weight.rows) throw ShapeError("bias size mismatch in layer " + std::to_string(i));
    if (i > 0 && layers[i - 1].weight.rows != l.weight.cols)
      throw ShapeError("layer " + std::to_string(i - 1) + " output does not feed layer " +
                       std::to_string(i));
    if (!finite_all(l.weight.data) || !finite_all(l.bias))
      throw ShapeError("non-finite parameter in layer " + std::to_string(i));
  }
}

GradientBuffer GradientBuffer::zeros_like(const ClassifierModel& m) {
  GradientBuffer g;
  g.layers.reserve(m.layers.size());
  for (const auto& l : m.layers) {
    ClassifierModel::Layer gl;
    gl.weight = Matrix(l.weight.rows, l.weight.cols);
    gl.bias.assign(l.bias.size(), 0.0);
    g.layers.push_back(std::move(gl));
  }
  return g;
}

void GradientBuffer::zero() {
  for (auto& l : layers) {
    l.weight.zero();
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
}

bool GradientBuffer::all_finite() const {
  for (const auto& l : layers)
    if (!finite_all(l.weight.data) || !finite_all(l.bias)) return false;
  return true;
}

double OptimizerState::lr_at(long step_index) const {
  if (lr_decay_period <= 0 || lr_decay_factor == 1.0) return learning_rate;
  const long k = step_index / lr_decay_period;
  return learning_rate * std::pow(lr_decay_factor, static_cast<double>(k));
}

ClassifierModel make_mlp(std::size_t input_dim, const std::vector<int>& hidden, int num_classes,
                         Rng& rng) {
  if (input_dim == 0 || num_classes < 2) throw ParamError("make_mlp: need input_dim > 0 and K >= 2");
  std::vector<std::size_t> dims;
  dims.push_back(input_dim);
  for (int h : hidden) {
    if (h <= 0) throw ParamError("make_mlp: hidden width must be positive");
    dims.push_back(static_cast<std::size_t>(h));
  }
  dims.push_back(static_cast<std::size_t>(num_classes));

  ClassifierModel m;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    ClassifierModel::Layer l;
    l.weight = Matrix(dims[i + 1], dims[i]);
    l.bias.assign(dims[i + 1], 0.0);
    const double s = 1.0 / std::sqrt(static_cast<double>(dims[i]));
    for (double& w : l.weight.data) w = rng.uniform(-s, s);
    m.layers.push_back(std::move(l));
  }
  return m;
}

void forward_batch(const ClassifierModel& model, const Matrix& X, Matrix& logits,
                   ForwardWorkspace* ws) {
  if (model.layers.empty()) throw ShapeError("forward: empty model");
  if (X.cols != model.input_dim())
    throw ShapeError("forward: feature dim " + std::to_string(X.cols) + " != model input dim " +
                     std::to_string(model.input_dim()));

  const std::size_t L = model.layers.size();
  const std::size_t B = X.rows;

  std::vector<Matrix> pre(L), act(L);
  for (std::size_t l = 0; l < L; ++l) {
    pre[l] = Matrix(B, model.layers[l].weight.rows);
    act[l] = Matrix(B, model.layers[l].weight.rows);
  }

  // Each example is computed independently and writes disjoint rows, so the
  // result is identical for any schedule or thread count.
#pragma omp parallel for schedule(static)
  for (long long e = 0; e < static_cast<long long>(B); ++e) {
    const double* in = X.row(static_cast<std::size_t>(e));
    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = model.layers[l];
      const std::size_t out_dim = layer.weight.rows;
      const std::size_t in_dim = layer.weight.cols;
      double* p = pre[l].row(static_cast<std::size_t>(e));
      double* a = act[l].row(static_cast<std::size_t>(e));
      for (std::size_t o = 0; o < out_dim; ++o) {
        const double* w = layer.weight.row(o);
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < in_dim; ++i) acc += w[i] * in[i];
        p[o] = acc;
        a[o] = (l + 1 < L) ? (acc > 0.0 ? acc : 0.0) : acc;  // rectifier between layers
      }
      in = a;
    }
  }

  logits = act[L - 1];
  if (ws) {
    ws->pre = std::move(pre);
    ws->act = std::move(act);
  }
}

std::vector<double> forward_one(const ClassifierModel& model, std::span<const double> x) {
  Matrix X(1, x.size());
  std::copy(x.begin(), x.end(), X.data.begin());
  Matrix logits;
  forward_batch(model, X, logits);
  return logits.data;
}

std::vector<double> softmax_with_temperature(std::span<const double> logits, double tau) {
  if (!(tau > 0.0)) throw ParamError("softmax: tau must be positive");
  if (logits.empty()) throw ShapeError("softmax: empty logits");
  const std::size_t K = logits.size();
  std::vector<double> p(K);
  double zmax = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) zmax = std::max(zmax, logits[k] / tau);
  double z = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    p[k] = std::exp(logits[k] / tau - zmax);
    z += p[k];
  }
  for (std::size_t k = 0; k < K; ++k) p[k] /= z;
  return p;
}

namespace {

// logsumexp with max subtraction; shared by both loss heads.
double log_sum_exp(std::span<const double> z) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : z) m = std::max(m, v);
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s);
}

void check_label(std::span<const double> logits, int y) {
  if (y < 0 || static_cast<std::size_t>(y) >= logits.size())
    throw IndexError("label " + std::to_string(y) + " out of range for K=" +
                     std::to_string(logits.size()));
}

}  // namespace

double ce_loss(std::span<const double> logits, int y) {
  check_label(logits, y);
  return log_sum_exp(logits) - logits[y];
}

double ce_loss_and_grad(std::span<const double> logits, int y, std::span<double> grad) {
  check_label(logits, y);
  if (grad.size() != logits.size()) throw ShapeError("ce grad buffer size mismatch");
  const auto p = softmax_with_temperature(logits, 1.0);
  for (std::size_t k = 0; k < p.size(); ++k) grad[k] = p[k];
  grad[y] -= 1.0;
  return log_sum_exp(logits) - logits[y];
}

namespace {

double clamp_prob(double p) { return std::min(1.0, std::max(1e-12, p)); }

}  // namespace

double gce_loss(std::span<const double> logits, int y, double q) {
  check_label(logits, y);
  if (!(q > 0.0) || q > 1.0) throw ParamError("gce: q must lie in (0,1]");
  const auto p = softmax_with_temperature(logits, 1.0);
  return (1.0 - std::pow(clamp_prob(p[y]), q)) / q;
}

double gce_loss_and_grad(std::span<const double> logits, int y, double q, std::span<double> grad) {
  check_label(logits, y);
  if (!(q > 0.0) || q > 1.0) throw ParamError("gce: q must lie in (0,1]");
  if (grad.size() != logits.size()) throw ShapeError("gce grad buffer size mismatch");
  const auto p = softmax_with_temperature(logits, 1.0);
  const double scale = std::pow(clamp_prob(p[y]), q);  // p_y^q, the bias-amplifying factor
  for (std::size_t k = 0; k < p.size(); ++k) grad[k] = scale * p[k];
  grad[y] -= scale;
  return (1.0 - scale) / q;
}

double batch_ce_loss_grad(const Matrix& logits, std::span<const int> labels,
                          std::span<const double> weights, Matrix& dlogits) {
  const std::size_t B = logits.rows;
  if (labels.size() != B) throw ShapeError("batch_ce: label count mismatch");
  if (!weights.empty() && weights.size() != B) throw ShapeError("batch_ce: weight count mismatch");
  dlogits = Matrix(logits.rows, logits.cols);
  std::vector<double> per_example(B);

#pragma omp parallel for schedule(static)
  for (long long e = 0; e < static_cast<long long>(B); ++e) {
    const std::size_t i = static_cast<std::size_t>(e);
    std::span<const double> z(logits.row(i), logits.cols);
    std::span<double> g(dlogits.row(i), dlogits.cols);
    const double w = weights.empty() ? 1.0 : weights[i];
    const double loss = ce_loss_and_grad(z, labels[i], g);
    const double scale = w / static_cast<double>(B);
    for (std::size_t k = 0; k < dlogits.cols; ++k) g[k] *= scale;
    per_example[i] = w * loss;
  }

  double total = 0.0;
  for (double v : per_example) total += v;  // fixed-order reduction
  return total / static_cast<double>(B);
}

double batch_gce_loss_grad(const Matrix& logits, std::span<const int> labels, double q,
                           Matrix& dlogits) {
  const std::size_t B = logits.rows;
  if (labels.size() != B) throw ShapeError("batch_gce: label count mismatch");
  dlogits = Matrix(logits.rows, logits.cols);
  std::vector<double> per_example(B);

#pragma omp parallel for schedule(static)
  for (long long e = 0; e < static_cast<long long>(B); ++e) {
    const std::size_t i = static_cast<std::size_t>(e);
    std::span<const double> z(logits.row(i), logits.cols);
    std::span<double> g(dlogits.row(i), dlogits.cols);
    per_example[i] = gce_loss_and_grad(z, labels[i], q, g);
    const double scale = 1.0 / static_cast<double>(B);
    for (std::size_t k = 0; k < dlogits.cols; ++k) g[k] *= scale;
  }

  double total = 0.0;
  for (double v : per_example) total += v;
  return total / static_cast<double>(B);
}

void backward_batch(const ClassifierModel& model, const ForwardWorkspace& ws, const Matrix& X,
                    const Matrix& dlogits, GradientBuffer& grads) {
  const std::size_t L = model.layers.size();
  if (ws.pre.size() != L || ws.act.size() != L) throw ShapeError("backward: workspace mismatch");
  if (grads.layers.size() != L) throw ShapeError("backward: gradient buffer mismatch");
  const std::size_t B = X.rows;

  Matrix delta = dlogits;  // [B x out_dim(l)]
  for (std::size_t li = L; li-- > 0;) {
    const auto& layer = model.layers[li];
    const std::size_t out_dim = layer.weight.rows;
    const std::size_t in_dim = layer.weight.cols;
    const Matrix& input = (li == 0) ? X : ws.act[li - 1];

    auto& gw = grads.layers[li].weight;
    auto& gb = grads.layers[li].bias;

    // Weight rows are independent accumulators; the inner loop over examples
    // runs in a fixed order, so the sums match the serial reference bitwise.
#pragma omp parallel for schedule(static)
    for (long long o = 0; o < static_cast<long long>(out_dim); ++o) {
      const std::size_t oo = static_cast<std::size_t>(o);
      double* gwr = gw.row(oo);
      double bacc = 0.0;
      for (std::size_t e = 0; e < B; ++e) {
        const double d = delta.at(e, oo);
        bacc += d;
        const double* in = input.row(e);
        for (std::size_t i = 0; i < in_dim; ++i) gwr[i] += d * in[i];
      }
      gb[oo] += bacc;
    }

    if (li == 0) break;

    // Propagate delta to the previous layer through W and the rectifier mask.
    Matrix next(B, in_dim);
#pragma omp parallel for schedule(static)
    for (long long e = 0; e < static_cast<long long>(B); ++e) {
      const std::size_t ee = static_cast<std::size_t>(e);
      const double* drow = delta.row(ee);
      const double* prev_pre = ws.pre[li - 1].row(ee);
      double* out = next.row(ee);
      for (std::size_t i = 0; i < in_dim; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < out_dim; ++o) acc += drow[o] * layer.weight.at(o, i);
        out[i] = prev_pre[i] > 0.0 ? acc : 0.0;
      }
    }
    delta = std::move(next);
  }
}

void sgd_step(ClassifierModel& model, const GradientBuffer& grads, OptimizerState& state,
              long step_index) {
  if (grads.layers.size() != model.layers.size()) throw ShapeError("sgd: gradient/model mismatch");
  if (!grads.all_finite()) throw TrainingError("non-finite gradient", step_index);

  if (state.velocity.empty()) {
    state.velocity = GradientBuffer::zeros_like(model).layers;
  }
  if (state.velocity.size() != model.layers.size())
    throw ShapeError("sgd: velocity/model mismatch");

  const double lr = state.lr_at(step_index);
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    auto& p = model.layers[l];
    const auto& g = grads.layers[l];
    auto& v = state.velocity[l];
    if (g.weight.rows != p.weight.rows || g.weight.cols != p.weight.cols)
      throw ShapeError("sgd: gradient shape mismatch in layer " + std::to_string(l));
    for (std::size_t i = 0; i < p.weight.data.size(); ++i) {
      v.weight.data[i] = state.momentum * v.weight.data[i] + g.weight.data[i] +
                         state.weight_decay * p.weight.data[i];
      p.weight.data[i] -= lr * v.weight.data[i];
    }
    for (std::size_t i = 0; i < p.bias.size(); ++i) {
      v.bias[i] = state.momentum * v.bias[i] + g.bias[i] + state.weight_decay * p.bias[i];
      p.bias[i] -= lr * v.bias[i];
    }
  }

  for (const auto& l : model.layers) {
    if (!finite_all(l.weight.data) || !finite_all(l.bias))
      throw TrainingError("parameters became non-finite", step_index);
  }
}

void save_model(const ClassifierModel& model, const std::string& path) {
  model.validate();
  ByteWriter w;
  w.bytes("DPRM", 4);
  w.u16(1);  // format version
  w.u32(static_cast<std::uint32_t>(model.layers.size()));
  for (const auto& l : model.layers) {
    w.u32(static_cast<std::uint32_t>(l.weight.rows));
    w.u32(static_cast<std::uint32_t>(l.weight.cols));
    for (double v : l.weight.data) w.f64(v);
    for (double v : l.bias) w.f64(v);
  }
  write_file_bytes(path, w.data());
}

ClassifierModel load_model(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "DPRM", 4) != 0) throw FormatError("bad checkpoint magic", 0);
  const std::uint16_t version = r.u16();
  if (version != 1) throw FormatError("unsupported checkpoint version", 4);
  const std::uint32_t layer_count = r.u32();
  ClassifierModel m;
  for (std::uint32_t l = 0; l < layer_count; ++l) {
    ClassifierModel::Layer layer;
    const std::uint32_t rows = r.u32();
    const std::uint32_t cols = r.u32();
    layer.weight = Matrix(rows, cols);
    for (double& v : layer.weight.data) v = r.f64();
    layer.bias.resize(rows);
    for (double& v : layer.bias) v = r.f64();
    m.layers.push_back(std::move(layer));
  }
  m.validate();
  return m;
}

}  // namespace dpr
