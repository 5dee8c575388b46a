#include "dpr/serial_ref.hpp"

#include <algorithm>

namespace dpr::ref {

void forward_batch(const ClassifierModel& model, const Matrix& X, Matrix& logits,
                   ForwardWorkspace* ws) {
  if (model.layers.empty()) throw ShapeError("forward: empty model");
  if (X.cols != model.input_dim()) throw ShapeError("forward: feature dim mismatch");

  const std::size_t L = model.layers.size();
  const std::size_t B = X.rows;
  std::vector<Matrix> pre(L), act(L);
  for (std::size_t l = 0; l < L; ++l) {
    pre[l] = Matrix(B, model.layers[l].weight.rows);
    act[l] = Matrix(B, model.layers[l].weight.rows);
  }

  for (std::size_t e = 0; e < B; ++e) {
    const double* in = X.row(e);
    for (std::size_t l = 0; l < L; ++l) {
      const auto& layer = model.layers[l];
      double* p = pre[l].row(e);
      double* a = act[l].row(e);
      for (std::size_t o = 0; o < layer.weight.rows; ++o) {
        const double* w = layer.weight.row(o);
        double acc = layer.bias[o];
        for (std::size_t i = 0; i < layer.weight.cols; ++i) acc += w[i] * in[i];
        p[o] = acc;
        a[o] = (l + 1 < L) ? (acc > 0.0 ? acc : 0.0) : acc;
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

void backward_batch(const ClassifierModel& model, const ForwardWorkspace& ws, const Matrix& X,
                    const Matrix& dlogits, GradientBuffer& grads) {
  const std::size_t L = model.layers.size();
  if (ws.pre.size() != L || ws.act.size() != L) throw ShapeError("backward: workspace mismatch");
  const std::size_t B = X.rows;

  Matrix delta = dlogits;
  for (std::size_t li = L; li-- > 0;) {
    const auto& layer = model.layers[li];
    const std::size_t out_dim = layer.weight.rows;
    const std::size_t in_dim = layer.weight.cols;
    const Matrix& input = (li == 0) ? X : ws.act[li - 1];
    auto& gw = grads.layers[li].weight;
    auto& gb = grads.layers[li].bias;

    for (std::size_t o = 0; o < out_dim; ++o) {
      double* gwr = gw.row(o);
      double bacc = 0.0;
      for (std::size_t e = 0; e < B; ++e) {
        const double d = delta.at(e, o);
        bacc += d;
        const double* in = input.row(e);
        for (std::size_t i = 0; i < in_dim; ++i) gwr[i] += d * in[i];
      }
      gb[o] += bacc;
    }

    if (li == 0) break;

    Matrix next(B, in_dim);
    for (std::size_t e = 0; e < B; ++e) {
      const double* drow = delta.row(e);
      const double* prev_pre = ws.pre[li - 1].row(e);
      double* out = next.row(e);
      for (std::size_t i = 0; i < in_dim; ++i) {
        double acc = 0.0;
        for (std::size_t o = 0; o < out_dim; ++o) acc += drow[o] * layer.weight.at(o, i);
        out[i] = prev_pre[i] > 0.0 ? acc : 0.0;
      }
    }
    delta = std::move(next);
  }
}

std::vector<double> per_example_ce_losses(const ClassifierModel& model, const Matrix& X,
                                          std::span<const int> labels) {
  Matrix logits;
  ref::forward_batch(model, X, logits);
  std::vector<double> out(X.rows);
  for (std::size_t e = 0; e < X.rows; ++e)
    out[e] = ce_loss(std::span<const double>(logits.row(e), logits.cols), labels[e]);
  return out;
}

}  // namespace dpr::ref
