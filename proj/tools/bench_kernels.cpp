#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <vector>

#include "dpr/nn.hpp"
#include "dpr/rng.hpp"
#include "dpr/serial_ref.hpp"

namespace {

template <typename F>
double best_seconds(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const auto t0 = std::chrono::steady_clock::now();
    fn();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (s < best) best = s;
  }
  return best;
}

bool bitwise_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

int main(int argc, char** argv) {
  const int batch = argc > 1 ? std::atoi(argv[1]) : 512;
  const int dim = argc > 2 ? std::atoi(argv[2]) : 432;
  const int hidden = argc > 3 ? std::atoi(argv[3]) : 128;
  const int reps = 5;

  dpr::Rng rng(0xBE9C);
  dpr::ClassifierModel model = dpr::make_mlp(dim, {hidden}, 10, rng);
  dpr::Matrix X{static_cast<std::size_t>(batch), static_cast<std::size_t>(dim)};
  for (double& v : X.data) v = rng.uniform(0.0, 1.0);
  std::vector<int> labels(batch);
  for (int& y : labels) y = static_cast<int>(rng.next_below(10));

  dpr::Matrix logits_p, logits_s;
  dpr::ForwardWorkspace ws_p, ws_s;
  const double tf_p = best_seconds(reps, [&] { dpr::forward_batch(model, X, logits_p, &ws_p); });
  const double tf_s =
      best_seconds(reps, [&] { dpr::ref::forward_batch(model, X, logits_s, &ws_s); });
  const bool f_eq = bitwise_equal(logits_p.data, logits_s.data);

  dpr::Matrix dlogits{logits_p.rows, logits_p.cols};
  std::vector<double> w;  // empty = uniform weights
  dpr::batch_ce_loss_grad(logits_p, labels, w, dlogits);
  dpr::GradientBuffer g_p = dpr::GradientBuffer::zeros_like(model);
  dpr::GradientBuffer g_s = dpr::GradientBuffer::zeros_like(model);
  const double tb_p =
      best_seconds(reps, [&] { dpr::backward_batch(model, ws_p, X, dlogits, g_p); });
  const double tb_s =
      best_seconds(reps, [&] { dpr::ref::backward_batch(model, ws_s, X, dlogits, g_s); });
  bool b_eq = true;
  for (std::size_t l = 0; l < g_p.layers.size(); ++l)
    b_eq = b_eq && bitwise_equal(g_p.layers[l].weight.data, g_s.layers[l].weight.data) &&
           bitwise_equal(g_p.layers[l].bias, g_s.layers[l].bias);

  std::printf("batch=%d dim=%d hidden=%d\n", batch, dim, hidden);
  std::printf("forward  parallel %8.3f ms  serial %8.3f ms  speedup %5.2fx  bitwise %s\n",
              tf_p * 1e3, tf_s * 1e3, tf_s / tf_p, f_eq ? "equal" : "DIFFERS");
  std::printf("backward parallel %8.3f ms  serial %8.3f ms  speedup %5.2fx  bitwise %s\n",
              tb_p * 1e3, tb_s * 1e3, tb_s / tb_p, b_eq ? "equal" : "DIFFERS");
  return f_eq && b_eq ? 0 : 1;
}
