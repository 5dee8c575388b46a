#pragma once

// Shared fixtures for the unit suites: temp dirs, hand-built models whose
// per-example losses are easy to stage, and tiny literal datasets.

#include <cmath>
#include <cstring>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "dpr/data.hpp"
#include "dpr/nn.hpp"

namespace t {

inline std::string tmp_dir(const std::string& leaf) {
  const auto p = std::filesystem::temp_directory_path() / ("dpr_tests_" + leaf);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p.string();
}

inline bool same_bits(double a, double b) { return std::memcmp(&a, &b, sizeof a) == 0; }

inline bool same_params(const dpr::ClassifierModel& a, const dpr::ClassifierModel& b) {
  if (a.layers.size() != b.layers.size()) return false;
  for (std::size_t l = 0; l < a.layers.size(); ++l) {
    const auto& x = a.layers[l];
    const auto& y = b.layers[l];
    if (x.weight.rows != y.weight.rows || x.weight.cols != y.weight.cols) return false;
    for (std::size_t i = 0; i < x.weight.data.size(); ++i)
      if (!same_bits(x.weight.data[i], y.weight.data[i])) return false;
    if (x.bias.size() != y.bias.size()) return false;
    for (std::size_t i = 0; i < x.bias.size(); ++i)
      if (!same_bits(x.bias[i], y.bias[i])) return false;
  }
  return true;
}

// Single layer, zero weights, bias = logits: every input maps to the same
// logits, so dataset-level quantities reduce to hand arithmetic.
inline dpr::ClassifierModel constant_logit_model(const std::vector<double>& logits,
                                                 std::size_t input_dim) {
  dpr::ClassifierModel m;
  dpr::ClassifierModel::Layer l;
  l.weight = dpr::Matrix(logits.size(), input_dim);
  l.bias = logits;
  m.layers.push_back(std::move(l));
  return m;
}

// K=2, logit0 = x0, logit1 = 0. CE for y=0 is ln(1 + e^{-x0}), so a feature
// x0 = -ln(e^L - 1) realizes any target loss L > 0.
inline dpr::ClassifierModel margin_model() {
  dpr::ClassifierModel m;
  dpr::ClassifierModel::Layer l;
  l.weight = dpr::Matrix(2, 1);
  l.weight.data = {1.0, 0.0};
  l.bias = {0.0, 0.0};
  m.layers.push_back(std::move(l));
  return m;
}

inline double margin_feature_for_loss(double target_loss) {
  return -std::log(std::exp(target_loss) - 1.0);
}

inline dpr::BiasedExample make_example(std::vector<double> f, int y, int bias, bool aligned) {
  dpr::BiasedExample e;
  e.features = std::move(f);
  e.y = y;
  e.bias_labels = {bias};
  e.aligned = {static_cast<std::uint8_t>(aligned ? 1 : 0)};
  return e;
}

inline dpr::BiasedDataset tiny_dataset(int K, std::vector<dpr::BiasedExample> ex) {
  dpr::BiasedDataset d;
  d.num_classes = K;
  d.num_bias_attrs = 1;
  d.examples = std::move(ex);
  return d;
}

// Four K=2 examples on the margin model with CE losses {0.1, 0.3 | 0.7, 0.9}:
// aligned pair first, conflicting pair second.
inline dpr::BiasedDataset staged_loss_dataset() {
  return tiny_dataset(2, {make_example({margin_feature_for_loss(0.1)}, 0, 0, true),
                          make_example({margin_feature_for_loss(0.3)}, 0, 0, true),
                          make_example({margin_feature_for_loss(0.7)}, 0, 1, false),
                          make_example({margin_feature_for_loss(0.9)}, 0, 1, false)});
}

inline dpr::GenConfig quick_gen(double rho, int image_size = 8) {
  dpr::GenConfig g;
  g.rho = rho;
  g.image_size = image_size;
  return g;
}

}  // namespace t
