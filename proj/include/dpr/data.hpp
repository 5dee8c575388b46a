#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "dpr/errors.hpp"
#include "dpr/rng.hpp"

namespace dpr {

enum class DatasetKind { Colored, Multibias, ColorizedIdx };

std::string kind_name(DatasetKind k);
DatasetKind kind_from_name(const std::string& s);

// Planar channel layout: features[c*h*w + r*w + col]. channels == 0 means the
// features are a flat vector with no spatial structure.
struct ImageShape {
  int channels = 0;
  int height = 0;
  int width = 0;
  bool is_image() const { return channels > 0 && height > 0 && width > 0; }
  std::size_t size() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
};

struct BiasedExample {
  std::vector<double> features;     // values in [0,1] before augmentation
  int y = 0;                        // target class
  std::vector<int> bias_labels;     // one per bias attribute
  std::vector<std::uint8_t> aligned;  // aligned[m] <=> bias_labels[m] == prototype index of y
};

struct BiasedDataset {
  std::vector<BiasedExample> examples;
  int num_classes = 0;   // K
  int num_bias_attrs = 0;  // M
  double rho = 0.0;        // intended bias-conflicting ratio
  std::uint64_t seed = 0;
  ImageShape shape;        // in-memory only; re-inferred after file load

  std::size_t size() const { return examples.size(); }
  std::size_t feature_dim() const { return examples.empty() ? 0 : examples[0].features.size(); }
};

struct GenConfig {
  DatasetKind kind = DatasetKind::Colored;
  int num_classes = 10;    // K
  int num_bias_attrs = 1;  // M (>= 2 for multibias)
  double rho = 0.01;
  double color_sigma = 0.02;  // per-channel gaussian color noise
  int image_size = 12;        // colored glyph canvas (pixels per side)

  // Shape-cue hardness for the colored generator. Color is meant to be the
  // easy cue; these knobs keep the glyph learnable but non-trivial.
  int jitter_px = 2;               // uniform glyph offset in [-jitter, +jitter]
  double glyph_keep_prob = 0.8;    // per-pixel survival of glyph pixels
  double glyph_intensity_lo = 0.55;
  double glyph_intensity_hi = 1.0;
  double speckle_prob = 0.03;      // background noise pixels
  double speckle_lo = 0.2, speckle_hi = 0.6;

  // K color prototypes in [0,1]^3; defaults to a fixed well-separated table.
  std::vector<std::array<double, 3>> palette;

  void validate() const;
  const std::vector<std::array<double, 3>>& effective_palette() const;
};

// Fixed palette used when GenConfig.palette is empty (K <= 10).
const std::vector<std::array<double, 3>>& default_palette10();

// Colored glyph dataset: label = procedural glyph shape, bias = color.
// Each example is independently conflicting with probability rho; conflicting
// examples take the prototype color of a uniformly drawn other class.
BiasedDataset generate_colored(const GenConfig& config, std::size_t n, std::uint64_t seed);

// M independent one-hot bias blocks plus a target block; attribute m aligns
// with the label with probability 1-rho, independently per attribute.
BiasedDataset generate_multibias(const GenConfig& config, std::size_t n, std::uint64_t seed);

// Colorizes grayscale IDX images (multiplicative, per-channel) with the same
// alignment logic as generate_colored.
BiasedDataset colorize_idx(const std::string& image_file, const std::string& label_file,
                           const GenConfig& config, std::uint64_t seed);

// Same generator with rho overridden to 0.9.
BiasedDataset make_unbiased_test(const GenConfig& config, std::size_t n, std::uint64_t seed);

// Seed-deterministic shuffle split; both halves keep K/M/rho metadata.
std::pair<BiasedDataset, BiasedDataset> split(const BiasedDataset& dataset, double val_fraction,
                                              std::uint64_t seed);

struct AugmentParams {
  double color_jitter = 0.4;      // per-channel factor in [1-j, 1+j]
  double max_rotation_deg = 15.0; // uniform in [-r, +r], nearest neighbor
};

// Color jitter then rotation; labels and flags unchanged. Requires image-
// shaped features.
BiasedExample augment(const BiasedExample& example, const ImageShape& shape,
                      const AugmentParams& params, Rng& rng);

// Fraction of examples with aligned[0] == false.
double empirical_conflict_ratio(const BiasedDataset& dataset);

// Native dataset file: magic "DPRD", version u16, K u16, M u16, rho f64,
// n u64, then per example: feature length u32, f64 features, y u16,
// M x (bias label u16, aligned u8). Little-endian.
void save_dataset(const BiasedDataset& dataset, const std::string& path);
BiasedDataset load_dataset(const std::string& path);

// Parsed IDX tensors (big-endian headers, u8 payload).
struct IdxImages {
  std::size_t count = 0;
  int rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;  // count*rows*cols
};
IdxImages parse_idx_images(const std::string& path);
std::vector<std::uint8_t> parse_idx_labels(const std::string& path);
void write_idx_images(const std::string& path, const IdxImages& images);
void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels);

}  // namespace dpr
