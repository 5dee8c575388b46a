#include "dpr/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <utility>

#include "dpr/binary_io.hpp"

namespace dpr {

std::string kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::Colored: return "colored";
    case DatasetKind::Multibias: return "multibias";
    case DatasetKind::ColorizedIdx: return "colorized-idx";
  }
  return "?";
}

DatasetKind kind_from_name(const std::string& s) {
  if (s == "colored") return DatasetKind::Colored;
  if (s == "multibias") return DatasetKind::Multibias;
  if (s == "colorized-idx" || s == "idx") return DatasetKind::ColorizedIdx;
  throw ParamError("unknown dataset kind: " + s);
}

const std::vector<std::array<double, 3>>& default_palette10() {
  static const std::vector<std::array<double, 3>> palette = {
      {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}, {1.0, 1.0, 0.0},
      {1.0, 0.0, 1.0}, {0.0, 1.0, 1.0}, {1.0, 0.5, 0.0}, {0.5, 0.0, 1.0},
      {0.0, 0.6, 0.3}, {0.7, 0.7, 0.7}};
  return palette;
}

const std::vector<std::array<double, 3>>& GenConfig::effective_palette() const {
  return palette.empty() ? default_palette10() : palette;
}

void GenConfig::validate() const {
  if (num_classes < 2) throw ParamError("gen: K must be >= 2");
  if (!(rho >= 0.0 && rho <= 1.0)) throw ParamError("gen: rho must lie in [0,1]");
  if (color_sigma < 0.0) throw ParamError("gen: sigma must be nonnegative");
  if (kind == DatasetKind::Colored || kind == DatasetKind::ColorizedIdx) {
    const auto& pal = effective_palette();
    if (static_cast<int>(pal.size()) < num_classes)
      throw ParamError("gen: palette has fewer prototypes than classes");
    for (std::size_t a = 0; a < pal.size(); ++a)
      for (std::size_t b = a + 1; b < pal.size(); ++b)
        if (pal[a] == pal[b]) throw ParamError("gen: palette prototypes must be pairwise distinct");
  }
  if (kind == DatasetKind::Colored) {
    if (num_classes > 10) throw ParamError("gen: colored kind supports at most 10 glyph classes");
    if (image_size < 8) throw ParamError("gen: image_size must be >= 8");
    if (jitter_px < 0) throw ParamError("gen: jitter must be nonnegative");
    if (!(glyph_keep_prob > 0.0 && glyph_keep_prob <= 1.0))
      throw ParamError("gen: glyph_keep_prob must lie in (0,1]");
  }
  if (kind == DatasetKind::Multibias && num_bias_attrs < 2)
    throw ParamError("gen: multibias needs M >= 2");
}

namespace {

// 8x8 binary glyph masks, one distinctive shape per class.
constexpr int kGlyphSide = 8;
const char* const kGlyphs[10][kGlyphSide] = {
    // 0: square ring
    {"########", "#......#", "#......#", "#......#", "#......#", "#......#", "#......#",
     "########"},
    // 1: center bar
    {"...##...", "...##...", "...##...", "...##...", "...##...", "...##...", "...##...",
     "...##..."},
    // 2: Z
    {"########", "......#.", ".....#..", "....#...", "...#....", "..#.....", ".#......",
     "########"},
    // 3: lower-left triangle
    {"#.......", "##......", "###.....", "####....", "#####...", "######..", "#######.",
     "########"},
    // 4: plus
    {"...##...", "...##...", "...##...", "########", "########", "...##...", "...##...",
     "...##..."},
    // 5: X
    {"#......#", ".#....#.", "..#..#..", "...##...", "...##...", "..#..#..", ".#....#.",
     "#......#"},
    // 6: L
    {"##......", "##......", "##......", "##......", "##......", "##......", "########",
     "########"},
    // 7: T
    {"########", "########", "...##...", "...##...", "...##...", "...##...", "...##...",
     "...##..."},
    // 8: diamond
    {"...##...", "..####..", ".######.", "########", "########", ".######.", "..####..",
     "...##..."},
    // 9: stripes
    {"########", "........", "########", "........", "########", "........", "########",
     "........"},
};

double clamp01(double v) { return std::min(1.0, std::max(0.0, v)); }

std::array<double, 3> sample_color(const std::array<double, 3>& prototype, double sigma, Rng& rng) {
  std::array<double, 3> c;
  for (int ch = 0; ch < 3; ++ch) c[ch] = clamp01(prototype[ch] + sigma * rng.gaussian());
  return c;
}

// Uniform draw over the K-1 classes other than y.
int draw_other_class(int y, int k, Rng& rng) {
  int u = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(k - 1)));
  if (u >= y) ++u;
  return u;
}

void check_conflict_fraction(const BiasedDataset& d) {
  if (d.examples.empty()) return;
  const double n = static_cast<double>(d.size());
  std::size_t conflicts = 0;
  for (const auto& ex : d.examples)
    if (!ex.aligned[0]) ++conflicts;
  if (d.rho == 0.0 || d.rho == 1.0) {
    const std::size_t want = d.rho == 0.0 ? 0 : d.size();
    if (conflicts != want) throw GenerationError("conflict fraction must be exact at rho 0 or 1");
    return;
  }
  const double expect = n * d.rho;
  const double sd = std::sqrt(n * d.rho * (1.0 - d.rho));
  if (std::abs(static_cast<double>(conflicts) - expect) > 3.0 * sd)
    throw GenerationError("empirical conflict count " + std::to_string(conflicts) +
                          " outside 3 binomial std of rho=" + std::to_string(d.rho));
}

// Grayscale glyph canvas for one example; consumes rng draws in a fixed order.
std::vector<double> render_glyph(const GenConfig& cfg, int y, Rng& rng) {
  const int s = cfg.image_size;
  std::vector<double> canvas(static_cast<std::size_t>(s) * s, 0.0);
  const int base = (s - kGlyphSide) / 2;
  const int span = 2 * cfg.jitter_px + 1;
  const int dx = cfg.jitter_px > 0 ? static_cast<int>(rng.next_below(span)) - cfg.jitter_px : 0;
  const int dy = cfg.jitter_px > 0 ? static_cast<int>(rng.next_below(span)) - cfg.jitter_px : 0;
  const int ox = std::clamp(base + dx, 0, s - kGlyphSide);
  const int oy = std::clamp(base + dy, 0, s - kGlyphSide);

  for (int r = 0; r < kGlyphSide; ++r) {
    for (int c = 0; c < kGlyphSide; ++c) {
      if (kGlyphs[y][r][c] != '#') continue;
      if (!rng.bernoulli(cfg.glyph_keep_prob)) continue;
      canvas[static_cast<std::size_t>(oy + r) * s + (ox + c)] =
          rng.uniform(cfg.glyph_intensity_lo, cfg.glyph_intensity_hi);
    }
  }
  if (cfg.speckle_prob > 0.0) {
    for (std::size_t i = 0; i < canvas.size(); ++i) {
      if (canvas[i] != 0.0) continue;
      if (rng.bernoulli(cfg.speckle_prob)) canvas[i] = rng.uniform(cfg.speckle_lo, cfg.speckle_hi);
    }
  }
  return canvas;
}

BiasedExample make_colored_example(const GenConfig& cfg, std::uint64_t seed, std::size_t index) {
  Rng rng = Rng::fork(seed, stream::kExampleBase + index);
  const int k = cfg.num_classes;
  const auto& pal = cfg.effective_palette();

  BiasedExample ex;
  ex.y = static_cast<int>(rng.next_below(k));
  const bool conflicting = rng.bernoulli(cfg.rho);
  const int color_class = conflicting ? draw_other_class(ex.y, k, rng) : ex.y;
  const auto color = sample_color(pal[color_class], cfg.color_sigma, rng);
  const auto gray = render_glyph(cfg, ex.y, rng);

  const std::size_t plane = gray.size();
  ex.features.resize(3 * plane);
  for (int ch = 0; ch < 3; ++ch)
    for (std::size_t i = 0; i < plane; ++i) ex.features[ch * plane + i] = gray[i] * color[ch];
  ex.bias_labels = {color_class};
  ex.aligned = {static_cast<std::uint8_t>(color_class == ex.y)};
  return ex;
}

}  // namespace

BiasedDataset generate_colored(const GenConfig& config, std::size_t n, std::uint64_t seed) {
  GenConfig cfg = config;
  cfg.kind = DatasetKind::Colored;
  cfg.validate();
  if (n == 0) throw ParamError("generate: n must be positive");

  BiasedDataset d;
  d.num_classes = cfg.num_classes;
  d.num_bias_attrs = 1;
  d.rho = cfg.rho;
  d.seed = seed;
  d.shape = {3, cfg.image_size, cfg.image_size};
  d.examples.resize(n);

  // Every example derives its randomness from (seed, index), so the loop is
  // order- and thread-count-independent.
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    d.examples[static_cast<std::size_t>(i)] =
        make_colored_example(cfg, seed, static_cast<std::size_t>(i));

  check_conflict_fraction(d);
  return d;
}

namespace {

// Per-attribute block value; distinct per attribute so blocks are tellable
// apart even in a flat vector.
double attr_block_value(int attr, int total) {
  return 0.3 + 0.65 * static_cast<double>(attr + 1) / static_cast<double>(total + 1);
}

BiasedExample make_multibias_example(const GenConfig& cfg, std::uint64_t seed, std::size_t index) {
  Rng rng = Rng::fork(seed, stream::kExampleBase + index);
  const int k = cfg.num_classes;
  const int m = cfg.num_bias_attrs;

  BiasedExample ex;
  ex.y = static_cast<int>(rng.next_below(k));
  ex.bias_labels.resize(m);
  ex.aligned.resize(m);
  for (int a = 0; a < m; ++a) {
    const bool conflicting = rng.bernoulli(cfg.rho);
    ex.bias_labels[a] = conflicting ? draw_other_class(ex.y, k, rng) : ex.y;
    ex.aligned[a] = static_cast<std::uint8_t>(ex.bias_labels[a] == ex.y);
  }

  // Feature vector: target one-hot block then one block per bias attribute,
  // each scaled by its attribute value, with gaussian noise everywhere.
  const int blocks = m + 1;
  ex.features.assign(static_cast<std::size_t>(blocks) * k, 0.0);
  for (int b = 0; b < blocks; ++b) {
    const int hot = (b == 0) ? ex.y : ex.bias_labels[b - 1];
    const double v = attr_block_value(b, blocks);
    for (int j = 0; j < k; ++j) {
      const double noise = cfg.color_sigma * rng.gaussian();
      ex.features[static_cast<std::size_t>(b) * k + j] = clamp01((j == hot ? v : 0.0) + noise);
    }
  }
  return ex;
}

}  // namespace

BiasedDataset generate_multibias(const GenConfig& config, std::size_t n, std::uint64_t seed) {
  GenConfig cfg = config;
  cfg.kind = DatasetKind::Multibias;
  cfg.validate();
  if (n == 0) throw ParamError("generate: n must be positive");

  BiasedDataset d;
  d.num_classes = cfg.num_classes;
  d.num_bias_attrs = cfg.num_bias_attrs;
  d.rho = cfg.rho;
  d.seed = seed;
  d.shape = {};  // flat features
  d.examples.resize(n);

#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(n); ++i)
    d.examples[static_cast<std::size_t>(i)] =
        make_multibias_example(cfg, seed, static_cast<std::size_t>(i));

  check_conflict_fraction(d);
  return d;
}

BiasedDataset colorize_idx(const std::string& image_file, const std::string& label_file,
                           const GenConfig& config, std::uint64_t seed) {
  GenConfig cfg = config;
  cfg.kind = DatasetKind::ColorizedIdx;
  cfg.validate();

  const IdxImages images = parse_idx_images(image_file);
  const auto labels = parse_idx_labels(label_file);
  if (images.count != labels.size())
    throw FormatError("image count " + std::to_string(images.count) + " != label count " +
                          std::to_string(labels.size()),
                      0);
  if (images.count == 0) throw ParamError("colorize: empty IDX input");

  const int k = cfg.num_classes;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] >= k) throw ParamError("colorize: label exceeds K at example " + std::to_string(i));
  const auto& pal = cfg.effective_palette();
  const std::size_t plane = static_cast<std::size_t>(images.rows) * images.cols;

  BiasedDataset d;
  d.num_classes = k;
  d.num_bias_attrs = 1;
  d.rho = cfg.rho;
  d.seed = seed;
  d.shape = {3, images.rows, images.cols};
  d.examples.resize(images.count);

#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(images.count); ++i) {
    const std::size_t idx = static_cast<std::size_t>(i);
    Rng rng = Rng::fork(seed, stream::kExampleBase + idx);
    BiasedExample ex;
    ex.y = labels[idx];
    const bool conflicting = rng.bernoulli(cfg.rho);
    const int color_class = conflicting ? draw_other_class(ex.y, k, rng) : ex.y;
    const auto color = sample_color(pal[color_class], cfg.color_sigma, rng);

    const std::uint8_t* px = images.pixels.data() + idx * plane;
    ex.features.resize(3 * plane);
    for (int ch = 0; ch < 3; ++ch)
      for (std::size_t p = 0; p < plane; ++p)
        ex.features[ch * plane + p] = (px[p] / 255.0) * color[ch];
    ex.bias_labels = {color_class};
    ex.aligned = {static_cast<std::uint8_t>(color_class == ex.y)};
    d.examples[idx] = std::move(ex);
  }

  check_conflict_fraction(d);
  return d;
}

BiasedDataset make_unbiased_test(const GenConfig& config, std::size_t n, std::uint64_t seed) {
  GenConfig cfg = config;
  cfg.rho = 0.9;
  switch (cfg.kind) {
    case DatasetKind::Colored: return generate_colored(cfg, n, seed);
    case DatasetKind::Multibias: return generate_multibias(cfg, n, seed);
    case DatasetKind::ColorizedIdx:
      throw ParamError("unbiased test for IDX data: colorize the test files with rho=0.9");
  }
  throw ParamError("unknown dataset kind");
}

std::pair<BiasedDataset, BiasedDataset> split(const BiasedDataset& dataset, double val_fraction,
                                              std::uint64_t seed) {
  if (!(val_fraction >= 0.0 && val_fraction < 1.0))
    throw ParamError("split: val_fraction must lie in [0,1)");
  const std::size_t n = dataset.size();
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng = Rng::fork(seed, stream::kSplit);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.next_below(i);
    std::swap(order[i - 1], order[j]);
  }

  const std::size_t n_val = static_cast<std::size_t>(static_cast<double>(n) * val_fraction + 0.5);
  BiasedDataset train = dataset, val = dataset;
  train.examples.clear();
  val.examples.clear();
  val.examples.reserve(n_val);
  train.examples.reserve(n - n_val);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& ex = dataset.examples[order[i]];
    if (i < n_val)
      val.examples.push_back(ex);
    else
      train.examples.push_back(ex);
  }
  return {std::move(train), std::move(val)};
}

BiasedExample augment(const BiasedExample& example, const ImageShape& shape,
                      const AugmentParams& params, Rng& rng) {
  if (!shape.is_image() || shape.size() != example.features.size())
    throw ShapeError("augment: features are not image-shaped");

  BiasedExample out = example;
  const int h = shape.height, w = shape.width, ch = shape.channels;
  const std::size_t plane = static_cast<std::size_t>(h) * w;

  for (int c = 0; c < ch; ++c) {
    const double f = rng.uniform(1.0 - params.color_jitter, 1.0 + params.color_jitter);
    for (std::size_t p = 0; p < plane; ++p)
      out.features[c * plane + p] = clamp01(out.features[c * plane + p] * f);
  }

  const double deg = rng.uniform(-params.max_rotation_deg, params.max_rotation_deg);
  if (deg != 0.0) {
    const double rad = deg * (3.14159265358979323846 / 180.0);
    const double cs = std::cos(rad), sn = std::sin(rad);
    const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
    std::vector<double> rotated(out.features.size(), 0.0);
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        // inverse map, nearest neighbor
        const double xs = cs * (c - cx) + sn * (r - cy) + cx;
        const double ys = -sn * (c - cx) + cs * (r - cy) + cy;
        const long si = std::lround(xs);
        const long sj = std::lround(ys);
        if (si < 0 || si >= w || sj < 0 || sj >= h) continue;
        for (int cc = 0; cc < ch; ++cc)
          rotated[cc * plane + static_cast<std::size_t>(r) * w + c] =
              out.features[cc * plane + static_cast<std::size_t>(sj) * w + si];
      }
    }
    out.features = std::move(rotated);
  }
  return out;
}

double empirical_conflict_ratio(const BiasedDataset& dataset) {
  if (dataset.examples.empty()) throw ParamError("conflict ratio: empty dataset");
  if (dataset.num_bias_attrs < 1) throw ParamError("conflict ratio: no bias attributes");
  std::size_t conflicts = 0;
  for (const auto& ex : dataset.examples)
    if (!ex.aligned[0]) ++conflicts;
  return static_cast<double>(conflicts) / static_cast<double>(dataset.size());
}

void save_dataset(const BiasedDataset& dataset, const std::string& path) {
  ByteWriter w;
  w.bytes("DPRD", 4);
  w.u16(1);  // format version
  w.u16(static_cast<std::uint16_t>(dataset.num_classes));
  w.u16(static_cast<std::uint16_t>(dataset.num_bias_attrs));
  w.f64(dataset.rho);
  w.u64(dataset.size());
  for (const auto& ex : dataset.examples) {
    w.u32(static_cast<std::uint32_t>(ex.features.size()));
    for (double v : ex.features) w.f64(v);
    w.u16(static_cast<std::uint16_t>(ex.y));
    for (int m = 0; m < dataset.num_bias_attrs; ++m) {
      w.u16(static_cast<std::uint16_t>(ex.bias_labels[m]));
      w.u8(ex.aligned[m]);
    }
  }
  write_file_bytes(path, w.data());
}

namespace {

// The file format carries no spatial metadata; planar square RGB is the only
// image layout the generators emit, so recover it from the feature length.
ImageShape infer_shape(std::size_t feature_len) {
  if (feature_len % 3 == 0) {
    const auto side = static_cast<int>(std::lround(std::sqrt(feature_len / 3.0)));
    if (side >= 2 && static_cast<std::size_t>(3) * side * side == feature_len)
      return {3, side, side};
  }
  return {};
}

}  // namespace

BiasedDataset load_dataset(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size());
  char magic[4];
  r.raw(magic, 4);
  if (std::memcmp(magic, "DPRD", 4) != 0) throw FormatError("bad dataset magic", 0);
  const std::uint16_t version = r.u16();
  if (version != 1) throw FormatError("unsupported dataset version", 4);

  BiasedDataset d;
  d.num_classes = r.u16();
  d.num_bias_attrs = r.u16();
  d.rho = r.f64();
  const std::uint64_t n = r.u64();
  d.examples.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    BiasedExample ex;
    const std::uint32_t len = r.u32();
    ex.features.resize(len);
    for (double& v : ex.features) v = r.f64();
    ex.y = r.u16();
    ex.bias_labels.resize(d.num_bias_attrs);
    ex.aligned.resize(d.num_bias_attrs);
    for (int m = 0; m < d.num_bias_attrs; ++m) {
      ex.bias_labels[m] = r.u16();
      ex.aligned[m] = r.u8();
    }
    d.examples.push_back(std::move(ex));
  }
  d.shape = infer_shape(d.feature_dim());
  return d;
}

IdxImages parse_idx_images(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size());
  const std::uint32_t magic = r.u32_be();
  if (magic != 0x00000803u) throw FormatError("bad IDX image magic", 0);
  IdxImages out;
  out.count = r.u32_be();
  out.rows = static_cast<int>(r.u32_be());
  out.cols = static_cast<int>(r.u32_be());
  if (out.rows <= 0 || out.cols <= 0) throw FormatError("bad IDX image dimensions", 8);
  const std::size_t total = out.count * static_cast<std::size_t>(out.rows) * out.cols;
  out.pixels.resize(total);
  r.raw(out.pixels.data(), total);
  return out;
}

std::vector<std::uint8_t> parse_idx_labels(const std::string& path) {
  const auto bytes = read_file_bytes(path);
  ByteReader r(bytes.data(), bytes.size());
  const std::uint32_t magic = r.u32_be();
  if (magic != 0x00000801u) throw FormatError("bad IDX label magic", 0);
  const std::uint32_t count = r.u32_be();
  std::vector<std::uint8_t> labels(count);
  r.raw(labels.data(), count);
  return labels;
}

void write_idx_images(const std::string& path, const IdxImages& images) {
  ByteWriter w;
  w.u32_be(0x00000803u);
  w.u32_be(static_cast<std::uint32_t>(images.count));
  w.u32_be(static_cast<std::uint32_t>(images.rows));
  w.u32_be(static_cast<std::uint32_t>(images.cols));
  w.bytes(images.pixels.data(), images.pixels.size());
  write_file_bytes(path, w.data());
}

void write_idx_labels(const std::string& path, const std::vector<std::uint8_t>& labels) {
  ByteWriter w;
  w.u32_be(0x00000801u);
  w.u32_be(static_cast<std::uint32_t>(labels.size()));
  w.bytes(labels.data(), labels.size());
  write_file_bytes(path, w.data());
}

}  // namespace dpr
