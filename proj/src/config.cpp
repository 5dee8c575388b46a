#include "dpr/config.hpp"

#include <cctype>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <type_traits>

#include "dpr/csv.hpp"

namespace dpr {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ParamError("config: bad number for " + key + ": '" + v + "'");
  }
}

std::uint64_t parse_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const unsigned long long u = std::stoull(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return u;
  } catch (const std::exception&) {
    throw ParamError("config: bad integer for " + key + ": '" + v + "'");
  }
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  throw ParamError("config: bad boolean for " + key + ": '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      parts.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (!trim(cur).empty() || !parts.empty()) parts.push_back(trim(cur));
  if (!parts.empty() && parts.back().empty()) parts.pop_back();
  return parts;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& p : split_list(v)) out.push_back(parse_double(key, p));
  return out;
}

std::vector<std::uint64_t> parse_u64_list(const std::string& key, const std::string& v) {
  std::vector<std::uint64_t> out;
  for (const auto& p : split_list(v)) out.push_back(parse_u64(key, p));
  return out;
}

void apply_key(ExperimentConfig& c, const std::string& section, const std::string& key,
               const std::string& v) {
  const std::string k = section + "." + key;
  auto& g = c.gen;
  auto& s = c.schedule;
  auto& b = c.bounds;

  if (k == "data.kind") g.kind = kind_from_name(v);
  else if (k == "data.classes") g.num_classes = static_cast<int>(parse_u64(k, v));
  else if (k == "data.bias_attrs") g.num_bias_attrs = static_cast<int>(parse_u64(k, v));
  else if (k == "data.rho") c.rhos = parse_double_list(k, v);
  else if (k == "data.sigma") g.color_sigma = parse_double(k, v);
  else if (k == "data.image_size") g.image_size = static_cast<int>(parse_u64(k, v));
  else if (k == "data.jitter") g.jitter_px = static_cast<int>(parse_u64(k, v));
  else if (k == "data.glyph_keep") g.glyph_keep_prob = parse_double(k, v);
  else if (k == "data.glyph_intensity_lo") g.glyph_intensity_lo = parse_double(k, v);
  else if (k == "data.glyph_intensity_hi") g.glyph_intensity_hi = parse_double(k, v);
  else if (k == "data.speckle") g.speckle_prob = parse_double(k, v);
  else if (k == "data.speckle_lo") g.speckle_lo = parse_double(k, v);
  else if (k == "data.speckle_hi") g.speckle_hi = parse_double(k, v);
  else if (k == "data.n_train") c.n_train = parse_u64(k, v);
  else if (k == "data.n_test") c.n_test = parse_u64(k, v);
  else if (k == "data.idx_images") c.idx_images = v;
  else if (k == "data.idx_labels") c.idx_labels = v;
  else if (k == "data.idx_test_images") c.idx_test_images = v;
  else if (k == "data.idx_test_labels") c.idx_test_labels = v;
  else if (k == "train.t_biased") s.t_biased = parse_u64(k, v);
  else if (k == "train.t_debiased") s.t_debiased = parse_u64(k, v);
  else if (k == "train.batch") s.batch_size = parse_u64(k, v);
  else if (k == "train.lr") s.learning_rate = parse_double(k, v);
  else if (k == "train.momentum") s.momentum = parse_double(k, v);
  else if (k == "train.weight_decay") s.weight_decay = parse_double(k, v);
  else if (k == "train.lr_decay_factor") s.lr_decay_factor = parse_double(k, v);
  else if (k == "train.lr_decay_period") s.lr_decay_period = parse_u64(k, v);
  else if (k == "train.q") s.q = parse_double(k, v);
  else if (k == "train.tau") s.tau = parse_double(k, v);
  else if (k == "train.augment") s.augment = parse_bool(k, v);
  else if (k == "train.augment_biased") s.augment_biased = parse_bool(k, v);
  else if (k == "train.init_from_biased") s.init_from_biased = parse_bool(k, v);
  else if (k == "train.use_gce") s.use_gce = parse_bool(k, v);
  else if (k == "train.hidden_width") s.hidden_width = static_cast<int>(parse_u64(k, v));
  else if (k == "train.hidden_layers") s.hidden_layers = static_cast<int>(parse_u64(k, v));
  else if (k == "train.log_every") s.log_every = parse_u64(k, v);
  else if (k == "train.log_group_every") s.log_group_every = parse_u64(k, v);
  else if (k == "train.color_jitter") s.augment_params.color_jitter = parse_double(k, v);
  else if (k == "train.rotation_deg") s.augment_params.max_rotation_deg = parse_double(k, v);
  else if (k == "train.mode") c.mode = v;
  else if (k == "run.seeds") c.seeds = parse_u64_list(k, v);
  else if (k == "run.out_dir") c.out_dir = v;
  else if (k == "run.histogram_bins") c.histogram_bins = static_cast<int>(parse_u64(k, v));
  else if (k == "sweep.q_list") c.q_grid = parse_double_list(k, v);
  else if (k == "sweep.tau_list") c.tau_grid = parse_double_list(k, v);
  else if (k == "bounds.c_list") b.c_grid = parse_double_list(k, v);
  else if (k == "bounds.delta_list") b.delta_grid = parse_double_list(k, v);
  else if (k == "bounds.population") b.population_per_group = parse_u64(k, v);
  else if (k == "bounds.bound_seeds") b.bound_seeds = parse_u64(k, v);
  else if (k == "bounds.train_n") b.train_n = parse_u64(k, v);
  else if (k == "bounds.hoeffding_trials") b.hoeffding_trials = parse_u64(k, v);
  else if (k == "bounds.hoeffding_nb") b.hoeffding_nb = parse_u64(k, v);
  else throw ParamError("config: unknown key '" + k + "'");
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::size_t hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ParamError("config line " + std::to_string(lineno) + ": unterminated section");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "data" && section != "train" && section != "run" && section != "sweep" &&
          section != "bounds")
        throw ParamError("config: unknown section [" + section + "]");
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ParamError("config line " + std::to_string(lineno) + ": expected key=value");
    if (section.empty())
      throw ParamError("config line " + std::to_string(lineno) + ": key outside any section");
    apply_key(cfg, section, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("config: cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

void ExperimentConfig::validate() const {
  gen.validate();
  schedule.validate();
  if (seeds.empty()) throw ParamError("config: seeds must be nonempty");
  if (rhos.empty()) throw ParamError("config: rho list must be nonempty");
  for (double r : rhos)
    if (!(r >= 0.0 && r <= 1.0)) throw ParamError("config: rho values must lie in [0,1]");
  if (mode != "dpr" && mode != "erm" && mode != "reweighted")
    throw ParamError("config: mode must be dpr, erm, or reweighted");
  if (n_train < 1 || n_test < 1) throw ParamError("config: dataset sizes must be positive");
  if (histogram_bins < 2) throw ParamError("config: histogram_bins must be >= 2");
  if (gen.kind == DatasetKind::ColorizedIdx && (idx_images.empty() || idx_labels.empty()))
    throw ParamError("config: colorized-idx needs idx_images and idx_labels");
  for (double q : q_grid)
    if (!(q > 0.0 && q <= 1.0)) throw ParamError("config: q sweep values must lie in (0,1]");
  for (double t : tau_grid)
    if (!(t > 0.0)) throw ParamError("config: tau sweep values must be positive");
  for (double c : bounds.c_grid)
    if (!(c > 0.0)) throw ParamError("config: bound caps must be positive");
  for (double d : bounds.delta_grid)
    if (!(d > 0.0 && d < 1.0)) throw ParamError("config: deltas must lie in (0,1)");
  if (bounds.delta_grid.empty()) throw ParamError("config: delta list must be nonempty");
  if (bounds.population_per_group < 1 || bounds.train_n < 2 || bounds.bound_seeds < 1 ||
      bounds.hoeffding_nb < 1)
    throw ParamError("config: bound sample sizes must be positive");
}

namespace {

template <typename T>
std::string join_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, double>)
      out += fmt_double(v[i]);
    else
      out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

std::string canonical_config_text(const ExperimentConfig& c) {
  const auto& g = c.gen;
  const auto& s = c.schedule;
  const auto& b = c.bounds;
  std::string o;
  o += "[data]\n";
  o += "kind = " + kind_name(g.kind) + "\n";
  o += "classes = " + std::to_string(g.num_classes) + "\n";
  o += "bias_attrs = " + std::to_string(g.num_bias_attrs) + "\n";
  o += "rho = " + join_list(c.rhos) + "\n";
  o += "sigma = " + fmt_double(g.color_sigma) + "\n";
  o += "image_size = " + std::to_string(g.image_size) + "\n";
  o += "jitter = " + std::to_string(g.jitter_px) + "\n";
  o += "glyph_keep = " + fmt_double(g.glyph_keep_prob) + "\n";
  o += "glyph_intensity_lo = " + fmt_double(g.glyph_intensity_lo) + "\n";
  o += "glyph_intensity_hi = " + fmt_double(g.glyph_intensity_hi) + "\n";
  o += "speckle = " + fmt_double(g.speckle_prob) + "\n";
  o += "speckle_lo = " + fmt_double(g.speckle_lo) + "\n";
  o += "speckle_hi = " + fmt_double(g.speckle_hi) + "\n";
  o += "n_train = " + std::to_string(c.n_train) + "\n";
  o += "n_test = " + std::to_string(c.n_test) + "\n";
  o += "idx_images = " + c.idx_images + "\n";
  o += "idx_labels = " + c.idx_labels + "\n";
  o += "idx_test_images = " + c.idx_test_images + "\n";
  o += "idx_test_labels = " + c.idx_test_labels + "\n";
  o += "[train]\n";
  o += "t_biased = " + std::to_string(s.t_biased) + "\n";
  o += "t_debiased = " + std::to_string(s.t_debiased) + "\n";
  o += "batch = " + std::to_string(s.batch_size) + "\n";
  o += "lr = " + fmt_double(s.learning_rate) + "\n";
  o += "momentum = " + fmt_double(s.momentum) + "\n";
  o += "weight_decay = " + fmt_double(s.weight_decay) + "\n";
  o += "lr_decay_factor = " + fmt_double(s.lr_decay_factor) + "\n";
  o += "lr_decay_period = " + std::to_string(s.lr_decay_period) + "\n";
  o += "q = " + fmt_double(s.q) + "\n";
  o += "tau = " + fmt_double(s.tau) + "\n";
  o += "augment = " + std::string(s.augment ? "1" : "0") + "\n";
  o += "augment_biased = " + std::string(s.augment_biased ? "1" : "0") + "\n";
  o += "init_from_biased = " + std::string(s.init_from_biased ? "1" : "0") + "\n";
  o += "use_gce = " + std::string(s.use_gce ? "1" : "0") + "\n";
  o += "hidden_width = " + std::to_string(s.hidden_width) + "\n";
  o += "hidden_layers = " + std::to_string(s.hidden_layers) + "\n";
  o += "log_every = " + std::to_string(s.log_every) + "\n";
  o += "log_group_every = " + std::to_string(s.log_group_every) + "\n";
  o += "color_jitter = " + fmt_double(s.augment_params.color_jitter) + "\n";
  o += "rotation_deg = " + fmt_double(s.augment_params.max_rotation_deg) + "\n";
  o += "mode = " + c.mode + "\n";
  o += "[run]\n";
  o += "seeds = " + join_list(c.seeds) + "\n";
  o += "out_dir = " + c.out_dir + "\n";
  o += "histogram_bins = " + std::to_string(c.histogram_bins) + "\n";
  o += "[sweep]\n";
  if (!c.q_grid.empty()) o += "q_list = " + join_list(c.q_grid) + "\n";
  if (!c.tau_grid.empty()) o += "tau_list = " + join_list(c.tau_grid) + "\n";
  o += "[bounds]\n";
  if (!b.c_grid.empty()) o += "c_list = " + join_list(b.c_grid) + "\n";
  o += "delta_list = " + join_list(b.delta_grid) + "\n";
  o += "population = " + std::to_string(b.population_per_group) + "\n";
  o += "bound_seeds = " + std::to_string(b.bound_seeds) + "\n";
  o += "train_n = " + std::to_string(b.train_n) + "\n";
  o += "hoeffding_trials = " + std::to_string(b.hoeffding_trials) + "\n";
  o += "hoeffding_nb = " + std::to_string(b.hoeffding_nb) + "\n";
  return o;
}

std::string compute_run_id(const ExperimentConfig& cfg) {
  const std::string text = canonical_config_text(cfg) + kCodeVersion;
  std::uint64_t h = 14695981039346656037ULL;  // FNV-1a
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace dpr
