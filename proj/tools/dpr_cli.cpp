#include <cstdio>
#include <string>

#include "CLI11.hpp"
#include "dpr/config.hpp"
#include "dpr/harness.hpp"

namespace {

std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
  std::vector<std::uint64_t> out;
  for (const auto& p : split_commas(s)) out.push_back(std::stoull(p));
  return out;
}

std::vector<double> parse_double_csv(const std::string& s) {
  std::vector<double> out;
  for (const auto& p : split_commas(s)) out.push_back(std::stod(p));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"disagreement-probability resampling for spuriously correlated data"};
  app.require_subcommand(1);

  std::string config_path, out_override, seeds_str, mode, rho_str, q_str, tau_str;
  std::string idx_images, idx_labels, checkpoint;
  bool no_init = false, no_gce = false, no_augment = false;

  auto add_common = [&](CLI::App* c) {
    c->add_option("--config", config_path, "INI config file; defaults apply when omitted");
    c->add_option("--out", out_override, "output directory (dataset file path for generate)");
    c->add_option("--seeds", seeds_str, "comma-separated seeds, e.g. 0,1,2");
    c->add_option("--mode", mode, "dpr | erm | reweighted")
        ->check(CLI::IsMember({"dpr", "erm", "reweighted"}));
    c->add_option("--rho", rho_str, "comma-separated bias-conflict ratios");
    c->add_option("--q", q_str, "GCE exponent; a comma list sets the ablation sweep");
    c->add_option("--tau", tau_str, "disagreement temperature; a comma list sets the sweep");
    c->add_flag("--no-init", no_init, "debiased model starts from fresh weights");
    c->add_flag("--no-gce", no_gce, "biased model uses plain cross-entropy");
    c->add_flag("--no-augment", no_augment, "disable augmentation in debiased training");
    c->add_option("--idx-images", idx_images, "IDX image file for colorized-idx data");
    c->add_option("--idx-labels", idx_labels, "IDX label file for colorized-idx data");
  };

  CLI::App* cmd_gen = app.add_subcommand("generate", "write a dataset file and report its bias");
  CLI::App* cmd_run_ = app.add_subcommand("run", "train and evaluate the configured sweep");
  CLI::App* cmd_abl = app.add_subcommand("ablate", "component, sampling, q, and tau ablations");
  CLI::App* cmd_vb = app.add_subcommand("verify-bounds", "finite-sample bound reports");
  CLI::App* cmd_diag = app.add_subcommand("diagnose", "disagreement histogram + loss-gap check");
  for (CLI::App* c : {cmd_gen, cmd_run_, cmd_abl, cmd_vb, cmd_diag}) add_common(c);
  for (CLI::App* c : {cmd_vb, cmd_diag})
    c->add_option("--checkpoint", checkpoint, "trained model file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  CLI::App* sub = app.get_subcommands().front();

  dpr::ExperimentConfig cfg;
  try {
    if (!config_path.empty()) cfg = dpr::load_config_file(config_path);
    if (sub->count("--seeds")) cfg.seeds = parse_seed_list(seeds_str);
    if (sub->count("--rho")) cfg.rhos = parse_double_csv(rho_str);
    if (sub->count("--mode")) cfg.mode = mode;
    if (sub->count("--q")) {
      cfg.q_grid = parse_double_csv(q_str);
      if (cfg.q_grid.size() == 1) cfg.schedule.q = cfg.q_grid.front();
    }
    if (sub->count("--tau")) {
      cfg.tau_grid = parse_double_csv(tau_str);
      if (cfg.tau_grid.size() == 1) cfg.schedule.tau = cfg.tau_grid.front();
    }
    if (no_init) cfg.schedule.init_from_biased = false;
    if (no_gce) cfg.schedule.use_gce = false;
    if (no_augment) cfg.schedule.augment = false;
    if (sub->count("--idx-images")) cfg.idx_images = idx_images;
    if (sub->count("--idx-labels")) cfg.idx_labels = idx_labels;
    if (sub != cmd_gen && sub->count("--out")) cfg.out_dir = out_override;
    cfg.validate();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  }

  try {
    if (sub == cmd_gen) {
      const std::string path =
          sub->count("--out") ? out_override : cfg.out_dir + "/dataset.dprd";
      return dpr::cmd_generate(cfg, path);
    }
    if (sub == cmd_run_) return dpr::cmd_run(cfg);
    if (sub == cmd_abl) return dpr::cmd_ablate(cfg);
    if (sub == cmd_vb) return dpr::cmd_verify_bounds(cfg, checkpoint);
    return dpr::cmd_diagnose(cfg, checkpoint);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
