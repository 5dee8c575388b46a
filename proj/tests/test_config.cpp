#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <string>
#include <sys/wait.h>

#include "dpr/config.hpp"
#include "dpr/csv.hpp"
#include "dpr/data.hpp"
#include "dpr/errors.hpp"
#include "helpers.hpp"

using namespace dpr;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd = std::string(DPR_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Small end-to-end configuration: cheap to train, everything exercised.
std::string tiny_config_text(const std::string& out_dir) {
  return "[data]\n"
         "kind = colored\n"
         "classes = 10\n"
         "rho = 0.02\n"
         "image_size = 8\n"
         "n_train = 300\n"
         "n_test = 200\n"
         "[train]\n"
         "t_biased = 60\n"
         "t_debiased = 60\n"
         "batch = 16\n"
         "lr = 0.05\n"
         "hidden_width = 16\n"
         "log_every = 50\n"
         "[run]\n"
         "seeds = 0\n"
         "out_dir = " +
         out_dir + "\n";
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("canonical text reparses to the same canonical text") {
  ExperimentConfig cfg;
  cfg.rhos = {0.01, 0.005};
  cfg.seeds = {0, 1, 2};
  cfg.q_grid = {0.5, 0.7};
  cfg.bounds.c_grid = {1.0, 9.2};
  const std::string text = canonical_config_text(cfg);
  const ExperimentConfig back = parse_config_text(text);
  CHECK(canonical_config_text(back) == text);
  CHECK(back.rhos == cfg.rhos);
  CHECK(back.seeds == cfg.seeds);
  CHECK(back.q_grid == cfg.q_grid);
  CHECK(back.bounds.c_grid == cfg.bounds.c_grid);
}

TEST_CASE("parser accepts comments, blanks, and spacing") {
  const auto cfg = parse_config_text(
      "# leading comment\n"
      "\n"
      "[data]   ; trailing section comment\n"
      "  rho = 0.25   # inline\n"
      "classes=4\n"
      "[train]\n"
      "lr = 0.125\n");
  CHECK(cfg.rhos == std::vector<double>{0.25});
  CHECK(cfg.gen.num_classes == 4);
  CHECK(cfg.schedule.learning_rate == 0.125);
}

TEST_CASE("parser rejects malformed input") {
  CHECK_THROWS_AS(parse_config_text("rho = 0.1\n"), ParamError);           // key before section
  CHECK_THROWS_AS(parse_config_text("[data]\nwat = 1\n"), ParamError);     // unknown key
  CHECK_THROWS_AS(parse_config_text("[wat]\nrho = 1\n"), ParamError);      // unknown section
  CHECK_THROWS_AS(parse_config_text("[data]\nrho = zebra\n"), ParamError); // bad number
  CHECK_THROWS_AS(parse_config_text("[data]\nrho = 0.1x\n"), ParamError);  // trailing junk
  CHECK_THROWS_AS(parse_config_text("[train]\naugment = maybe\n"), ParamError);
  CHECK_THROWS_AS(parse_config_text("[data\nrho = 0.1\n"), ParamError);    // unterminated header
  CHECK_THROWS_AS(parse_config_text("[data]\n= 5\n"), ParamError);         // empty key
}

TEST_CASE("boolean spellings all parse") {
  for (const char* v : {"1", "true", "yes", "on"})
    CHECK(parse_config_text(std::string("[train]\naugment = ") + v + "\n").schedule.augment);
  for (const char* v : {"0", "false", "no", "off"})
    CHECK_FALSE(
        parse_config_text(std::string("[train]\naugment = ") + v + "\n").schedule.augment);
}

TEST_CASE("lists parse into grids") {
  const auto cfg = parse_config_text(
      "[data]\nrho = 0.01, 0.005\n"
      "[run]\nseeds = 0,1,2\n"
      "[sweep]\nq_list = 0.3,0.7,1.0\ntau_list = 0.5,1,2\n");
  CHECK(cfg.rhos == std::vector<double>{0.01, 0.005});
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1, 2});
  CHECK(cfg.q_grid.size() == 3);
  CHECK(cfg.tau_grid == std::vector<double>{0.5, 1.0, 2.0});
}

TEST_CASE("validation guards the experiment ranges") {
  ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  cfg.mode = "sgd";
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = ExperimentConfig{};
  cfg.rhos = {1.5};
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = ExperimentConfig{};
  cfg.seeds.clear();
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = ExperimentConfig{};
  cfg.histogram_bins = 1;
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = ExperimentConfig{};
  cfg.q_grid = {0.0};
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = ExperimentConfig{};
  cfg.gen.kind = DatasetKind::ColorizedIdx;  // needs idx paths
  CHECK_THROWS_AS(cfg.validate(), ParamError);
  cfg = ExperimentConfig{};
  cfg.bounds.delta_grid = {0.0};
  CHECK_THROWS_AS(cfg.validate(), ParamError);
}

TEST_CASE("run ids are stable, hex, and config-sensitive") {
  ExperimentConfig a;
  const std::string id = compute_run_id(a);
  CHECK(id.size() == 16);
  CHECK(id.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(compute_run_id(a) == id);
  ExperimentConfig b;
  b.schedule.learning_rate *= 2.0;
  CHECK(compute_run_id(b) != id);
  ExperimentConfig c;
  c.seeds = {5};
  CHECK(compute_run_id(c) != id);
}

TEST_CASE("missing config file is an io error") {
  CHECK_THROWS_AS(load_config_file("/nonexistent/x.ini"), IoError);
}

TEST_CASE("cli maps bad invocations to exit 2") {
  CHECK(run_cli("") == 2);                 // no subcommand
  CHECK(run_cli("frobnicate") == 2);       // unknown subcommand
  CHECK(run_cli("run --wat 3") == 2);      // unknown flag
  CHECK(run_cli("--help") == 0);
  CHECK(run_cli("run --config /nonexistent/cfg.ini") == 2);
  CHECK(run_cli("run --mode bogus") == 2);       // not in {dpr,erm,reweighted}
  CHECK(run_cli("verify-bounds") == 2);          // --checkpoint is required
  const std::string dir = t::tmp_dir("cfg_badcfg");
  std::ofstream(dir + "/bad.ini") << "[data]\nrho = 7\n";  // out of range
  CHECK(run_cli("run --config " + dir + "/bad.ini") == 2);
}

TEST_CASE("cli generate, run, diagnose, and rerun determinism") {
  const std::string dir = t::tmp_dir("cfg_cli");
  const std::string cfg_path = dir + "/exp.ini";
  std::ofstream(cfg_path) << tiny_config_text(dir + "/out");

  // generate
  CHECK(run_cli("generate --config " + cfg_path + " --out " + dir + "/d.dprd") == 0);
  const auto d = load_dataset(dir + "/d.dprd");
  CHECK(d.size() == 300);
  CHECK(d.rho == 0.02);

  // run
  CHECK(run_cli("run --config " + cfg_path) == 0);
  const ExperimentConfig cfg = load_config_file(cfg_path);
  const std::string run_id = compute_run_id(cfg);
  const std::string metrics = dir + "/out/metrics.csv";
  const std::string first = read_file(metrics);
  CHECK(first.rfind("run_id,phase,rho,seed,group,n,avg_loss,accuracy,unbiased_acc,"
                    "worst_group_acc,loss_gap",
                    0) == 0);
  CHECK(first.find("debiased") != std::string::npos);

  // the checkpoint written by run feeds diagnose
  const std::string ckpt = dir + "/out/" + run_id + "_rho" + fmt_double(0.02) +
                           "_seed0_biased.dprm";
  CHECK(run_cli("diagnose --config " + cfg_path + " --checkpoint " + ckpt) == 0);
  CHECK(run_cli("diagnose --config " + cfg_path + " --checkpoint /nonexistent.dprm") == 1);

  // identical rerun reproduces the metrics file byte-for-byte
  CHECK(run_cli("run --config " + cfg_path) == 0);
  CHECK(read_file(metrics) == first);

  // a flag override lands in the metrics (erm has no debiased phase)
  const std::string dir2 = dir + "/out2";
  CHECK(run_cli("run --config " + cfg_path + " --mode erm --out " + dir2) == 0);
  const std::string m2 = read_file(dir2 + "/metrics.csv");
  CHECK(m2.find("debiased") == std::string::npos);
  CHECK(m2.find("erm") != std::string::npos);
}

}  // TEST_SUITE
