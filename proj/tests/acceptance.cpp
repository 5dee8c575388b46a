// End-to-end checks for the debiased-training pipeline. Each check prints one
// line: "criterion N: PASS|FAIL - detail". Exit 0 iff all ten pass.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "dpr/bounds.hpp"
#include "dpr/config.hpp"
#include "dpr/data.hpp"
#include "dpr/engine.hpp"
#include "dpr/errors.hpp"
#include "dpr/group_eval.hpp"
#include "dpr/harness.hpp"
#include "dpr/nn.hpp"
#include "dpr/rng.hpp"

using namespace dpr;

namespace {

struct Result {
  bool ok = false;
  std::string detail;
};

double mean3(const double* v) { return (v[0] + v[1] + v[2]) / 3.0; }

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

double central_diff(std::vector<double> z, int y, std::size_t k, bool use_gce, double q) {
  const double h = 1e-4;
  z[k] += h;
  const double lp = use_gce ? gce_loss(z, y, q) : ce_loss(z, y);
  z[k] -= 2.0 * h;
  const double lm = use_gce ? gce_loss(z, y, q) : ce_loss(z, y);
  return (lp - lm) / (2.0 * h);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return "<missing " + path + ">";
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Shared experiment recipe. The same schedule trains every pipeline so the
// comparisons are budget-matched.
TrainSchedule recipe() {
  TrainSchedule s;
  // The debiased budget is deliberately tight: a cold start cannot rebuild
  // shape features from ~100 conflicting examples in 300 steps, so the value
  // of inheriting the biased model's representation is visible in the
  // ablation. Warm-started runs only need to re-aim an existing feature bank.
  s.t_biased = 1200;
  s.t_debiased = 300;
  s.batch_size = 64;
  s.learning_rate = 0.05;
  s.momentum = 0.9;
  s.weight_decay = 1e-3;
  s.q = 0.7;
  s.tau = 1.0;
  s.hidden_width = 64;
  s.hidden_layers = 1;
  s.augment = true;
  s.augment_biased = false;
  s.init_from_biased = true;
  s.use_gce = true;
  s.log_every = 400;
  return s;
}

double test_accuracy(const ClassifierModel& m, const GenConfig& g, std::uint64_t seed) {
  const auto test = make_unbiased_test(g, 10000, seed + 10007);
  return unbiased_accuracy(m, test);
}

}  // namespace

int main() {
  std::vector<Result> r(10);
  const std::string tmp = "/tmp/dpr_acceptance";
  std::filesystem::remove_all(tmp);
  std::filesystem::create_directories(tmp);

  // ---- criterion 4: analytic gradients against central differences ----
  {
    Rng rng(0xC4);
    double worst_rel = 0.0, worst_id = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const std::size_t K = 2 + rng.next_below(7);
      std::vector<double> z(K);
      for (double& v : z) v = rng.uniform(-4.0, 4.0);
      const int y = static_cast<int>(rng.next_below(K));
      std::vector<double> gc(K), gg(K);
      ce_loss_and_grad(z, y, gc);
      gce_loss_and_grad(z, y, 0.7, gg);
      const double py = softmax_with_temperature(z, 1.0)[y];
      const double scale = std::pow(std::min(1.0, std::max(1e-12, py)), 0.7);
      for (std::size_t k = 0; k < K; ++k) {
        const double fd_ce = central_diff(z, y, k, false, 0.7);
        const double fd_gce = central_diff(z, y, k, true, 0.7);
        worst_rel = std::max(worst_rel,
                             std::abs(fd_ce - gc[k]) / std::max(1.0, std::abs(gc[k])));
        worst_rel = std::max(worst_rel,
                             std::abs(fd_gce - gg[k]) / std::max(1.0, std::abs(gg[k])));
        worst_id = std::max(worst_id, std::abs(gg[k] - scale * gc[k]));
      }
    }
    r[3].ok = worst_rel <= 1e-4 && worst_id <= 1e-12;
    r[3].detail = fmt("100 draws: max fd rel err %.3g (<= 1e-4), max |gce - p_y^q ce| %.3g "
                      "(<= 1e-12)",
                      worst_rel, worst_id);
  }

  // ---- criterion 5: oracle weights recover the conflicting-group loss ----
  {
    Rng rng(0xC5);
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
      const int K = 2 + static_cast<int>(rng.next_below(4));
      const std::size_t n = 2 + rng.next_below(7);  // 2..8 examples
      BiasedDataset d;
      d.num_classes = K;
      d.num_bias_attrs = 1;
      for (std::size_t i = 0; i < n; ++i) {
        BiasedExample e;
        e.features = {rng.next_double(), rng.next_double(), rng.next_double()};
        e.y = static_cast<int>(rng.next_below(K));
        const bool conflict = i == 0 || rng.bernoulli(0.4);
        e.bias_labels = {conflict ? (e.y + 1 + (int)rng.next_below(K - 1)) % K : e.y};
        e.aligned = {static_cast<std::uint8_t>(conflict ? 0 : 1)};
        d.examples.push_back(std::move(e));
      }
      Rng mr = Rng::fork(0xC50 + trial, 1);
      const auto model = make_mlp(3, {4}, K, mr);
      const double obj = weighted_group_objective(model, d, oracle_conflict_weights(d));
      const auto gm = group_losses(model, d, LossKind::CE);
      worst = std::max(worst, std::abs(obj - gm.conflicting.avg_loss));
    }
    r[4].ok = worst <= 1e-12;
    r[4].detail = fmt("20 tiny datasets: max |weighted obj - conflicting mean| %.3g (<= 1e-12)",
                      worst);
  }

  // ---- criterion 6: sampling law (normalization and empirical KL) ----
  {
    GenConfig g;
    g.rho = 0.3;
    g.image_size = 8;
    const auto d = generate_colored(g, 100, 0xC6);
    Rng mr(0xC61);
    const auto model = make_mlp(d.feature_dim(), {8}, d.num_classes, mr);
    const auto table = compute_sampling_table(model, d, 1.0);
    double sum = 0.0;
    for (double p : table.probs) sum += p;

    Rng sr(0xC62);
    const std::size_t draws = 1000000;
    std::vector<std::size_t> count(d.size(), 0);
    for (std::size_t i : sample_minibatch(table, d, draws, sr)) ++count[i];
    double kl = 0.0;
    for (std::size_t i = 0; i < count.size(); ++i) {
      if (count[i] == 0) continue;
      const double emp = static_cast<double>(count[i]) / static_cast<double>(draws);
      kl += emp * std::log(emp / table.probs[i]);
    }
    r[5].ok = std::abs(sum - 1.0) <= 1e-9 && kl < 1e-4;
    r[5].detail = fmt("|sum p - 1| = %.3g (<= 1e-9), KL(emp||table) = %.3g over 1e6 draws "
                      "(< 1e-4)",
                      std::abs(sum - 1.0), kl);
  }

  // ---- shared heavy phase at rho = 1%: DPR vs ERM vs reweighted ----
  // 10 glyph classes on a 12x12x3 canvas. Color noise is set high enough that
  // color alone does not saturate the biased objective, so biased training
  // also picks up shape features -- the signal the warm start transfers.
  GenConfig gen_cfg;
  gen_cfg.color_sigma = 0.2;
  const TrainSchedule sched = recipe();
  double acc_dpr1[3], acc_erm1[3], acc_rew1[3], sep1[3];
  double biased_gap0 = 0.0;
  bool biased_holds0 = false;
  ClassifierModel dpr_model0, fresh_model;
  double fresh_gap_abs = 0.0;
  double c1_seconds = 0.0;

  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    GenConfig g = gen_cfg;
    g.rho = 0.01;
    const auto t0 = std::chrono::steady_clock::now();
    const auto train = generate_colored(g, 20000, seed);
    const auto fphi = train_biased(train, sched, seed);
    const auto table = compute_sampling_table(fphi.model, train, sched.tau);
    const auto dpr = train_debiased(train, table, fphi.model, sched, seed);
    const auto erm = train_erm(train, sched, seed);
    acc_dpr1[seed] = test_accuracy(dpr.model, g, seed);
    acc_erm1[seed] = test_accuracy(erm.model, g, seed);
    c1_seconds += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const auto rew = train_reweighted(train, table, fphi.model, sched, seed);
    acc_rew1[seed] = test_accuracy(rew.model, g, seed);

    // disagreement separation of the biased model on its training set
    const auto dis = per_example_disagreements(fphi.model, train, sched.tau);
    double sa = 0.0, sc = 0.0;
    std::size_t na = 0, nc = 0;
    for (std::size_t i = 0; i < train.size(); ++i) {
      if (is_conflicting(train.examples[i])) {
        sc += dis[i];
        ++nc;
      } else {
        sa += dis[i];
        ++na;
      }
    }
    sep1[seed] = sc / (double)nc - sa / (double)na;

    if (seed == 0) {
      const auto rep = check_assumption1(fphi.model, train);
      biased_gap0 = rep.gap();
      biased_holds0 = rep.holds();
      dpr_model0 = dpr.model;
      Rng fr = Rng::fork(0xF8E5, stream::kModelInit);
      fresh_model = make_mlp(train.feature_dim(), std::vector<int>(1, sched.hidden_width),
                             train.num_classes, fr);
      fresh_gap_abs = std::abs(check_assumption1(fresh_model, train).gap());
    }
  }

  r[0].ok = mean3(acc_dpr1) - mean3(acc_erm1) >= 0.15 && c1_seconds <= 600.0;
  r[0].detail = fmt("rho=1%%: dpr %.3f vs erm %.3f over seeds {0,1,2}, gap %.3f (>= 0.15), "
                    "%.0fs (<= 600s)",
                    mean3(acc_dpr1), mean3(acc_erm1), mean3(acc_dpr1) - mean3(acc_erm1),
                    c1_seconds);

  const double min_sep = std::min(sep1[0], std::min(sep1[1], sep1[2]));
  r[6].ok = min_sep > 0.2;
  r[6].detail = fmt("biased-model disagreement: conflicting - aligned = "
                    "{%.3f, %.3f, %.3f} on train (each > 0.2)",
                    sep1[0], sep1[1], sep1[2]);

  const double fresh_cap = 0.1 * std::log(10.0);
  r[7].ok = biased_holds0 && biased_gap0 > 0.0 && fresh_gap_abs < fresh_cap;
  r[7].detail = fmt("biased loss gap %.3f (> 0), fresh-init |gap| %.4f (< %.4f)", biased_gap0,
                    fresh_gap_abs, fresh_cap);

  // ---- shared heavy phase at rho = 0.5%: component and sampling ablations ----
  double acc_none[3], acc_gce_aug[3], acc_init[3], acc_init_gce[3], acc_full[3], acc_rew05[3];
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    GenConfig g = gen_cfg;
    g.rho = 0.005;
    const auto train = generate_colored(g, 20000, seed);

    TrainSchedule ce_sched = sched;
    ce_sched.use_gce = false;
    const auto biased_gce = train_biased(train, sched, seed);
    const auto biased_ce = train_biased(train, ce_sched, seed);
    const auto table_gce = compute_sampling_table(biased_gce.model, train, sched.tau);
    const auto table_ce = compute_sampling_table(biased_ce.model, train, sched.tau);

    auto variant = [&](bool init, bool use_gce_table, bool aug) {
      TrainSchedule v = sched;
      v.init_from_biased = init;
      v.augment = aug;
      const auto& table = use_gce_table ? table_gce : table_ce;
      const auto& warm = use_gce_table ? biased_gce.model : biased_ce.model;
      const auto res = train_debiased(train, table, warm, v, seed);
      return test_accuracy(res.model, g, seed);
    };
    acc_none[seed] = variant(false, false, false);
    acc_gce_aug[seed] = variant(false, true, true);
    acc_init[seed] = variant(true, false, false);
    acc_init_gce[seed] = variant(true, true, false);
    acc_full[seed] = variant(true, true, true);

    const auto rew = train_reweighted(train, table_gce, biased_gce.model, sched, seed);
    acc_rew05[seed] = test_accuracy(rew.model, g, seed);
  }

  {
    const double m_none = mean3(acc_none), m_ga = mean3(acc_gce_aug), m_init = mean3(acc_init);
    const double m_ig = mean3(acc_init_gce), m_full = mean3(acc_full);
    const bool init_margin = m_init - m_none >= 0.10;
    const bool full_top = m_full >= m_none && m_full >= m_ga && m_full >= m_init &&
                          m_full >= m_ig;
    r[1].ok = init_margin && full_top;
    r[1].detail = fmt("rho=0.5%%: none %.3f, gce+aug %.3f, init %.3f, init+gce %.3f, full %.3f; "
                      "init-none %.3f (>= 0.10), full >= all %s",
                      m_none, m_ga, m_init, m_ig, m_full, m_init - m_none,
                      full_top ? "yes" : "no");

    const double res1 = mean3(acc_dpr1), rew1 = mean3(acc_rew1);
    const double res05 = m_full, rew05 = mean3(acc_rew05);
    r[2].ok = res1 >= rew1 && res05 >= rew05;
    r[2].detail = fmt("resampling vs reweighting: %.3f vs %.3f at rho=1%%, %.3f vs %.3f at "
                      "rho=0.5%% (matched seeds)",
                      res1, rew1, res05, rew05);
  }

  // ---- criterion 9: finite-sample bound verification ----
  {
    const double C = 4.0 * std::log(10.0), delta = 0.05;
    const bool scalar_ok = std::abs(concentration_term1(1.0, 0.05, 100) - 0.5432) <= 1e-4 &&
                           std::abs(concentration_term2(1.0, 0.05, 1000) - 0.07740) <= 1e-4;

    GenConfig g_bal = gen_cfg;
    g_bal.rho = 0.5;
    GenConfig g_tr = gen_cfg;
    g_tr.rho = 0.01;

    double pop_a, pop_c, pop_avg;
    {
      const auto pop_bal = generate_colored(g_bal, 60000, 0xB0B1);
      const auto bal = group_losses(dpr_model0, pop_bal, LossKind::CE, C);
      pop_a = bal.aligned.avg_loss;
      pop_c = bal.conflicting.avg_loss;
    }
    {
      const auto pop_tr = generate_colored(g_tr, 60000, 0xB0B2);
      pop_avg = group_losses(dpr_model0, pop_tr, LossKind::CE, C).avg_loss;
    }

    int done = 0, holds1 = 0, holds2 = 0;
    for (std::uint64_t attempt = 0; done < 100 && attempt < 140; ++attempt) {
      try {
        const auto tset = generate_colored(g_tr, 2000, 0xBD000 + attempt);
        const auto gm = group_losses(dpr_model0, tset, LossKind::CE, C);
        const auto b1 = theorem1_from_losses(gm.aligned.avg_loss, gm.conflicting.avg_loss,
                                             gm.aligned.n, gm.conflicting.n, pop_a, pop_c, C,
                                             delta);
        const auto b2 = theorem2_from_losses(gm.aligned.avg_loss, gm.conflicting.avg_loss,
                                             gm.aligned.n, gm.conflicting.n, pop_avg, C, delta);
        holds1 += b1.holds ? 1 : 0;
        holds2 += b2.holds ? 1 : 0;
        ++done;
      } catch (const GenerationError&) {
        // a redraw outside the generator's own binomial guard; skip it
      }
    }

    Rng pr(0xB377);
    std::vector<double> pop(20000);
    for (double& v : pop) v = pr.bernoulli(0.5) ? C : 0.0;
    const auto hoeff = hoeffding_violation_rate(pop, 50, C, delta, 10000, 0xB378);

    r[8].ok = scalar_ok && done == 100 && holds1 >= 95 && holds2 >= 95 &&
              hoeff.violation_rate <= delta;
    r[8].detail = fmt("C=4lnK, delta=0.05: theorem-1 holds %d/100, theorem-2 holds %d/100 "
                      "(>= 95); hoeffding rate %.4f (<= 0.05); scalar checks %s",
                      holds1, holds2, hoeff.violation_rate, scalar_ok ? "ok" : "off");
  }

  // ---- criterion 10: byte-identical reruns ----
  {
    ExperimentConfig cfg;
    cfg.gen.image_size = 8;
    cfg.n_train = 300;
    cfg.n_test = 200;
    cfg.rhos = {0.02};
    cfg.seeds = {0, 1};
    cfg.schedule.t_biased = 60;
    cfg.schedule.t_debiased = 60;
    cfg.schedule.batch_size = 16;
    cfg.schedule.hidden_width = 16;
    cfg.schedule.log_every = 50;
    cfg.out_dir = tmp + "/rerun";
    const int rc1 = cmd_run(cfg);
    const std::string metrics1 = read_file(cfg.out_dir + "/metrics.csv");
    const std::string agg1 = read_file(cfg.out_dir + "/aggregate.csv");
    const int rc2 = cmd_run(cfg);
    const std::string metrics2 = read_file(cfg.out_dir + "/metrics.csv");
    const std::string agg2 = read_file(cfg.out_dir + "/aggregate.csv");
    r[9].ok = rc1 == 0 && rc2 == 0 && metrics1 == metrics2 && agg1 == agg2 &&
              metrics1.size() > 100;
    r[9].detail = fmt("two identical runs: metrics.csv %s (%zu bytes), aggregate.csv %s",
                      metrics1 == metrics2 ? "byte-identical" : "DIFFER", metrics1.size(),
                      agg1 == agg2 ? "byte-identical" : "DIFFER");
  }

  int failed = 0;
  for (int i = 0; i < 10; ++i) {
    std::printf("criterion %d: %s - %s\n", i + 1, r[i].ok ? "PASS" : "FAIL",
                r[i].detail.c_str());
    failed += r[i].ok ? 0 : 1;
  }
  if (failed) std::printf("%d of 10 criteria failed\n", failed);
  return failed ? 1 : 0;
}
