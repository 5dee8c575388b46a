#include <doctest.h>

#include <cmath>
#include <cstddef>
#include <vector>

#include "dpr/engine.hpp"
#include "dpr/errors.hpp"
#include "dpr/group_eval.hpp"
#include "helpers.hpp"

using namespace dpr;

namespace {

TrainSchedule quick_schedule() {
  TrainSchedule s;
  s.t_biased = 120;
  s.t_debiased = 120;
  s.batch_size = 32;
  s.learning_rate = 0.05;
  s.hidden_width = 24;
  s.hidden_layers = 1;
  s.augment = false;
  s.augment_biased = false;
  s.log_every = 50;
  return s;
}

}  // namespace

TEST_SUITE("engine") {

TEST_CASE("schedule validation rejects out-of-range values") {
  TrainSchedule s = quick_schedule();
  CHECK_NOTHROW(s.validate());
  s.batch_size = 0;
  CHECK_THROWS_AS(s.validate(), ParamError);
  s = quick_schedule();
  s.learning_rate = 0.0;
  CHECK_THROWS_AS(s.validate(), ParamError);
  s = quick_schedule();
  s.q = 0.0;
  CHECK_THROWS_AS(s.validate(), ParamError);
  s = quick_schedule();
  s.q = 1.2;
  CHECK_THROWS_AS(s.validate(), ParamError);
  s = quick_schedule();
  s.tau = 0.0;
  CHECK_THROWS_AS(s.validate(), ParamError);
  s = quick_schedule();
  s.momentum = 1.0;
  CHECK_THROWS_AS(s.validate(), ParamError);
  s = quick_schedule();
  s.hidden_width = 0;
  CHECK_THROWS_AS(s.validate(), ParamError);
  s = quick_schedule();
  s.t_biased = 0;
  CHECK_NOTHROW(s.validate());  // zero steps is a legal no-op schedule
}

TEST_CASE("zero-step training returns the untouched initialization") {
  const auto d = generate_colored(t::quick_gen(0.1), 64, 41);
  TrainSchedule s = quick_schedule();
  s.t_biased = 0;
  const auto res = train_biased(d, s, 7);
  CHECK(res.log.entries.empty());

  Rng init = Rng::fork(7, stream::kModelInit);
  const auto expect = make_mlp(d.feature_dim(), std::vector<int>(1, s.hidden_width),
                               d.num_classes, init);
  CHECK(t::same_params(res.model, expect));
}

TEST_CASE("disagreement of the zero model is exactly 1 - 1/K") {
  const ClassifierModel m = t::constant_logit_model(std::vector<double>(10, 0.0), 4);
  const std::vector<double> x = {0.1, 0.2, 0.3, 0.4};
  for (int y = 0; y < 10; ++y)
    CHECK(std::abs(disagreement_prob(m, x, y, 1.0) - 0.9) < 1e-15);
}

TEST_CASE("disagreement matches the hand-evaluated softmax") {
  // logits (2,1,0), y=0, tau=1: 1 - e^2/(e^2+e+1)
  const ClassifierModel m = t::constant_logit_model({2.0, 1.0, 0.0}, 1);
  const std::vector<double> x = {0.0};
  const double e2 = std::exp(2.0), e1 = std::exp(1.0);
  const double want = 1.0 - e2 / (e2 + e1 + 1.0);
  CHECK(std::abs(disagreement_prob(m, x, 0, 1.0) - want) < 1e-12);
}

TEST_CASE("high temperature flattens disagreement toward 1 - 1/K") {
  const ClassifierModel m = t::constant_logit_model({3.0, -1.0, 0.5, 2.0}, 1);
  const std::vector<double> x = {0.7};
  for (int y = 0; y < 4; ++y)
    CHECK(std::abs(disagreement_prob(m, x, y, 1e6) - 0.75) < 1e-3);
}

TEST_CASE("marginal disagreement is the dataset mean") {
  // constant logits with softmax (0.8, 0.2); one example per class
  const ClassifierModel m = t::constant_logit_model({std::log(0.8), std::log(0.2)}, 1);
  const auto d = t::tiny_dataset(2, {t::make_example({0.0}, 0, 0, true),
                                     t::make_example({0.0}, 1, 1, true)});
  const auto dis = per_example_disagreements(m, d, 1.0);
  REQUIRE(dis.size() == 2);
  CHECK(std::abs(dis[0] - 0.2) < 1e-12);
  CHECK(std::abs(dis[1] - 0.8) < 1e-12);
  CHECK(std::abs(estimate_marginal_disagreement(m, d, 1.0) - 0.5) < 1e-12);
}

TEST_CASE("marginal matches a long-double streaming oracle") {
  const auto d = generate_colored(t::quick_gen(0.2), 257, 42);
  Rng rng(43);
  const auto model = make_mlp(d.feature_dim(), {8}, d.num_classes, rng);
  const auto dis = per_example_disagreements(model, d, 1.0);
  long double acc = 0.0L;
  for (double v : dis) acc += (long double)v;
  const double want = (double)(acc / (long double)dis.size());
  CHECK(std::abs(estimate_marginal_disagreement(model, d, 1.0) - want) < 1e-12);
}

TEST_CASE("uniform disagreements give a uniform sampling table") {
  const ClassifierModel m = t::constant_logit_model({0.4, -0.1}, 1);
  std::vector<BiasedExample> ex;
  for (int i = 0; i < 8; ++i) ex.push_back(t::make_example({0.0}, 0, 0, true));
  const auto d = t::tiny_dataset(2, std::move(ex));
  const auto table = compute_sampling_table(m, d, 1.0);
  for (double p : table.probs) CHECK(std::abs(p - 0.125) < 1e-15);
  CHECK(table.cdf.back() == 1.0);
}

TEST_CASE("sampling table is proportional to disagreement") {
  // softmax(ln .9, ln .1): y=0 gives dis 0.1, y=1 gives dis 0.9
  const ClassifierModel m = t::constant_logit_model({std::log(0.9), std::log(0.1)}, 1);
  const auto d = t::tiny_dataset(2, {t::make_example({0.0}, 0, 0, true),
                                     t::make_example({0.0}, 1, 1, true)});
  const auto table = compute_sampling_table(m, d, 1.0);
  CHECK(std::abs(table.probs[0] - 0.1) < 1e-12);
  CHECK(std::abs(table.probs[1] - 0.9) < 1e-12);
  CHECK(std::abs(table.marginal - 0.5) < 1e-12);
  double sum = 0.0;
  for (double p : table.probs) sum += p;
  CHECK(std::abs(sum - 1.0) <= 1e-9);
}

TEST_CASE("a perfectly confident biased model degenerates the table") {
  const ClassifierModel m = t::constant_logit_model({60.0, -60.0}, 1);
  const auto d = t::tiny_dataset(2, {t::make_example({0.0}, 0, 0, true),
                                     t::make_example({0.0}, 0, 0, true)});
  CHECK_THROWS_AS(compute_sampling_table(m, d, 1.0), DegenerateTableError);
}

TEST_CASE("huge temperature makes the table near uniform") {
  const auto d = generate_colored(t::quick_gen(0.2), 100, 44);
  Rng rng(45);
  const auto model = make_mlp(d.feature_dim(), {8}, d.num_classes, rng);
  const auto table = compute_sampling_table(model, d, 1e6);
  double sup = 0.0;
  for (double p : table.probs) sup = std::max(sup, std::abs(p - 0.01));
  CHECK(sup < 1e-3);
}

TEST_CASE("sampling follows the table") {
  const ClassifierModel m = t::constant_logit_model({std::log(0.9), std::log(0.1)}, 1);
  const auto d = t::tiny_dataset(2, {t::make_example({0.0}, 0, 0, true),
                                     t::make_example({0.0}, 1, 1, true)});
  const auto table = compute_sampling_table(m, d, 1.0);
  Rng rng(46);
  const auto idx = sample_minibatch(table, d, 100000, rng);
  std::size_t ones = 0;
  for (auto i : idx) {
    REQUIRE(i < 2);
    ones += (i == 1);
  }
  CHECK(std::abs((double)ones / 100000.0 - 0.9) < 0.005);
}

TEST_CASE("a point-mass table always returns its atom") {
  // one undecided example among saturated ones
  const ClassifierModel m = t::margin_model();
  std::vector<BiasedExample> ex;
  for (int i = 0; i < 10; ++i)
    ex.push_back(t::make_example({40.0}, 0, 0, true));  // dis ~ 0
  ex[7].features[0] = 0.0;                              // dis = 0.5
  const auto d = t::tiny_dataset(2, std::move(ex));
  const auto table = compute_sampling_table(m, d, 1.0);
  Rng rng(47);
  for (auto i : sample_minibatch(table, d, 500, rng)) CHECK(i == 7);
}

TEST_CASE("uniform table sampling is empirically uniform") {
  const ClassifierModel m = t::constant_logit_model({0.0, 0.0}, 1);
  std::vector<BiasedExample> ex;
  for (int i = 0; i < 10; ++i) ex.push_back(t::make_example({0.0}, 0, 0, true));
  const auto d = t::tiny_dataset(2, std::move(ex));
  const auto table = compute_sampling_table(m, d, 1.0);
  Rng rng(48);
  std::vector<int> count(10, 0);
  const int n = 100000;
  for (auto i : sample_minibatch(table, d, n, rng)) ++count[i];
  for (int c : count) CHECK(std::abs(c - 10000) < 5 * 95);  // 5 binomial sd
}

TEST_CASE("table and dataset sizes must agree when sampling") {
  const ClassifierModel m = t::constant_logit_model({0.0, 0.0}, 1);
  const auto d2 = t::tiny_dataset(2, {t::make_example({0.0}, 0, 0, true),
                                      t::make_example({0.0}, 1, 1, true)});
  const auto d3 = t::tiny_dataset(2, {t::make_example({0.0}, 0, 0, true),
                                      t::make_example({0.0}, 1, 1, true),
                                      t::make_example({0.0}, 0, 0, true)});
  const auto table = compute_sampling_table(m, d2, 1.0);
  Rng rng(49);
  CHECK_THROWS_AS(sample_minibatch(table, d3, 4, rng), ParamError);
}

TEST_CASE("reweighting weights sum to n") {
  const auto d = generate_colored(t::quick_gen(0.3), 150, 50);
  Rng rng(51);
  const auto model = make_mlp(d.feature_dim(), {8}, d.num_classes, rng);
  const auto table = compute_sampling_table(model, d, 1.0);
  double sum = 0.0;
  for (double p : table.probs) sum += (double)d.size() * p;
  CHECK(std::abs(sum - (double)d.size()) < 1e-6);
}

TEST_CASE("zero debiased steps with warm start returns the biased parameters") {
  const auto d = generate_colored(t::quick_gen(0.1), 96, 52);
  TrainSchedule s = quick_schedule();
  s.t_biased = 40;
  s.t_debiased = 0;
  const auto biased = train_biased(d, s, 3);
  const auto table = compute_sampling_table(biased.model, d, s.tau);
  const auto deb = train_debiased(d, table, biased.model, s, 3);
  CHECK(t::same_params(deb.model, biased.model));

  TrainSchedule cold = s;
  cold.init_from_biased = false;
  const auto fresh = train_debiased(d, table, biased.model, cold, 3);
  CHECK_FALSE(t::same_params(fresh.model, biased.model));
}

TEST_CASE("training is deterministic in the seed") {
  const auto d = generate_colored(t::quick_gen(0.1), 128, 53);
  TrainSchedule s = quick_schedule();
  const auto a = train_erm(d, s, 11);
  const auto b = train_erm(d, s, 11);
  CHECK(t::same_params(a.model, b.model));
  const auto c = train_erm(d, s, 12);
  CHECK_FALSE(t::same_params(a.model, c.model));
  // budget parity: the ERM baseline runs t_biased + t_debiased steps
  CHECK(a.log.entries.back().step == s.t_biased + s.t_debiased - 1);
}

TEST_CASE("the training log covers the first and last step") {
  const auto d = generate_colored(t::quick_gen(0.1), 96, 54);
  TrainSchedule s = quick_schedule();
  s.t_biased = 75;
  const auto res = train_biased(d, s, 5);
  REQUIRE_FALSE(res.log.entries.empty());
  CHECK(res.log.entries.front().step == 0);
  CHECK(res.log.entries.back().step == 74);
  for (const auto& e : res.log.entries) {
    CHECK(e.phase == "biased");
    CHECK(std::isfinite(e.loss));
    CHECK(e.lr > 0.0);
  }
}

TEST_CASE("an exploding learning rate raises a training error") {
  const auto d = generate_colored(t::quick_gen(0.1), 64, 55);
  TrainSchedule s = quick_schedule();
  s.learning_rate = 1e18;
  s.t_biased = 60;  // parameters grow ~1e15x per step and must overflow
  s.use_gce = false;
  CHECK_THROWS_AS(train_biased(d, s, 1), TrainingError);
}

TEST_CASE("empty dataset is rejected") {
  TrainSchedule s = quick_schedule();
  CHECK_THROWS_AS(train_erm(BiasedDataset{}, s, 1), ParamError);
}

TEST_CASE("the biased model leans on the bias attribute") {
  GenConfig g = t::quick_gen(0.01, 10);
  const auto d = generate_colored(g, 2000, 56);
  TrainSchedule s = quick_schedule();
  s.t_biased = 300;
  s.batch_size = 64;
  s.hidden_width = 32;
  const auto biased = train_biased(d, s, 0);
  const auto gm = group_losses(biased.model, d, LossKind::CE);
  CHECK(gm.aligned.accuracy > gm.conflicting.accuracy);
  CHECK(gm.conflicting.avg_loss > gm.aligned.avg_loss);
}

TEST_CASE("plain training memorizes an unbiased training set") {
  GenConfig g = t::quick_gen(0.9, 8);
  g.num_classes = 4;
  const auto d = generate_colored(g, 600, 57);
  TrainSchedule s = quick_schedule();
  s.t_biased = 400;
  s.t_debiased = 400;
  s.batch_size = 64;
  s.hidden_width = 48;
  s.learning_rate = 0.08;
  const auto res = train_erm(d, s, 1);
  const auto gm = group_losses(res.model, d, LossKind::CE);
  CHECK(gm.accuracy >= 0.95);
}

TEST_CASE("oracle weights turn the average objective into the conflicting-group mean") {
  const auto d = t::staged_loss_dataset();
  const ClassifierModel m = t::margin_model();
  const auto w = oracle_conflict_weights(d);
  REQUIRE(w.size() == 4);
  CHECK(w[0] == 0.0);
  CHECK(w[1] == 0.0);
  const double obj = weighted_group_objective(m, d, w);
  const auto gm = group_losses(m, d, LossKind::CE);
  CHECK(std::abs(obj - gm.conflicting.avg_loss) < 1e-12);
  CHECK(std::abs(obj - 0.8) < 1e-12);
  // staged losses put the conflicting group on top, so this equals max_b
  CHECK(std::abs(obj - gm.max_group_loss) < 1e-12);
}

TEST_CASE("uniform weights recover the plain average loss") {
  const auto d = t::staged_loss_dataset();
  const ClassifierModel m = t::margin_model();
  const std::vector<double> w(4, 0.25);
  const auto gm = group_losses(m, d, LossKind::CE);
  CHECK(std::abs(weighted_group_objective(m, d, w) - gm.avg_loss) < 1e-12);
}

TEST_CASE("all-conflicting data makes the oracle objective the plain average") {
  const ClassifierModel m = t::margin_model();
  const auto d = t::tiny_dataset(
      2, {t::make_example({t::margin_feature_for_loss(0.4)}, 0, 1, false),
          t::make_example({t::margin_feature_for_loss(1.2)}, 0, 1, false)});
  const auto w = oracle_conflict_weights(d);
  const auto gm = group_losses(m, d, LossKind::CE);
  CHECK(std::abs(weighted_group_objective(m, d, w) - gm.avg_loss) < 1e-12);
}

TEST_CASE("weighted objective checks its weight vector") {
  const auto d = t::staged_loss_dataset();
  const ClassifierModel m = t::margin_model();
  const std::vector<double> w(3, 0.25);
  CHECK_THROWS_AS(weighted_group_objective(m, d, w), ShapeError);
  const auto all_aligned = t::tiny_dataset(2, {t::make_example({0.0}, 0, 0, true)});
  CHECK_THROWS_AS(oracle_conflict_weights(all_aligned), ParamError);
}

}  // TEST_SUITE
