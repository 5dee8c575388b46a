#include "dpr/bounds.hpp"

#include <algorithm>
#include <cmath>

#include "dpr/csv.hpp"
#include "dpr/group_eval.hpp"

namespace dpr {

namespace {

void check_cap_delta(double C, double delta) {
  if (!(C > 0.0)) throw ParamError("bounds: loss cap C must be positive");
  if (!(delta > 0.0 && delta < 1.0)) throw ParamError("bounds: delta must lie in (0,1)");
}

struct GroupLossPair {
  double aligned = 0.0, conflicting = 0.0;
  std::size_t n_aligned = 0, n_conflicting = 0;
};

// Clipped CE group losses; throws when either group is empty (the theorem is
// inconclusive without both groups).
GroupLossPair clipped_group_losses(const ClassifierModel& model, const BiasedDataset& data,
                                   double C, const char* role) {
  const GroupMetrics m = group_losses(model, data, LossKind::CE, C);
  if (m.aligned.n == 0 || m.conflicting.n == 0)
    throw ParamError(std::string("bounds: ") + role + " has an empty group; inconclusive");
  return {m.aligned.avg_loss, m.conflicting.avg_loss, m.aligned.n, m.conflicting.n};
}

}  // namespace

double concentration_term1(double C, double delta, std::size_t min_group_n) {
  check_cap_delta(C, delta);
  if (min_group_n == 0) throw ParamError("bounds: group size must be positive");
  return C * std::sqrt(8.0 * std::log(2.0 / delta) / static_cast<double>(min_group_n));
}

double concentration_term2(double C, double delta, std::size_t n) {
  check_cap_delta(C, delta);
  if (n == 0) throw ParamError("bounds: sample size must be positive");
  return C * std::sqrt(2.0 * std::log(1.0 / delta) / static_cast<double>(n));
}

double hoeffding_radius(double C, double delta, std::size_t n_b) {
  check_cap_delta(C, delta);
  if (n_b == 0) throw ParamError("bounds: group size must be positive");
  return C * std::sqrt(2.0 * std::log(2.0 / delta) / static_cast<double>(n_b));
}

BoundReport theorem1_from_losses(double tr_aligned, double tr_conflicting, std::size_t n_aligned,
                                 std::size_t n_conflicting, double pop_aligned,
                                 double pop_conflicting, double C, double delta) {
  check_cap_delta(C, delta);
  if (n_aligned == 0 || n_conflicting == 0)
    throw ParamError("bounds: train set has an empty group; inconclusive");
  BoundReport r;
  r.theorem = 1;
  r.loss_cap = C;
  r.delta = delta;
  r.n = n_aligned + n_conflicting;
  r.n_aligned = n_aligned;
  r.n_conflicting = n_conflicting;
  r.max_group_train_loss = std::max(tr_aligned, tr_conflicting);
  r.concentration_term = concentration_term1(C, delta, std::min(n_aligned, n_conflicting));
  r.lhs = std::abs(pop_aligned - pop_conflicting);
  r.rhs = 2.0 * r.max_group_train_loss + r.concentration_term;
  r.holds = r.lhs <= r.rhs;
  return r;
}

BoundReport theorem2_from_losses(double tr_aligned, double tr_conflicting, std::size_t n_aligned,
                                 std::size_t n_conflicting, double pop_avg, double C,
                                 double delta) {
  check_cap_delta(C, delta);
  if (n_aligned == 0 || n_conflicting == 0)
    throw ParamError("bounds: train set has an empty group; inconclusive");
  BoundReport r;
  r.theorem = 2;
  r.loss_cap = C;
  r.delta = delta;
  r.n = n_aligned + n_conflicting;
  r.n_aligned = n_aligned;
  r.n_conflicting = n_conflicting;
  r.max_group_train_loss = std::max(tr_aligned, tr_conflicting);
  r.concentration_term = concentration_term2(C, delta, r.n);
  r.lhs = pop_avg;
  r.rhs = r.max_group_train_loss + r.concentration_term;
  r.holds = r.lhs <= r.rhs;
  return r;
}

BoundReport theorem1_report(const ClassifierModel& model, const BiasedDataset& train,
                            const BiasedDataset& population, double C, double delta) {
  const GroupLossPair tr = clipped_group_losses(model, train, C, "train set");
  const GroupLossPair pop = clipped_group_losses(model, population, C, "population");
  return theorem1_from_losses(tr.aligned, tr.conflicting, tr.n_aligned, tr.n_conflicting,
                              pop.aligned, pop.conflicting, C, delta);
}

BoundReport theorem2_report(const ClassifierModel& model, const BiasedDataset& train,
                            const BiasedDataset& population, double C, double delta) {
  const GroupLossPair tr = clipped_group_losses(model, train, C, "train set");
  const GroupMetrics pop = group_losses(model, population, LossKind::CE, C);
  return theorem2_from_losses(tr.aligned, tr.conflicting, tr.n_aligned, tr.n_conflicting,
                              pop.avg_loss, C, delta);
}

MonteCarloBoundStats hoeffding_violation_rate(std::span<const double> loss_population,
                                              std::size_t n_b, double C, double delta,
                                              std::size_t trials, std::uint64_t seed) {
  check_cap_delta(C, delta);
  if (loss_population.empty()) throw ParamError("hoeffding: empty population");
  if (n_b == 0) throw ParamError("hoeffding: sample size must be positive");
  if (trials < 1000) throw ParamError("hoeffding: need at least 1000 trials");
  for (double v : loss_population)
    if (!(v >= 0.0 && v <= C)) throw ParamError("hoeffding: population value outside [0,C]");

  double pop_sum = 0.0;
  for (double v : loss_population) pop_sum += v;
  const double pop_mean = pop_sum / static_cast<double>(loss_population.size());
  const double radius = hoeffding_radius(C, delta, n_b);
  const std::size_t pn = loss_population.size();

  // Per-trial rng streams make the count independent of execution order.
  long long violations = 0;
#pragma omp parallel for schedule(static) reduction(+ : violations)
  for (long long t = 0; t < static_cast<long long>(trials); ++t) {
    Rng rng = Rng::fork(seed, stream::kTrial + static_cast<std::uint64_t>(t));
    double sum = 0.0;
    for (std::size_t i = 0; i < n_b; ++i) sum += loss_population[rng.next_below(pn)];
    const double mean = sum / static_cast<double>(n_b);
    violations += std::abs(mean - pop_mean) > radius;
  }

  MonteCarloBoundStats s;
  s.trials = trials;
  s.violations = static_cast<std::size_t>(violations);
  s.violation_rate = static_cast<double>(violations) / static_cast<double>(trials);
  s.delta = delta;
  return s;
}

namespace {

// Knuth two-sum: s + err == a + b exactly, for any finite a, b.
void two_sum(double a, double b, double& s, double& err) {
  s = a + b;
  const double bb = s - a;
  err = (a - (s - bb)) + (b - bb);
}

// True iff the exact sum of the terms is zero. Repeated two-sum sweeps
// renormalize the expansion; for these few terms a handful of passes reaches
// a fixed point whose components sum without rounding.
bool expansion_sums_to_zero(double* v, int n) {
  for (int pass = 0; pass < 2 * n; ++pass) {
    bool carried = false;
    for (int i = 1; i < n; ++i) {
      double s, err;
      two_sum(v[i - 1], v[i], s, err);
      v[i - 1] = err;
      v[i] = s;
      carried = carried || err != 0.0;
    }
    if (!carried) break;
  }
  for (int i = 0; i < n; ++i)
    if (v[i] != 0.0) return false;
  return true;
}

}  // namespace

double max_identity_check(double x, double y) {
  if (!std::isfinite(x) || !std::isfinite(y))
    throw ParamError("max identity: inputs must be finite");

  // Scale huge inputs so x+y and 2*max cannot overflow; powers of two are
  // exact and the returned max rescales exactly.
  double scale = 1.0;
  if (std::max(std::abs(x), std::abs(y)) > 0x1p1020) scale = 0x1p-2;
  const double xs = x * scale, ys = y * scale;

  // (x+y)/2 + |x-y|/2 == max  <=>  (x+y) + |x-y| - 2*max == 0; each term is
  // split into an error-free double pair, so the check is exact.
  double s, es, d, ed;
  two_sum(xs, ys, s, es);
  two_sum(xs, -ys, d, ed);
  if (d < 0.0 || (d == 0.0 && ed < 0.0)) {
    d = -d;
    ed = -ed;
  }
  const double m = std::max(xs, ys);
  double terms[5] = {s, es, d, ed, -2.0 * m};
  if (!expansion_sums_to_zero(terms, 5))
    throw ParamError("max identity violated");  // unreachable: the lemma
  return m / scale;
}

void write_bounds_csv(std::span<const std::pair<std::uint64_t, BoundReport>> rows,
                      const std::string& path) {
  std::string out = "theorem,seed,C,delta,lhs,rhs,holds,max_group_loss,conc_term\n";
  for (const auto& [seed, r] : rows) {
    out += std::to_string(r.theorem);
    out += ',';
    out += std::to_string(seed);
    out += ',';
    out += fmt_double(r.loss_cap);
    out += ',';
    out += fmt_double(r.delta);
    out += ',';
    out += fmt_double(r.lhs);
    out += ',';
    out += fmt_double(r.rhs);
    out += ',';
    out += r.holds ? "1" : "0";
    out += ',';
    out += fmt_double(r.max_group_train_loss);
    out += ',';
    out += fmt_double(r.concentration_term);
    out += '\n';
  }
  write_text_file(path, out);
}

}  // namespace dpr
