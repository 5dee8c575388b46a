#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dpr/data.hpp"
#include "dpr/nn.hpp"

namespace dpr {

struct BoundReport {
  int theorem = 1;
  double lhs = 0.0;
  double rhs = 0.0;
  bool holds = false;
  double max_group_train_loss = 0.0;
  double concentration_term = 0.0;
  double loss_cap = 0.0;  // C
  double delta = 0.0;
  std::size_t n = 0;            // train size
  std::size_t n_aligned = 0;    // train group sizes
  std::size_t n_conflicting = 0;
};

// Concentration terms, |B| = 2 groups throughout.
double concentration_term1(double C, double delta, std::size_t min_group_n);  // C*sqrt(8 ln(2/d)/n_b)
double concentration_term2(double C, double delta, std::size_t n);            // C*sqrt(2 ln(1/d)/n)
double hoeffding_radius(double C, double delta, std::size_t n_b);             // C*sqrt(2 ln(2/d)/n_b)

// Report assembly from precomputed clipped group losses; callers sweeping a
// (C, delta) grid evaluate the model once and reuse the per-example losses.
BoundReport theorem1_from_losses(double tr_aligned, double tr_conflicting, std::size_t n_aligned,
                                 std::size_t n_conflicting, double pop_aligned,
                                 double pop_conflicting, double C, double delta);
BoundReport theorem2_from_losses(double tr_aligned, double tr_conflicting, std::size_t n_aligned,
                                 std::size_t n_conflicting, double pop_avg, double C,
                                 double delta);

// Group-loss disparity bound: lhs = |population group-loss gap|,
// rhs = 2*max_b trainloss_b + concentration_term1. Losses clipped at C.
BoundReport theorem1_report(const ClassifierModel& model, const BiasedDataset& train,
                            const BiasedDataset& population, double C, double delta);

// Average-loss bound: lhs = population average clipped loss,
// rhs = max_b trainloss_b + concentration_term2.
BoundReport theorem2_report(const ClassifierModel& model, const BiasedDataset& train,
                            const BiasedDataset& population, double C, double delta);

struct MonteCarloBoundStats {
  std::size_t trials = 0;
  std::size_t violations = 0;
  double violation_rate = 0.0;
  double delta = 0.0;
};

// Subsamples n_b values with replacement per trial and counts trials whose
// sample mean strays from the population mean by more than hoeffding_radius.
MonteCarloBoundStats hoeffding_violation_rate(std::span<const double> loss_population,
                                              std::size_t n_b, double C, double delta,
                                              std::size_t trials, std::uint64_t seed);

// Executable lemma: max{x,y} = (x+y)/2 + |x-y|/2. Evaluated with error-free
// float transforms so the identity holds bitwise for every finite pair (naive
// double arithmetic rounds the halves and misses by an ulp on ~1/3 of random
// pairs); throws if the reconstructed value ever differs from max(x,y).
double max_identity_check(double x, double y);

// CSV: theorem,seed,C,delta,lhs,rhs,holds,max_group_loss,conc_term
void write_bounds_csv(std::span<const std::pair<std::uint64_t, BoundReport>> rows,
                      const std::string& path);

}  // namespace dpr
