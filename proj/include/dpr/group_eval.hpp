#pragma once

#include <limits>
#include <string>
#include <vector>

#include "dpr/data.hpp"
#include "dpr/nn.hpp"

namespace dpr {

enum class LossKind { CE, GCE };

// An example is bias-conflicting when any bias attribute is misaligned; for
// single-attribute data this reduces to !aligned[0].
bool is_conflicting(const BiasedExample& ex);

// Per-example evaluation pass shared by all metrics; loss is unclipped.
struct EvalArrays {
  std::vector<double> loss;
  std::vector<int> pred;  // argmax with lowest-index tie-breaking
};
EvalArrays evaluate_examples(const ClassifierModel& model, const BiasedDataset& data,
                             LossKind kind = LossKind::CE, double q = 0.7);

struct GroupStat {
  std::size_t n = 0;
  double avg_loss = 0.0;
  double accuracy = 0.0;
};

struct GroupMetrics {
  GroupStat aligned;
  GroupStat conflicting;
  double avg_loss = 0.0;        // over all examples
  double accuracy = 0.0;        // over all examples
  double max_group_loss = 0.0;  // over nonempty groups
  double loss_gap = 0.0;        // |aligned - conflicting| when both present, else 0
};

// Per-group mean loss/accuracy with optional pointwise loss cap min(l, C).
GroupMetrics group_losses(const ClassifierModel& model, const BiasedDataset& data, LossKind kind,
                          double loss_cap = std::numeric_limits<double>::infinity(),
                          double q = 0.7);

// Overall argmax accuracy on a dataset (intended for the rho=0.9 test set).
double unbiased_accuracy(const ClassifierModel& model, const BiasedDataset& test);

// Minimum accuracy over nonempty (label, bias-labels) cells.
double worst_group_accuracy(const ClassifierModel& model, const BiasedDataset& test);

struct DisagreementHistogram {
  std::vector<double> edges;  // num_bins+1 edges covering [0,1] exactly
  std::vector<std::size_t> aligned_count, conflicting_count;
  double aligned_mean = 0.0, conflicting_mean = 0.0;
  std::size_t aligned_n = 0, conflicting_n = 0;
};

DisagreementHistogram disagreement_histogram(const ClassifierModel& biased_model,
                                             const BiasedDataset& train, double tau, int num_bins);

// CSV: bin_lo,bin_hi,aligned_count,conflicting_count
void write_histogram_csv(const DisagreementHistogram& h, const std::string& path);

enum class Assumption1Status { Holds, Fails, Inconclusive };
const char* assumption1_status_name(Assumption1Status s);

struct Assumption1Report {
  Assumption1Status status = Assumption1Status::Inconclusive;
  double aligned_loss = 0.0;
  double conflicting_loss = 0.0;
  bool holds() const { return status == Assumption1Status::Holds; }
  double gap() const { return conflicting_loss - aligned_loss; }
};

// holds <=> CE loss on the aligned group is strictly below the conflicting
// group; an empty group yields Inconclusive rather than false.
Assumption1Report check_assumption1(const ClassifierModel& model, const BiasedDataset& train);

}  // namespace dpr
