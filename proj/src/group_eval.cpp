#include "dpr/group_eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "dpr/csv.hpp"
#include "dpr/engine.hpp"

namespace dpr {

bool is_conflicting(const BiasedExample& ex) {
  for (std::uint8_t a : ex.aligned)
    if (!a) return true;
  return false;
}

namespace {

constexpr std::size_t kEvalChunk = 4096;

void gather_chunk(const BiasedDataset& data, std::size_t begin, std::size_t count, Matrix& X) {
  const std::size_t dim = data.feature_dim();
  if (X.rows != count || X.cols != dim) X = Matrix(count, dim);
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < static_cast<long long>(count); ++i) {
    const auto& f = data.examples[begin + static_cast<std::size_t>(i)].features;
    std::copy(f.begin(), f.end(), X.row(static_cast<std::size_t>(i)));
  }
}

int argmax_lowest(const double* v, std::size_t k) {
  int best = 0;
  for (std::size_t j = 1; j < k; ++j)
    if (v[j] > v[best]) best = static_cast<int>(j);
  return best;
}

}  // namespace

EvalArrays evaluate_examples(const ClassifierModel& model, const BiasedDataset& data,
                             LossKind kind, double q) {
  if (data.examples.empty()) throw ParamError("evaluate: empty dataset");
  const std::size_t n = data.size();
  EvalArrays out;
  out.loss.resize(n);
  out.pred.resize(n);

  Matrix X, logits;
  for (std::size_t begin = 0; begin < n; begin += kEvalChunk) {
    const std::size_t count = std::min(kEvalChunk, n - begin);
    gather_chunk(data, begin, count, X);
    forward_batch(model, X, logits);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(count); ++i) {
      const std::size_t e = static_cast<std::size_t>(i);
      const std::span<const double> z(logits.row(e), logits.cols);
      const int y = data.examples[begin + e].y;
      out.loss[begin + e] = kind == LossKind::CE ? ce_loss(z, y) : gce_loss(z, y, q);
      out.pred[begin + e] = argmax_lowest(logits.row(e), logits.cols);
    }
  }
  return out;
}

GroupMetrics group_losses(const ClassifierModel& model, const BiasedDataset& data, LossKind kind,
                          double loss_cap, double q) {
  if (!(loss_cap > 0.0)) throw ParamError("group_losses: loss cap must be positive");
  const EvalArrays ev = evaluate_examples(model, data, kind, q);

  double sum[2] = {0.0, 0.0};
  std::size_t cnt[2] = {0, 0}, correct[2] = {0, 0};
  for (std::size_t i = 0; i < data.size(); ++i) {
    const int g = is_conflicting(data.examples[i]) ? 1 : 0;
    sum[g] += std::min(ev.loss[i], loss_cap);
    cnt[g] += 1;
    correct[g] += ev.pred[i] == data.examples[i].y;
  }

  GroupMetrics m;
  m.aligned.n = cnt[0];
  m.conflicting.n = cnt[1];
  if (cnt[0]) {
    m.aligned.avg_loss = sum[0] / static_cast<double>(cnt[0]);
    m.aligned.accuracy = static_cast<double>(correct[0]) / static_cast<double>(cnt[0]);
  }
  if (cnt[1]) {
    m.conflicting.avg_loss = sum[1] / static_cast<double>(cnt[1]);
    m.conflicting.accuracy = static_cast<double>(correct[1]) / static_cast<double>(cnt[1]);
  }
  const double n = static_cast<double>(data.size());
  m.avg_loss = (sum[0] + sum[1]) / n;
  m.accuracy = static_cast<double>(correct[0] + correct[1]) / n;
  if (cnt[0] && cnt[1]) {
    m.max_group_loss = std::max(m.aligned.avg_loss, m.conflicting.avg_loss);
    m.loss_gap = std::abs(m.aligned.avg_loss - m.conflicting.avg_loss);
  } else {
    m.max_group_loss = cnt[0] ? m.aligned.avg_loss : m.conflicting.avg_loss;
    m.loss_gap = 0.0;
  }
  return m;
}

double unbiased_accuracy(const ClassifierModel& model, const BiasedDataset& test) {
  if (test.examples.empty()) throw ParamError("unbiased_accuracy: empty dataset");
  const EvalArrays ev = evaluate_examples(model, test, LossKind::CE);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test.size(); ++i) correct += ev.pred[i] == test.examples[i].y;
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

namespace {

// Cell key for worst-group accuracy: label plus mixed-radix bias vector.
std::uint64_t bias_cell_key(const BiasedExample& ex, int k) {
  std::uint64_t key = 0;
  for (int b : ex.bias_labels) key = key * static_cast<std::uint64_t>(k) + static_cast<std::uint64_t>(b);
  return key;
}

}  // namespace

double worst_group_accuracy(const ClassifierModel& model, const BiasedDataset& test) {
  if (test.examples.empty()) throw ParamError("worst_group_accuracy: empty dataset");
  const EvalArrays ev = evaluate_examples(model, test, LossKind::CE);
  std::map<std::pair<int, std::uint64_t>, std::pair<std::size_t, std::size_t>> cells;
  for (std::size_t i = 0; i < test.size(); ++i) {
    const auto& ex = test.examples[i];
    auto& [n, correct] = cells[{ex.y, bias_cell_key(ex, test.num_classes)}];
    n += 1;
    correct += ev.pred[i] == ex.y;
  }
  double worst = 1.0;
  for (const auto& [key, nc] : cells)
    worst = std::min(worst, static_cast<double>(nc.second) / static_cast<double>(nc.first));
  return worst;
}

DisagreementHistogram disagreement_histogram(const ClassifierModel& biased_model,
                                             const BiasedDataset& train, double tau,
                                             int num_bins) {
  if (num_bins < 2) throw ParamError("histogram: need at least 2 bins");
  const std::vector<double> dis = per_example_disagreements(biased_model, train, tau);

  DisagreementHistogram h;
  h.edges.resize(num_bins + 1);
  for (int i = 0; i <= num_bins; ++i) h.edges[i] = static_cast<double>(i) / num_bins;
  h.edges.back() = 1.0;
  h.aligned_count.assign(num_bins, 0);
  h.conflicting_count.assign(num_bins, 0);

  double sum[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < train.size(); ++i) {
    const int g = is_conflicting(train.examples[i]) ? 1 : 0;
    int bin = static_cast<int>(dis[i] * num_bins);
    bin = std::clamp(bin, 0, num_bins - 1);  // value 1.0 lands in the top bin
    (g ? h.conflicting_count : h.aligned_count)[bin] += 1;
    sum[g] += dis[i];
    (g ? h.conflicting_n : h.aligned_n) += 1;
  }
  if (h.aligned_n) h.aligned_mean = sum[0] / static_cast<double>(h.aligned_n);
  if (h.conflicting_n) h.conflicting_mean = sum[1] / static_cast<double>(h.conflicting_n);
  return h;
}

void write_histogram_csv(const DisagreementHistogram& h, const std::string& path) {
  std::string out = "bin_lo,bin_hi,aligned_count,conflicting_count\n";
  for (std::size_t i = 0; i + 1 < h.edges.size(); ++i) {
    out += fmt_double(h.edges[i]);
    out += ',';
    out += fmt_double(h.edges[i + 1]);
    out += ',';
    out += std::to_string(h.aligned_count[i]);
    out += ',';
    out += std::to_string(h.conflicting_count[i]);
    out += '\n';
  }
  write_text_file(path, out);
}

const char* assumption1_status_name(Assumption1Status s) {
  switch (s) {
    case Assumption1Status::Holds: return "holds";
    case Assumption1Status::Fails: return "fails";
    case Assumption1Status::Inconclusive: return "inconclusive";
  }
  return "?";
}

Assumption1Report check_assumption1(const ClassifierModel& model, const BiasedDataset& train) {
  const GroupMetrics m = group_losses(model, train, LossKind::CE);
  Assumption1Report r;
  r.aligned_loss = m.aligned.avg_loss;
  r.conflicting_loss = m.conflicting.avg_loss;
  if (m.aligned.n == 0 || m.conflicting.n == 0)
    r.status = Assumption1Status::Inconclusive;
  else
    r.status = r.aligned_loss < r.conflicting_loss ? Assumption1Status::Holds
                                                   : Assumption1Status::Fails;
  return r;
}

}  // namespace dpr
