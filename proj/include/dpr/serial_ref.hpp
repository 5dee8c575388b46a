#pragma once

#include <span>
#include <vector>

#include "dpr/nn.hpp"

namespace dpr::ref {

// Plain single-threaded reference kernels. These mirror the arithmetic of the
// OpenMP paths exactly (same summation order per accumulator), so the
// parallel kernels are required to match them bitwise. Kept for tests and
// the kernel benchmark; not used by the training paths.

void forward_batch(const ClassifierModel& model, const Matrix& X, Matrix& logits,
                   ForwardWorkspace* ws = nullptr);

void backward_batch(const ClassifierModel& model, const ForwardWorkspace& ws, const Matrix& X,
                    const Matrix& dlogits, GradientBuffer& grads);

// Per-example cross-entropy losses, one forward pass per example.
std::vector<double> per_example_ce_losses(const ClassifierModel& model, const Matrix& X,
                                          std::span<const int> labels);

}  // namespace dpr::ref
