#pragma once

#include <vector>

#include "semsmooth/smoothing.hpp"
#include "semsmooth/types.hpp"

namespace semsmooth {

enum class LossKind { cross_entropy, kl_divergence };

/// Loss value in nats plus its gradient with respect to the logits.
struct LossResult {
  double loss = 0.0;
  Vector gradient;  // length k; entries sum to 0
};

/// Numerically stable softmax: exp(z - max) / sum.
Vector softmax(const Vector& logits);

/// Shannon entropy of the target distribution, in nats.
double entropy(const TargetDistribution& q);

/// -sum_m q[m] log softmax(z)[m], evaluated through log-sum-exp.
/// Gradient is softmax(z) - q.
LossResult cross_entropy_soft(const TargetDistribution& q, const Vector& logits);

/// sum_m q[m] (log q[m] - log softmax(z)[m]) with 0 log 0 = 0.
/// Equals cross_entropy_soft minus the (z-constant) entropy of q, so the
/// gradient is the same softmax(z) - q.
LossResult kl_divergence_loss(const TargetDistribution& q, const Vector& logits);

/// Mean per-token loss over the non-pad rows of a logits matrix. Row i is
/// scored against table.rows[target_ids[i]]; rows whose target is [pad]
/// contribute nothing, to loss or gradient.
struct BatchLossResult {
  double mean_loss = 0.0;
  Matrix gradients;  // same shape as logits; zero rows at pad positions
};

BatchLossResult batch_loss(const TargetTable& table, const std::vector<int>& target_ids,
                           const Matrix& logits, LossKind kind);

}  // namespace semsmooth
