#include "semsmooth/losses.hpp"

#include <cmath>

#include "semsmooth/errors.hpp"
#include "semsmooth/vocab.hpp"

namespace semsmooth {

namespace {

void check_inputs(const TargetDistribution& q, const Vector& logits) {
  if (q.vocab_size != static_cast<int>(logits.size())) {
    throw ConfigError("target distribution size " + std::to_string(q.vocab_size) +
                      " does not match logits size " + std::to_string(logits.size()));
  }
  if (!logits.allFinite()) {
    throw NumericError("non-finite logits");
  }
}

/// loss = logsumexp(z) - sum_m q[m] z[m]; gradient = softmax(z) - q.
LossResult stable_soft_loss(const TargetDistribution& q, const Vector& logits) {
  const double max_logit = logits.maxCoeff();
  const Vector shifted_exp = (logits.array() - max_logit).exp();
  const double lse = max_logit + std::log(shifted_exp.sum());

  double expected_logit = q.correct_probability * logits[q.correct_index];
  for (const auto& [index, p] : q.support) {
    expected_logit += p * logits[index];
  }

  LossResult result;
  result.loss = lse - expected_logit;
  result.gradient = shifted_exp / shifted_exp.sum();
  result.gradient[q.correct_index] -= q.correct_probability;
  for (const auto& [index, p] : q.support) {
    result.gradient[index] -= p;
  }
  return result;
}

}  // namespace

Vector softmax(const Vector& logits) {
  if (!logits.allFinite()) {
    throw NumericError("non-finite logits");
  }
  const Vector shifted_exp = (logits.array() - logits.maxCoeff()).exp();
  return shifted_exp / shifted_exp.sum();
}

double entropy(const TargetDistribution& q) {
  auto term = [](double p) { return p > 0.0 ? -p * std::log(p) : 0.0; };
  double h = term(q.correct_probability);
  for (const auto& [index, p] : q.support) {
    h += term(p);
  }
  return h;
}

LossResult cross_entropy_soft(const TargetDistribution& q, const Vector& logits) {
  check_inputs(q, logits);
  return stable_soft_loss(q, logits);
}

LossResult kl_divergence_loss(const TargetDistribution& q, const Vector& logits) {
  check_inputs(q, logits);
  LossResult result = stable_soft_loss(q, logits);
  result.loss -= entropy(q);
  return result;
}

BatchLossResult batch_loss(const TargetTable& table, const std::vector<int>& target_ids,
                           const Matrix& logits, LossKind kind) {
  if (static_cast<Index>(target_ids.size()) != logits.rows()) {
    throw ConfigError("one logits row per target position required");
  }
  BatchLossResult result;
  result.gradients = Matrix::Zero(logits.rows(), logits.cols());

  double total = 0.0;
  int counted = 0;
  for (Index i = 0; i < logits.rows(); ++i) {
    const int target = target_ids[static_cast<std::size_t>(i)];
    if (target == kPadIndex) {
      continue;
    }
    const TargetDistribution& q = table.rows.at(target);
    const Vector row = logits.row(i).transpose();
    const LossResult token = kind == LossKind::cross_entropy
                                 ? cross_entropy_soft(q, row)
                                 : kl_divergence_loss(q, row);
    total += token.loss;
    result.gradients.row(i) = token.gradient.transpose();
    ++counted;
  }
  if (counted == 0) {
    throw ConfigError("batch contains only pad positions");
  }
  result.mean_loss = total / counted;
  result.gradients /= static_cast<double>(counted);
  return result;
}

}  // namespace semsmooth
