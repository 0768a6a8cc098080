#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace quipforge {

struct DpoExample {
  double logp_theta_w = 0.0;
  double logp_ref_w = 0.0;
  double logp_theta_l = 0.0;
  double logp_ref_l = 0.0;
  double beta = 0.1;

  // Throws Error(numeric) on a non-finite field or beta <= 0.
  void validate() const;
};

struct DpoGradient {
  double d_logp_theta_w;
  double d_logp_ref_w;
  double d_logp_theta_l;
  double d_logp_ref_l;
};

// beta * [(logp_theta_w - logp_ref_w) - (logp_theta_l - logp_ref_l)]
double margin(const DpoExample& ex);

// softplus(x) = log(1 + e^x), no overflow for large |x|.
double softplus(double x);
// 1 / (1 + e^{-x}) without overflow.
double sigmoid(double x);

// -log sigmoid(margin) = softplus(-margin).
double dpo_loss(const DpoExample& ex);

DpoGradient dpo_loss_grad(const DpoExample& ex);

// Fraction of examples with margin > 0; a zero margin counts as incorrect.
// Throws Error(empty_input) on an empty batch.
double reward_accuracy(std::span<const DpoExample> batch);

double mean_loss(std::span<const DpoExample> batch);

struct MarginHistogram {
  double lo = 0.0;
  double hi = 0.0;
  std::vector<uint64_t> counts;
};

// Equal-width bins over [min, max] of the margins; one bin when they coincide.
MarginHistogram margin_histogram(std::span<const double> margins, size_t bins = 20);

}  // namespace quipforge
