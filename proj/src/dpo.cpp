#include "quipforge/dpo.hpp"

#include <algorithm>
#include <cmath>

#include "quipforge/error.hpp"

namespace quipforge {

void DpoExample::validate() const {
  for (double v : {logp_theta_w, logp_ref_w, logp_theta_l, logp_ref_l, beta}) {
    if (!std::isfinite(v)) throw Error(ErrorCode::numeric, "non-finite DPO input");
  }
  if (!(beta > 0.0)) throw Error(ErrorCode::numeric, "beta must be > 0");
}

double margin(const DpoExample& ex) {
  ex.validate();
  const double m = ex.beta * ((ex.logp_theta_w - ex.logp_ref_w) - (ex.logp_theta_l - ex.logp_ref_l));
  if (!std::isfinite(m)) throw Error(ErrorCode::numeric, "margin overflow");
  return m;
}

double softplus(double x) {
  if (x > 0.0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double dpo_loss(const DpoExample& ex) { return softplus(-margin(ex)); }

DpoGradient dpo_loss_grad(const DpoExample& ex) {
  // dL/dm = -sigmoid(-m); dm/d(theta_w) = beta, dm/d(ref_w) = -beta, and the
  // dispreferred side flips sign.
  const double s = ex.beta * sigmoid(-margin(ex));
  return {-s, s, s, -s};
}

double reward_accuracy(std::span<const DpoExample> batch) {
  if (batch.empty()) throw Error(ErrorCode::empty_input, "empty DPO batch");
  uint64_t correct = 0;
  for (const auto& ex : batch) correct += margin(ex) > 0.0 ? 1 : 0;
  return static_cast<double>(correct) / static_cast<double>(batch.size());
}

double mean_loss(std::span<const DpoExample> batch) {
  if (batch.empty()) throw Error(ErrorCode::empty_input, "empty DPO batch");
  double sum = 0.0;
  for (const auto& ex : batch) sum += dpo_loss(ex);
  return sum / static_cast<double>(batch.size());
}

MarginHistogram margin_histogram(std::span<const double> margins, size_t bins) {
  MarginHistogram h;
  if (margins.empty()) return h;
  const auto [lo, hi] = std::minmax_element(margins.begin(), margins.end());
  h.lo = *lo;
  h.hi = *hi;
  if (h.lo == h.hi || bins <= 1) {
    h.counts.assign(1, margins.size());
    return h;
  }
  h.counts.assign(bins, 0);
  const double width = (h.hi - h.lo) / static_cast<double>(bins);
  for (double m : margins) {
    auto b = static_cast<size_t>((m - h.lo) / width);
    h.counts[std::min(b, bins - 1)] += 1;
  }
  return h;
}

}  // namespace quipforge
