#pragma once

// Local differential privacy for client dataset sizes.
//
// Each participating client reports a randomized size r in [1, M-1]: with
// probability alpha the true size, otherwise a uniform draw from the same
// range.  The server de-biases the sum of reports into an estimate of the
// participating total.  alpha = (e^eps - 1) / (e^eps + M - 2) is the largest
// truth probability for which any two sizes produce report distributions
// within an e^eps likelihood ratio of each other.

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "fedstas/core.hpp"
#include "fedstas/rng.hpp"

namespace fedstas {

/// Truth probability that saturates the eps-LDP constraint for sizes in
/// [1, M-1].  Requires eps > 0 and M >= 2 (M == 2 forces alpha == 1: a single
/// possible size carries no information).
inline double alpha_for_epsilon(double epsilon, int size_cap) {
  if (!(epsilon > 0.0)) throw ContractError("alpha_for_epsilon: epsilon must be > 0");
  if (size_cap < 2) throw ContractError("alpha_for_epsilon: size cap must be >= 2");
  const double e = std::exp(epsilon);
  return (e - 1.0) / (e + static_cast<double>(size_cap) - 2.0);
}

/// Worst-case likelihood ratio of the report mechanism at truth probability
/// alpha.  +infinity when alpha == 1 (reports are deterministic).
inline double ldp_ratio(double alpha, int size_cap) {
  if (size_cap < 2) throw ContractError("ldp_ratio: size cap must be >= 2");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ContractError("ldp_ratio: alpha out of [0,1]");
  const double k = static_cast<double>(size_cap - 1);
  if (alpha >= 1.0) {
    if (size_cap == 2) return 1.0;  // only one possible size, nothing to tell apart
    return std::numeric_limits<double>::infinity();
  }
  // Max over report values of P(r | n = r) / P(r | n != r).
  const double truthful = alpha + (1.0 - alpha) / k;
  const double other = (1.0 - alpha) / k;
  return truthful / other;
}

struct PrivacyConfig {
  int size_cap = 0;     // M; true sizes and reports live in [1, M-1]
  double alpha = 0.0;   // truth probability
  double epsilon = -1.0;  // <= 0 means "not derived from a budget"

  void validate() const {
    if (size_cap < 2) throw ContractError("privacy: size cap must be >= 2");
    if (!(alpha > 0.0 && alpha <= 1.0))
      throw ContractError("privacy: alpha must be in (0, 1]");
    if (epsilon > 0.0) {
      const double expect = alpha_for_epsilon(epsilon, size_cap);
      if (std::abs(expect - alpha) > 1e-12)
        throw ContractError("privacy: alpha " + std::to_string(alpha) +
                            " inconsistent with epsilon " + std::to_string(epsilon));
    }
  }

  static PrivacyConfig from_epsilon(double epsilon, int size_cap) {
    PrivacyConfig cfg;
    cfg.size_cap = size_cap;
    cfg.epsilon = epsilon;
    cfg.alpha = alpha_for_epsilon(epsilon, size_cap);
    cfg.validate();
    return cfg;
  }
};

/// One randomized size report.  Sizes above the cap are clipped to M-1 before
/// the coin toss.  Draws the truth coin first; the uniform replacement value
/// is only drawn when the coin comes up false, so a run of truthful reports
/// consumes exactly one uniform each.
inline int privatize_size(int true_size, const PrivacyConfig& cfg, Rng& rng) {
  cfg.validate();
  if (true_size < 1)
    throw ContractError("privatize_size: true size " + std::to_string(true_size) +
                        " must be >= 1");
  const int clipped = std::min(true_size, cfg.size_cap - 1);
  const double x = rng.next_double();
  if (x < cfg.alpha) return clipped;
  const std::uint64_t span = static_cast<std::uint64_t>(cfg.size_cap - 1);
  return 1 + static_cast<int>(rng.next_below(span));
}

/// De-biased estimate of the participating clients' total size from the sum
/// of m reports: (R - (1 - alpha) * m * M / 2) / alpha.  Unbiased because a
/// non-truthful report has mean M/2 over [1, M-1].  Not clamped; callers that
/// need a positive total clamp for their own reasons.
inline double estimate_total(int num_reports, const PrivacyConfig& cfg, double report_sum) {
  cfg.validate();
  if (num_reports < 1) throw ContractError("estimate_total: no reports");
  const double m = static_cast<double>(num_reports);
  const double cap = static_cast<double>(cfg.size_cap);
  return (report_sum - (1.0 - cfg.alpha) * cap * m / 2.0) / cfg.alpha;
}

}  // namespace fedstas
