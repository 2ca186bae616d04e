#pragma once

// Client-level sampling: Neyman allocation of the per-round client budget
// across strata, norm-proportional importance sampling within each stratum
// (with replacement), and stratified model aggregation.
//
// Aggregation modes:
//   plain:        w = (1/N) sum_h N_h * (1/m_h) sum_draws w_k
//   ht-corrected: the within-stratum mean is importance-weighted,
//                 (1/m_h) sum_draws w_k / (N_h * p_k), which makes the
//                 estimator unbiased for the full aggregation under any
//                 strictly positive within-stratum sampling probabilities.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "fedstas/core.hpp"
#include "fedstas/model.hpp"
#include "fedstas/rng.hpp"

namespace fedstas {

enum class AggregationMode { plain, ht_corrected };

struct Allocation {
  std::vector<int> per_stratum;  // m_h
  int total = 0;                 // m
};

struct SelectedClient {
  int client_id = 0;
  int stratum_id = 0;
  // Horvitz-Thompson correction for this draw relative to the within-stratum
  // mean: 1 / (N_h * p_k).  Equals 1 under uniform within-stratum sampling.
  double inclusion_weight = 0.0;
};

struct RoundPlan {
  std::vector<SelectedClient> selected;    // m entries, draw order
  std::vector<std::vector<double>> probs;  // per-stratum sampling probabilities
  Allocation allocation;
  std::vector<std::size_t> stratum_sizes;  // N_h
  std::size_t total_clients = 0;           // N
};

/// Population standard deviation of the per-client gradient norms within each
/// stratum; zero for strata with at most one client.
inline std::vector<double> stratum_std(const std::vector<std::vector<double>>& norms) {
  std::vector<double> out(norms.size(), 0.0);
  for (std::size_t h = 0; h < norms.size(); ++h) {
    const auto& xs = norms[h];
    if (xs.size() < 2) continue;
    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double v : xs) ss += (v - mean) * (v - mean);
    out[h] = std::sqrt(ss / static_cast<double>(xs.size()));
  }
  return out;
}

/// Neyman allocation m_h = m * N_h S_h / sum N_h S_h, integerized by largest
/// remainder, then repaired: cap at N_h, floor nonempty strata at one, and
/// settle the difference against the real-valued quotas.  Falls back to
/// proportional allocation when every S_h is zero.
inline Allocation neyman_allocate(const std::vector<std::size_t>& stratum_sizes,
                                  const std::vector<double>& stratum_stds, int m) {
  const std::size_t h = stratum_sizes.size();
  if (stratum_stds.size() != h)
    throw ContractError("neyman_allocate: N_h and S_h length mismatch");
  if (m < 1) throw ContractError("neyman_allocate: m must be >= 1");

  std::size_t population = 0;
  std::size_t nonempty = 0;
  for (std::size_t i = 0; i < h; ++i) {
    population += stratum_sizes[i];
    if (stratum_sizes[i] > 0) ++nonempty;
  }
  if (static_cast<std::size_t>(m) > population)
    throw ContractError("neyman_allocate: m " + std::to_string(m) +
                        " exceeds population " + std::to_string(population));

  std::vector<double> weight(h, 0.0);
  double total_weight = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    weight[i] = static_cast<double>(stratum_sizes[i]) * stratum_stds[i];
    total_weight += weight[i];
  }
  if (total_weight <= 0.0) {
    for (std::size_t i = 0; i < h; ++i) weight[i] = static_cast<double>(stratum_sizes[i]);
    total_weight = static_cast<double>(population);
  }

  std::vector<double> quota(h, 0.0);
  for (std::size_t i = 0; i < h; ++i) quota[i] = m * weight[i] / total_weight;

  // Largest-remainder rounding.
  Allocation alloc;
  alloc.total = m;
  alloc.per_stratum.assign(h, 0);
  int assigned = 0;
  std::vector<std::pair<double, std::size_t>> rema;
  for (std::size_t i = 0; i < h; ++i) {
    alloc.per_stratum[i] = static_cast<int>(std::floor(quota[i]));
    assigned += alloc.per_stratum[i];
    rema.emplace_back(quota[i] - std::floor(quota[i]), i);
  }
  std::stable_sort(rema.begin(), rema.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < m && r < rema.size(); ++r) {
    ++alloc.per_stratum[rema[r].second];
    ++assigned;
  }

  // Repair pass 1: cap at stratum size.
  for (std::size_t i = 0; i < h; ++i)
    if (alloc.per_stratum[i] > static_cast<int>(stratum_sizes[i]))
      alloc.per_stratum[i] = static_cast<int>(stratum_sizes[i]);

  // Repair pass 2: every nonempty stratum samples at least one client, when
  // the budget allows one per nonempty stratum; otherwise the largest quotas
  // win (documented degenerate case, m < number of nonempty strata).
  if (static_cast<std::size_t>(m) >= nonempty) {
    for (std::size_t i = 0; i < h; ++i)
      if (stratum_sizes[i] > 0 && alloc.per_stratum[i] == 0) alloc.per_stratum[i] = 1;
  } else {
    std::vector<std::size_t> order(h);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return quota[a] > quota[b]; });
    std::fill(alloc.per_stratum.begin(), alloc.per_stratum.end(), 0);
    int left = m;
    for (std::size_t i : order) {
      if (left == 0) break;
      if (stratum_sizes[i] > 0) {
        alloc.per_stratum[i] = 1;
        --left;
      }
    }
  }

  // Repair pass 3: settle surplus/deficit against the quotas.
  auto current_total = [&] {
    return std::accumulate(alloc.per_stratum.begin(), alloc.per_stratum.end(), 0);
  };
  int total = current_total();
  while (total < m) {
    std::size_t best = h;
    double best_gap = -1e300;
    for (std::size_t i = 0; i < h; ++i) {
      if (alloc.per_stratum[i] >= static_cast<int>(stratum_sizes[i])) continue;
      const double gap = quota[i] - alloc.per_stratum[i];
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (best == h) throw ContractError("neyman_allocate: no capacity left");
    ++alloc.per_stratum[best];
    ++total;
  }
  while (total > m) {
    std::size_t best = h;
    double best_gap = -1e300;
    for (std::size_t i = 0; i < h; ++i) {
      if (alloc.per_stratum[i] <= 1) continue;  // keep the min-1 floor
      const double gap = alloc.per_stratum[i] - quota[i];
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (best == h) throw ContractError("neyman_allocate: cannot settle surplus");
    --alloc.per_stratum[best];
    --total;
  }
  return alloc;
}

/// p_k proportional to the client's compressed-gradient norm; uniform when
/// every norm in the stratum is zero.
inline std::vector<double> importance_probs(const std::vector<double>& norms) {
  if (norms.empty()) throw ContractError("importance_probs: empty stratum");
  double sum = 0.0;
  for (double v : norms) {
    if (v < 0.0) throw ContractError("importance_probs: negative norm");
    sum += v;
  }
  std::vector<double> p(norms.size());
  if (sum <= 0.0) {
    std::fill(p.begin(), p.end(), 1.0 / static_cast<double>(norms.size()));
  } else {
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = norms[i] / sum;
  }
  return p;
}

/// Draws m_h clients per stratum i.i.d. with replacement from the stratum's
/// probability vector.  Deterministic given the stream.
inline RoundPlan sample_clients(const std::vector<std::vector<int>>& stratum_members,
                                const Allocation& allocation,
                                const std::vector<std::vector<double>>& probs,
                                Rng rng) {
  const std::size_t h = stratum_members.size();
  if (allocation.per_stratum.size() != h || probs.size() != h)
    throw ContractError("sample_clients: stratum count mismatch");

  RoundPlan plan;
  plan.allocation = allocation;
  plan.probs = probs;
  plan.stratum_sizes.resize(h);
  for (std::size_t i = 0; i < h; ++i) {
    plan.stratum_sizes[i] = stratum_members[i].size();
    plan.total_clients += stratum_members[i].size();
    if (stratum_members[i].size() != probs[i].size() && allocation.per_stratum[i] > 0)
      throw ContractError("sample_clients: probability vector length mismatch");
  }

  for (std::size_t i = 0; i < h; ++i) {
    const int draws = allocation.per_stratum[i];
    if (draws == 0) continue;
    const auto& members = stratum_members[i];
    const auto& p = probs[i];
    const double nh = static_cast<double>(members.size());
    for (int d = 0; d < draws; ++d) {
      // CDF inversion in member order.
      const double u = rng.next_double();
      double acc = 0.0;
      std::size_t pick = p.size() - 1;
      for (std::size_t j = 0; j < p.size(); ++j) {
        acc += p[j];
        if (u < acc) {
          pick = j;
          break;
        }
      }
      plan.selected.push_back(SelectedClient{members[pick], static_cast<int>(i),
                                             1.0 / (nh * p[pick])});
    }
  }
  return plan;
}

/// Stratified aggregation of the selected clients' parameter vectors.
inline ParamVector aggregate(const std::vector<ParamVector>& updates,
                             const RoundPlan& plan, AggregationMode mode) {
  if (updates.size() != plan.selected.size())
    throw ContractError("aggregate: updates do not align with the plan");
  if (updates.empty()) throw ContractError("aggregate: empty plan");
  const std::size_t h = plan.stratum_sizes.size();
  for (std::size_t i = 0; i < h; ++i)
    if (plan.stratum_sizes[i] > 0 && plan.allocation.per_stratum[i] == 0)
      throw ContractError("aggregate: nonempty stratum " + std::to_string(i) +
                          " has no draws");

  const std::size_t dim = updates[0].size();
  // Accumulate per stratum in ascending (client id, draw) order.
  std::vector<std::size_t> order(plan.selected.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& sa = plan.selected[a];
    const auto& sb = plan.selected[b];
    if (sa.stratum_id != sb.stratum_id) return sa.stratum_id < sb.stratum_id;
    return sa.client_id < sb.client_id;
  });

  std::vector<std::vector<double>> stratum_sum(h, std::vector<double>(dim, 0.0));
  for (std::size_t oi : order) {
    const auto& sel = plan.selected[oi];
    const ParamVector& w = updates[oi];
    if (w.size() != dim) throw ContractError("aggregate: update dimension mismatch");
    const double scale =
        mode == AggregationMode::ht_corrected ? sel.inclusion_weight : 1.0;
    auto& acc = stratum_sum[static_cast<std::size_t>(sel.stratum_id)];
    for (std::size_t j = 0; j < dim; ++j) acc[j] += scale * w[j];
  }

  ParamVector out{std::vector<double>(dim, 0.0)};
  const double n_total = static_cast<double>(plan.total_clients);
  for (std::size_t i = 0; i < h; ++i) {
    const int mh = plan.allocation.per_stratum[i];
    if (mh == 0) continue;
    const double coef =
        static_cast<double>(plan.stratum_sizes[i]) / (n_total * static_cast<double>(mh));
    for (std::size_t j = 0; j < dim; ++j) out[j] += coef * stratum_sum[i][j];
  }
  return out;
}

}  // namespace fedstas
