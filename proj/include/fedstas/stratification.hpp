#pragma once

// Client stratification: k-means over the clients' restored compressed
// gradients.  Initial centers are H distinct clients chosen from the stream;
// assignment and center recomputation alternate until no assignment changes
// or max_iter is reached.  Empty strata are kept (their center freezes) so a
// stratification always partitions all N clients across exactly H ids.

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "fedstas/core.hpp"
#include "fedstas/rng.hpp"

namespace fedstas {

struct Stratification {
  std::vector<int> assignments;            // stratum id per client, < H
  std::vector<std::vector<double>> centers;
  std::vector<std::size_t> stratum_sizes;  // N_h, sums to N
  int iterations_run = 0;
  std::vector<double> sse_history;         // within-stratum SSE per iteration

  std::size_t num_strata() const { return centers.size(); }

  // Client ids per stratum, ascending.
  std::vector<std::vector<int>> members() const {
    std::vector<std::vector<int>> out(centers.size());
    for (std::size_t k = 0; k < assignments.size(); ++k)
      out[static_cast<std::size_t>(assignments[k])].push_back(static_cast<int>(k));
    return out;
  }
};

namespace detail {

inline double sq_dist(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace detail

inline Stratification stratify(const std::vector<std::vector<double>>& restored,
                               int num_strata, Rng rng, int max_iter = 100) {
  const std::size_t n = restored.size();
  if (n == 0) throw ContractError("stratify: no clients");
  if (num_strata < 1) throw ContractError("stratify: num_strata must be >= 1");
  const auto h = static_cast<std::size_t>(num_strata);
  if (h > n)
    throw ContractError("stratify: num_strata " + std::to_string(num_strata) +
                        " exceeds client count " + std::to_string(n));
  const std::size_t dim = restored[0].size();
  for (const auto& z : restored)
    if (z.size() != dim) throw ContractError("stratify: mixed vector dimensions");

  Stratification out;
  out.centers.reserve(h);
  for (std::size_t idx : rng.sample_without_replacement(n, h))
    out.centers.push_back(restored[idx]);

  out.assignments.assign(n, -1);
  std::vector<int> prev(n, -1);
  int iters = 0;
  for (int iter = 0; iter < max_iter; ++iter) {
    // Nearest-center assignment; ties break to the lowest stratum index.
    double sse = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      int best = 0;
      double best_d = detail::sq_dist(restored[k], out.centers[0]);
      for (std::size_t i = 1; i < h; ++i) {
        const double d = detail::sq_dist(restored[k], out.centers[i]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(i);
        }
      }
      out.assignments[k] = best;
      sse += best_d;
    }
    if (out.assignments == prev) break;  // fixed point: centers would not move
    prev = out.assignments;
    out.sse_history.push_back(sse);
    ++iters;

    // Center recomputation; empty strata keep their previous centers.
    std::vector<std::vector<double>> sums(h, std::vector<double>(dim, 0.0));
    std::vector<std::size_t> counts(h, 0);
    for (std::size_t k = 0; k < n; ++k) {
      const auto s = static_cast<std::size_t>(out.assignments[k]);
      ++counts[s];
      for (std::size_t j = 0; j < dim; ++j) sums[s][j] += restored[k][j];
    }
    for (std::size_t i = 0; i < h; ++i) {
      if (counts[i] == 0) continue;
      for (std::size_t j = 0; j < dim; ++j)
        out.centers[i][j] = sums[i][j] / static_cast<double>(counts[i]);
    }
  }

  out.iterations_run = iters;
  out.stratum_sizes.assign(h, 0);
  for (int a : out.assignments) ++out.stratum_sizes[static_cast<std::size_t>(a)];
  return out;
}

}  // namespace fedstas
