#pragma once

// Information-Squeeze gradient compression.
//
// A gradient is first reduced to a fixed-length sketch by contiguous
// chunk means, then scalar-quantized by 1-D k-means into at most `levels`
// centroid values plus a per-coordinate index map.  Restoring replaces each
// coordinate by its centroid.  The quantizer is fully deterministic and
// needs no seeding randomness: the 1-D problem is solved exactly by dynamic
// programming over the sorted distinct values, and Lloyd sweeps (bounded by
// kmeans_max_iter / kmeans_tol) then run from that optimum, stopping at the
// immediate fixed point.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "fedstas/core.hpp"
#include "fedstas/model.hpp"

namespace fedstas {

struct SketchConfig {
  int sketch_dim = 2048;    // K_desired
  int levels = 9;           // d': quantization centroid count
  int kmeans_max_iter = 100;
  double kmeans_tol = 1e-12;

  void validate() const {
    if (sketch_dim < 1) throw ContractError("sketch_dim must be >= 1");
    if (levels < 1) throw ContractError("levels must be >= 1");
    if (kmeans_max_iter < 1) throw ContractError("kmeans_max_iter must be >= 1");
    if (kmeans_tol < 0.0) throw ContractError("kmeans_tol must be >= 0");
  }
};

struct CompressedGradient {
  std::vector<double> centroids;       // strictly increasing
  std::vector<std::uint32_t> indices;  // one per sketch coordinate
};

/// Deterministic chunk-mean reduction of a gradient to sketch_dim values.
/// Coordinates are split into sketch_dim contiguous chunks whose sizes differ
/// by at most one; shorter gradients are zero-padded (chunk size one each).
inline std::vector<double> sketch(const std::vector<double>& grad,
                                  const SketchConfig& cfg) {
  cfg.validate();
  const std::size_t n = grad.size();
  if (n == 0) throw ContractError("sketch: empty gradient");
  const auto k = static_cast<std::size_t>(cfg.sketch_dim);
  std::vector<double> out(k, 0.0);
  if (n < k) {
    for (std::size_t i = 0; i < n; ++i) out[i] = grad[i];
    return out;
  }
  const std::size_t base = n / k, rem = n % k;
  std::size_t pos = 0;
  for (std::size_t j = 0; j < k; ++j) {
    const std::size_t len = base + (j < rem ? 1 : 0);
    double sum = 0.0;
    for (std::size_t i = 0; i < len; ++i) sum += grad[pos + i];
    out[j] = sum / static_cast<double>(len);
    pos += len;
  }
  return out;
}

namespace detail {

// Cluster-of-value under sorted centroids; equidistant points go left.
inline std::size_t assign_1d(const std::vector<double>& centroids, double v) {
  std::size_t lo = 0;
  while (lo + 1 < centroids.size()) {
    const double mid = 0.5 * (centroids[lo] + centroids[lo + 1]);
    if (v <= mid) break;
    ++lo;
  }
  return lo;
}

}  // namespace detail

/// 1-D k-means scalar quantization of a sketch vector.  Inputs with fewer
/// distinct values than `levels` quantize exactly with one centroid per value.
inline CompressedGradient is_compress(const std::vector<double>& sketchv,
                                      const SketchConfig& cfg) {
  cfg.validate();
  if (sketchv.empty()) throw ContractError("is_compress: empty input");
  for (double v : sketchv)
    if (!std::isfinite(v)) throw NumericalError("is_compress: non-finite input");

  const std::size_t k = static_cast<std::size_t>(cfg.levels);
  std::vector<double> sorted = sketchv;
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> distinct = sorted;
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

  std::vector<double> centroids;
  if (distinct.size() <= k) {
    centroids = distinct;  // exact quantization
  } else if (k == 1) {
    double sum = 0.0;
    for (double v : sorted) sum += v;
    centroids.assign(1, sum / static_cast<double>(sorted.size()));
  } else {
    // Seed at the exact optimum of the 1-D problem: clusters of a 1-D optimum
    // are contiguous runs of the sorted distinct values, and the run-SSE cost
    // is Monge, so divide-and-conquer DP finds the global minimum in
    // O(k d log d).  The Lloyd sweeps below then start at a fixed point; the
    // iteration cap and tolerance act as guards, not as the optimizer.
    const std::size_t d = distinct.size();
    std::vector<double> w(d, 0.0);
    {
      std::size_t di = 0;
      for (double v : sorted) {
        while (distinct[di] != v) ++di;
        w[di] += 1.0;
      }
    }
    std::vector<double> pw(d + 1, 0.0), ps(d + 1, 0.0), pq(d + 1, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
      pw[i + 1] = pw[i] + w[i];
      ps[i + 1] = ps[i] + w[i] * distinct[i];
      pq[i + 1] = pq[i] + w[i] * distinct[i] * distinct[i];
    }
    const auto run_cost = [&](std::size_t i, std::size_t j) {  // inclusive
      const double ww = pw[j + 1] - pw[i];
      const double s = ps[j + 1] - ps[i];
      return std::max(0.0, (pq[j + 1] - pq[i]) - s * s / ww);
    };

    std::vector<double> layer_prev(d), layer_cur(d);
    for (std::size_t j = 0; j < d; ++j) layer_prev[j] = run_cost(0, j);
    // arg[t-2][j]: first value index of the last run when t runs cover 0..j.
    std::vector<std::vector<std::uint32_t>> arg(k - 1, std::vector<std::uint32_t>(d, 0));
    for (std::size_t t = 2; t <= k; ++t) {
      auto solve = [&](auto&& self, std::size_t jlo, std::size_t jhi, std::size_t ilo,
                       std::size_t ihi) -> void {
        if (jlo > jhi || jlo >= d) return;
        const std::size_t jm = jlo + (jhi - jlo) / 2;
        const std::size_t from = std::max(ilo, t - 1);
        const std::size_t to = std::min(ihi, jm);
        std::size_t best_i = from;
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t i = from; i <= to; ++i) {
          const double c = layer_prev[i - 1] + run_cost(i, jm);
          if (c < best) {
            best = c;
            best_i = i;
          }
        }
        layer_cur[jm] = best;
        arg[t - 2][jm] = static_cast<std::uint32_t>(best_i);
        if (jm > jlo) self(self, jlo, jm - 1, ilo, best_i);
        self(self, jm + 1, jhi, best_i, ihi);
      };
      solve(solve, t - 1, d - 1, t - 1, d - 1);
      layer_prev = layer_cur;
    }

    // Backtrack the run boundaries; each run's weighted mean seeds a centroid.
    std::vector<std::pair<std::size_t, std::size_t>> runs;
    std::size_t j = d - 1;
    for (std::size_t t = k; t >= 2; --t) {
      const std::size_t i = arg[t - 2][j];
      runs.emplace_back(i, j);
      j = i - 1;
    }
    runs.emplace_back(0, j);
    centroids.reserve(k);
    for (auto it = runs.rbegin(); it != runs.rend(); ++it) {
      const auto [lo, hi] = *it;
      centroids.push_back((ps[hi + 1] - ps[lo]) / (pw[hi + 1] - pw[lo]));
    }

    // Prefix sums over sorted values for O(k) center updates per sweep.
    std::vector<double> prefix(sorted.size() + 1, 0.0);
    for (std::size_t i = 0; i < sorted.size(); ++i) prefix[i + 1] = prefix[i] + sorted[i];

    // boundaries[i] = first sorted position belonging to cluster i+1.
    auto boundaries_of = [&](const std::vector<double>& cs) {
      std::vector<std::size_t> b(cs.size() - 1);
      std::size_t pos = 0;
      for (std::size_t i = 0; i + 1 < cs.size(); ++i) {
        const double mid = 0.5 * (cs[i] + cs[i + 1]);
        while (pos < sorted.size() && sorted[pos] <= mid) ++pos;
        b[i] = pos;
      }
      return b;
    };

    std::vector<std::size_t> prev_b;
    bool have_prev = false;
    for (int iter = 0; iter < cfg.kmeans_max_iter; ++iter) {
      const auto b = boundaries_of(centroids);
      if (have_prev && b == prev_b) break;  // assignment fixed point
      prev_b = b;
      have_prev = true;

      // Current cluster of each sorted position, straight from the boundaries.
      std::vector<std::size_t> cluster_of(sorted.size());
      {
        std::size_t ci = 0;
        for (std::size_t p = 0; p < sorted.size(); ++p) {
          while (ci < b.size() && p >= b[ci]) ++ci;
          cluster_of[p] = ci;
        }
      }

      std::vector<double> next = centroids;
      std::vector<char> taken(sorted.size(), 0);
      bool reseeded = false;
      std::size_t begin = 0;
      for (std::size_t i = 0; i < centroids.size(); ++i) {
        const std::size_t end = (i + 1 < centroids.size()) ? b[i] : sorted.size();
        if (end > begin) {
          next[i] = (prefix[end] - prefix[begin]) / static_cast<double>(end - begin);
        } else {
          // Empty cluster: re-seed at the value farthest from its centroid.
          double best_d = -1.0;
          std::size_t best_p = 0;
          for (std::size_t p = 0; p < sorted.size(); ++p) {
            if (taken[p]) continue;
            const double dist = std::abs(sorted[p] - centroids[cluster_of[p]]);
            if (dist > best_d) {
              best_d = dist;
              best_p = p;
            }
          }
          taken[best_p] = 1;
          next[i] = sorted[best_p];
          reseeded = true;
        }
        begin = end;
      }
      if (reseeded) {
        std::sort(next.begin(), next.end());
        next.erase(std::unique(next.begin(), next.end()), next.end());
        centroids = next;
        have_prev = false;  // boundary count may have changed
        continue;
      }
      double shift = 0.0;
      for (std::size_t i = 0; i < centroids.size(); ++i)
        shift = std::max(shift, std::abs(next[i] - centroids[i]));
      centroids = next;
      if (shift <= cfg.kmeans_tol) break;
    }
  }

  // Canonical output: drop unused centroids, keep strictly increasing order.
  std::vector<std::size_t> counts(centroids.size(), 0);
  std::vector<std::uint32_t> raw(sketchv.size());
  for (std::size_t i = 0; i < sketchv.size(); ++i) {
    const std::size_t c = detail::assign_1d(centroids, sketchv[i]);
    raw[i] = static_cast<std::uint32_t>(c);
    ++counts[c];
  }
  std::vector<std::uint32_t> remap(centroids.size(), 0);
  CompressedGradient cg;
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    if (counts[c] == 0) continue;
    remap[c] = static_cast<std::uint32_t>(cg.centroids.size());
    cg.centroids.push_back(centroids[c]);
  }
  cg.indices.resize(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) cg.indices[i] = remap[raw[i]];
  return cg;
}

/// Coordinate j of the restored vector is centroids[indices[j]].
inline std::vector<double> restore(const CompressedGradient& cg) {
  std::vector<double> out(cg.indices.size());
  for (std::size_t i = 0; i < cg.indices.size(); ++i) {
    const std::uint32_t c = cg.indices[i];
    if (c >= cg.centroids.size())
      throw ContractError("restore: centroid index " + std::to_string(c) + " out of range");
    out[i] = cg.centroids[c];
  }
  return out;
}

/// L2 norm of the restored vector (identical accumulation order).
inline double compressed_norm(const CompressedGradient& cg) {
  const std::vector<double> z = restore(cg);
  double s = 0.0;
  for (double v : z) s += v * v;
  return std::sqrt(s);
}

/// sketch + is_compress in one step.
inline CompressedGradient compress_gradient(const std::vector<double>& grad,
                                            const SketchConfig& cfg) {
  return is_compress(sketch(grad, cfg), cfg);
}

inline std::vector<double> sketch(const ParamVector& grad, const SketchConfig& cfg) {
  return sketch(grad.values, cfg);
}

inline CompressedGradient compress_gradient(const ParamVector& grad,
                                            const SketchConfig& cfg) {
  return compress_gradient(grad.values, cfg);
}

}  // namespace fedstas
