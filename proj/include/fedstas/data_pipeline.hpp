#pragma once

// Dataset synthesis, IDX ingestion, and client partitioning.
//
// Partitions are stored as per-client example-index lists against the source
// dataset, so they serialize small and reproduce exactly.  Every example is
// assigned to exactly one client and no client is left empty (one example is
// moved from the largest client to repair empties; downstream size reports
// need n_k >= 1).

#include <algorithm>
#include <cstdint>
#include <cstddef>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "fedstas/core.hpp"
#include "fedstas/rng.hpp"

namespace fedstas {

struct IdxBadMagic : IoError {
  using IoError::IoError;
};
struct IdxTruncated : IoError {
  using IoError::IoError;
};
struct IdxCountMismatch : IoError {
  using IoError::IoError;
};

enum class PartitionScheme { iid, dirichlet };

struct PartitionRecipe {
  PartitionScheme scheme = PartitionScheme::iid;
  double alpha_dir = 0.0;  // meaningful for dirichlet only
  std::uint64_t seed = 0;
};

struct Partition {
  PartitionRecipe recipe;
  std::vector<std::vector<std::size_t>> client_indices;  // ascending per client
  std::vector<std::vector<long long>> label_histogram;   // N x C

  std::size_t num_clients() const { return client_indices.size(); }

  std::vector<LocalDataset> materialize(const std::vector<Example>& examples) const {
    std::vector<LocalDataset> out(client_indices.size());
    for (std::size_t c = 0; c < client_indices.size(); ++c) {
      out[c].client_id = static_cast<int>(c);
      out[c].examples.reserve(client_indices[c].size());
      for (std::size_t i : client_indices[c]) {
        if (i >= examples.size())
          throw ContractError("partition index out of range of the source dataset");
        out[c].examples.push_back(examples[i]);
      }
    }
    return out;
  }
};

namespace detail {

inline int label_count(const std::vector<Example>& examples) {
  int c = 0;
  for (const Example& ex : examples) {
    if (ex.label < 0) throw ContractError("negative label");
    c = std::max(c, ex.label + 1);
  }
  return c;
}

inline void finish_partition(Partition& p, const std::vector<Example>& examples) {
  // Repair empty clients by moving the last index held by the largest client
  // (ties break to the lowest client id).  Ascending client order keeps the
  // repair deterministic.
  for (std::size_t c = 0; c < p.client_indices.size(); ++c) {
    if (!p.client_indices[c].empty()) continue;
    std::size_t donor = 0;
    for (std::size_t d = 1; d < p.client_indices.size(); ++d)
      if (p.client_indices[d].size() > p.client_indices[donor].size()) donor = d;
    if (p.client_indices[donor].size() < 2)
      throw ContractError("cannot repair empty client: fewer examples than clients");
    p.client_indices[c].push_back(p.client_indices[donor].back());
    p.client_indices[donor].pop_back();
  }
  for (auto& idx : p.client_indices) std::sort(idx.begin(), idx.end());

  const int classes = label_count(examples);
  p.label_histogram.assign(p.client_indices.size(),
                           std::vector<long long>(static_cast<std::size_t>(classes), 0));
  for (std::size_t c = 0; c < p.client_indices.size(); ++c)
    for (std::size_t i : p.client_indices[c])
      ++p.label_histogram[c][static_cast<std::size_t>(examples[i].label)];
}

}  // namespace detail

/// Seed-deterministic shuffle then round-robin; client sizes differ by at
/// most one.
inline Partition partition_iid(const std::vector<Example>& examples, int num_clients,
                               std::uint64_t seed) {
  if (num_clients < 1) throw ContractError("partition_iid: need at least one client");
  if (examples.size() < static_cast<std::size_t>(num_clients))
    throw ContractError("partition_iid: fewer examples than clients");

  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng = rng_stream(seed, "partition", 0, 0);
  rng.shuffle(order);

  Partition p;
  p.recipe = PartitionRecipe{PartitionScheme::iid, 0.0, seed};
  p.client_indices.assign(static_cast<std::size_t>(num_clients), {});
  for (std::size_t j = 0; j < order.size(); ++j)
    p.client_indices[j % static_cast<std::size_t>(num_clients)].push_back(order[j]);
  detail::finish_partition(p, examples);
  return p;
}

/// Class-wise Dirichlet split: for each class, draw proportions over clients
/// from Dir(alpha_dir) and assign that class's examples by independent
/// categorical draws.  Smaller alpha_dir means more label skew.
inline Partition partition_dirichlet(const std::vector<Example>& examples,
                                     int num_clients, double alpha_dir,
                                     std::uint64_t seed) {
  if (num_clients < 1) throw ContractError("partition_dirichlet: need at least one client");
  if (examples.size() < static_cast<std::size_t>(num_clients))
    throw ContractError("partition_dirichlet: fewer examples than clients");
  if (!(alpha_dir > 0.0)) throw ContractError("partition_dirichlet: alpha_dir must be > 0");

  const int classes = detail::label_count(examples);
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < examples.size(); ++i)
    by_class[static_cast<std::size_t>(examples[i].label)].push_back(i);

  Partition p;
  p.recipe = PartitionRecipe{PartitionScheme::dirichlet, alpha_dir, seed};
  p.client_indices.assign(static_cast<std::size_t>(num_clients), {});

  Rng rng = rng_stream(seed, "partition", 0, 0);
  for (int c = 0; c < classes; ++c) {
    const std::vector<double> props =
        rng.next_dirichlet(alpha_dir, static_cast<std::size_t>(num_clients));
    for (std::size_t i : by_class[static_cast<std::size_t>(c)]) {
      const double u = rng.next_double();
      double acc = 0.0;
      std::size_t pick = static_cast<std::size_t>(num_clients) - 1;
      for (std::size_t k = 0; k < props.size(); ++k) {
        acc += props[k];
        if (u < acc) {
          pick = k;
          break;
        }
      }
      p.client_indices[pick].push_back(i);
    }
  }
  detail::finish_partition(p, examples);
  return p;
}

namespace detail {

inline std::vector<unsigned char> read_all_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  in.seekg(0, std::ios::end);
  const std::streamoff len = in.tellg();
  in.seekg(0, std::ios::beg);
  std::vector<unsigned char> bytes(static_cast<std::size_t>(len));
  if (len > 0) in.read(reinterpret_cast<char*>(bytes.data()), len);
  if (!in) throw IoError("short read on " + path);
  return bytes;
}

inline std::uint32_t be32(const std::vector<unsigned char>& b, std::size_t off,
                          const std::string& path) {
  if (off + 4 > b.size()) throw IdxTruncated(path + ": truncated header");
  return (static_cast<std::uint32_t>(b[off]) << 24) |
         (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) |
         static_cast<std::uint32_t>(b[off + 3]);
}

}  // namespace detail

/// IDX image + label pair (the MNIST container format).  Pixels are scaled
/// to [0, 1].  Errors distinguish bad magic, truncation, and count mismatch.
inline std::vector<Example> load_idx(const std::string& images_path,
                                     const std::string& labels_path) {
  const auto img = detail::read_all_bytes(images_path);
  const auto lab = detail::read_all_bytes(labels_path);

  if (detail::be32(img, 0, images_path) != 0x00000803u)
    throw IdxBadMagic(images_path + ": bad image magic");
  if (detail::be32(lab, 0, labels_path) != 0x00000801u)
    throw IdxBadMagic(labels_path + ": bad label magic");

  const std::uint32_t n_img = detail::be32(img, 4, images_path);
  const std::uint32_t rows = detail::be32(img, 8, images_path);
  const std::uint32_t cols = detail::be32(img, 12, images_path);
  const std::uint32_t n_lab = detail::be32(lab, 4, labels_path);
  if (n_img != n_lab)
    throw IdxCountMismatch(images_path + ": " + std::to_string(n_img) + " images vs " +
                           std::to_string(n_lab) + " labels");

  const std::size_t pixels = static_cast<std::size_t>(rows) * cols;
  if (img.size() < 16 + static_cast<std::size_t>(n_img) * pixels)
    throw IdxTruncated(images_path + ": truncated pixel payload");
  if (lab.size() < 8 + static_cast<std::size_t>(n_lab))
    throw IdxTruncated(labels_path + ": truncated label payload");

  std::vector<Example> out(n_img);
  for (std::uint32_t i = 0; i < n_img; ++i) {
    Example& ex = out[i];
    ex.features.resize(pixels);
    const std::size_t base = 16 + static_cast<std::size_t>(i) * pixels;
    for (std::size_t j = 0; j < pixels; ++j)
      ex.features[j] = static_cast<double>(img[base + j]) / 255.0;
    ex.label = static_cast<int>(lab[8 + i]);
  }
  return out;
}

/// Gaussian blobs: one unit-covariance cluster per class, mean at distance
/// class_separation from the origin along axis (c mod dim), negated once the
/// axes run out.  Output is class-major and seed-deterministic.
inline std::vector<Example> synthesize(int num_classes, int input_dim, int per_class,
                                       double class_separation, std::uint64_t seed) {
  if (num_classes < 1 || input_dim < 1 || per_class < 1)
    throw ContractError("synthesize: all counts must be positive");
  if (class_separation < 0.0) throw ContractError("synthesize: negative separation");

  Rng rng = rng_stream(seed, "dataset", 0, 0);
  std::vector<Example> out;
  out.reserve(static_cast<std::size_t>(num_classes) * per_class);
  for (int c = 0; c < num_classes; ++c) {
    const std::size_t axis = static_cast<std::size_t>(c % input_dim);
    const double sign = (c / input_dim) % 2 == 0 ? 1.0 : -1.0;
    for (int i = 0; i < per_class; ++i) {
      Example ex;
      ex.label = c;
      ex.features.resize(static_cast<std::size_t>(input_dim));
      for (int d = 0; d < input_dim; ++d) ex.features[static_cast<std::size_t>(d)] = rng.next_normal();
      ex.features[axis] += sign * class_separation;
      out.push_back(std::move(ex));
    }
  }
  return out;
}

}  // namespace fedstas
