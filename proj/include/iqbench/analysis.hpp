#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "iqbench/tensor.hpp"

namespace iqbench {

struct ClusterResult {
  std::size_t k = 0;
  Tensor centroids;                 // [k, D]
  std::vector<int> assignments;     // length N
  double inertia = 0.0;
  std::vector<double> inertia_trace;  // after every Lloyd iteration
  std::size_t iterations = 0;
};

// Lloyd iterations from a seeded k-means++ start; an empty cluster is
// reseeded to the point farthest from its centroid.
ClusterResult kmeans(const Tensor& features, std::size_t k, std::uint64_t seed,
                     std::size_t max_iter = 100);

// Mean of (b - a) / max(a, b) with Euclidean distances; singleton clusters
// contribute 0.
double silhouette_score(const Tensor& features, std::span<const int> assignments);

struct SweepResult {
  std::size_t best_k = 0;
  std::vector<std::size_t> ks;
  std::vector<double> scores;
};

// Ties resolve to the smallest k.
SweepResult silhouette_sweep(const Tensor& features, std::span<const std::size_t> k_list,
                             std::uint64_t seed, std::size_t max_iter = 100);

struct PseudoLabelResult {
  std::vector<int> cluster_label;  // label attached to each cluster
  std::vector<int> predictions;    // per point
  double accuracy = 0.0;           // against truth, when provided
};

/// anchors[c] is the index of the one labelled record of class c.
PseudoLabelResult pseudo_label(const Tensor& features, std::span<const std::size_t> anchors,
                               const ClusterResult& clusters, std::span<const int> truth = {});

struct PcaResult {
  Tensor coordinates;                  // [N, dims]
  Tensor components;                   // [dims, D]
  std::vector<double> mean;            // D
  std::vector<double> eigenvalues;     // all D, descending
  std::vector<double> explained_ratio; // first dims
};

PcaResult pca_project(const Tensor& features, std::size_t dims);

}  // namespace iqbench
