#include "iqbench/analysis.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>

#include "iqbench/error.hpp"
#include "iqbench/rng.hpp"

namespace iqbench {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_features(const Tensor& f, const char* op) {
  require(f.rank() == 2 && f.shape[0] >= 1 && f.shape[1] >= 1, ErrorCode::kShapeMismatch,
          std::string(op) + ": features must be [N, D], got " + shape_str(f.shape));
  for (double v : f.data) {
    require(std::isfinite(v), ErrorCode::kNumeric, std::string(op) + ": non-finite feature");
  }
}

double sq_dist(const double* a, const double* b, std::size_t d) {
  double s = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double t = a[j] - b[j];
    s += t * t;
  }
  return s;
}

}  // namespace

ClusterResult kmeans(const Tensor& features, std::size_t k, std::uint64_t seed,
                     std::size_t max_iter) {
  check_features(features, "kmeans");
  const auto n = features.shape[0];
  const auto d = features.shape[1];
  require(k >= 1, ErrorCode::kInvalidArgument, "kmeans: k must be >= 1");
  require(k <= n, ErrorCode::kInvalidArgument,
          "kmeans: k = " + std::to_string(k) + " exceeds N = " + std::to_string(n));
  const double* x = features.data.data();
  auto rng = make_rng(seed, 0x6d65616e);

  ClusterResult res;
  res.k = k;
  res.centroids = Tensor({k, d});
  double* c = res.centroids.data.data();

  // k-means++ seeding.
  std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
  std::size_t first = uniform_index(rng, 0, n - 1);
  std::copy(x + first * d, x + (first + 1) * d, c);
  for (std::size_t m = 1; m < k; ++m) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest[i] = std::min(nearest[i], sq_dist(x + i * d, c + (m - 1) * d, d));
      total += nearest[i];
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      double r = uniform01(rng) * total;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        r -= nearest[i];
        if (r < 0.0 && nearest[i] > 0.0) {
          pick = i;
          break;
        }
      }
      // Never duplicate an existing centroid when a distinct point remains.
      if (nearest[pick] == 0.0) {
        for (std::size_t i = 0; i < n; ++i) {
          if (nearest[i] > 0.0) {
            pick = i;
            break;
          }
        }
      }
    } else {
      pick = uniform_index(rng, 0, n - 1);
    }
    std::copy(x + pick * d, x + (pick + 1) * d, c + m * d);
  }

  res.assignments.assign(n, -1);
  std::vector<double> dist(n, 0.0);
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iter, 1); ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < n; ++i) {
      int best = 0;
      double bd = std::numeric_limits<double>::infinity();
      for (std::size_t m = 0; m < k; ++m) {
        const double dd = sq_dist(x + i * d, c + m * d, d);
        if (dd < bd) {
          bd = dd;
          best = static_cast<int>(m);
        }
      }
      if (res.assignments[i] != best) changed = true;
      res.assignments[i] = best;
      dist[i] = bd;
    }
    if (!changed && it > 0) break;

    std::vector<std::size_t> counts(k, 0);
    std::fill(c, c + k * d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto m = static_cast<std::size_t>(res.assignments[i]);
      ++counts[m];
      for (std::size_t j = 0; j < d; ++j) c[m * d + j] += x[i * d + j];
    }
    for (std::size_t m = 0; m < k; ++m) {
      if (counts[m] > 0) {
        for (std::size_t j = 0; j < d; ++j) c[m * d + j] /= static_cast<double>(counts[m]);
        continue;
      }
      const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
      std::copy(x + far * d, x + (far + 1) * d, c + m * d);
      dist[far] = 0.0;
    }
    double inertia = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      inertia += sq_dist(x + i * d, c + static_cast<std::size_t>(res.assignments[i]) * d, d);
    }
    res.inertia_trace.push_back(inertia);
    res.iterations = it + 1;
  }
  res.inertia = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < k; ++m) {
      const double dd = sq_dist(x + i * d, c + m * d, d);
      if (dd < bd) {
        bd = dd;
        best = static_cast<int>(m);
      }
    }
    res.assignments[i] = best;
    res.inertia += bd;
  }
  return res;
}

double silhouette_score(const Tensor& features, std::span<const int> assignments) {
  check_features(features, "silhouette_score");
  const auto n = features.shape[0];
  const auto d = features.shape[1];
  require(assignments.size() == n, ErrorCode::kShapeMismatch,
          "silhouette_score: " + std::to_string(assignments.size()) + " assignments for " +
              std::to_string(n) + " points");
  int max_label = -1;
  for (int a : assignments) {
    require(a >= 0, ErrorCode::kInvalidArgument, "silhouette_score: negative cluster id");
    max_label = std::max(max_label, a);
  }
  const auto k = static_cast<std::size_t>(max_label + 1);
  std::vector<std::size_t> counts(k, 0);
  for (int a : assignments) ++counts[static_cast<std::size_t>(a)];
  const auto used = std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; });
  require(used >= 2, ErrorCode::kInvalidArgument, "silhouette_score: needs at least two clusters");

  const double* x = features.data.data();
  std::vector<double> sums(k);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(assignments[i]);
    if (counts[own] == 1) continue;
    std::fill(sums.begin(), sums.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sums[static_cast<std::size_t>(assignments[j])] += std::sqrt(sq_dist(x + i * d, x + j * d, d));
    }
    const double a = sums[own] / static_cast<double>(counts[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < k; ++m) {
      if (m == own || counts[m] == 0) continue;
      b = std::min(b, sums[m] / static_cast<double>(counts[m]));
    }
    const double denom = std::max(a, b);
    total += denom > 0.0 ? (b - a) / denom : 0.0;
  }
  return total / static_cast<double>(n);
}

SweepResult silhouette_sweep(const Tensor& features, std::span<const std::size_t> k_list,
                             std::uint64_t seed, std::size_t max_iter) {
  require(!k_list.empty(), ErrorCode::kInvalidArgument, "silhouette_sweep: empty k list");
  const auto n = features.rank() == 2 ? features.shape[0] : 0;
  for (auto k : k_list) {
    require(k >= 2 && k <= n, ErrorCode::kInvalidArgument,
            "silhouette_sweep: k = " + std::to_string(k) + " outside [2, N = " +
                std::to_string(n) + "]");
  }
  SweepResult res;
  double best = -std::numeric_limits<double>::infinity();
  for (auto k : k_list) {
    const auto cl = kmeans(features, k, seed, max_iter);
    std::size_t distinct = 0;
    std::vector<bool> seen(k, false);
    for (int a : cl.assignments) {
      if (!seen[static_cast<std::size_t>(a)]) {
        seen[static_cast<std::size_t>(a)] = true;
        ++distinct;
      }
    }
    const double s = distinct >= 2 ? silhouette_score(features, cl.assignments) : 0.0;
    res.ks.push_back(k);
    res.scores.push_back(s);
    if (s > best || (s == best && k < res.best_k)) {
      best = s;
      res.best_k = k;
    }
  }
  return res;
}

PseudoLabelResult pseudo_label(const Tensor& features, std::span<const std::size_t> anchors,
                               const ClusterResult& clusters, std::span<const int> truth) {
  check_features(features, "pseudo_label");
  const auto n = features.shape[0];
  const auto d = features.shape[1];
  const auto k = clusters.k;
  require(clusters.centroids.rank() == 2 && clusters.centroids.shape[1] == d &&
              clusters.assignments.size() == n,
          ErrorCode::kShapeMismatch, "pseudo_label: cluster result does not match the features");
  require(!anchors.empty(), ErrorCode::kInvalidArgument, "pseudo_label: no anchors");
  if (!truth.empty()) {
    require(truth.size() == n, ErrorCode::kShapeMismatch, "pseudo_label: truth length mismatch");
    int max_class = -1;
    for (int t : truth) max_class = std::max(max_class, t);
    require(anchors.size() >= static_cast<std::size_t>(max_class + 1), ErrorCode::kInvalidArgument,
            "pseudo_label: " + std::to_string(anchors.size()) + " anchors for " +
                std::to_string(max_class + 1) + " classes");
  }
  const double* x = features.data.data();
  const double* c = clusters.centroids.data.data();

  // Each anchor claims its nearest centroid; contested clusters go to the
  // closest anchor.
  std::vector<int> owner(k, -1);
  std::vector<double> owner_dist(k, std::numeric_limits<double>::infinity());
  for (std::size_t cls = 0; cls < anchors.size(); ++cls) {
    const auto a = anchors[cls];
    require(a < n, ErrorCode::kInvalidArgument, "pseudo_label: anchor index out of range");
    std::size_t best = 0;
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t m = 0; m < k; ++m) {
      const double dd = sq_dist(x + a * d, c + m * d, d);
      if (dd < bd) {
        bd = dd;
        best = m;
      }
    }
    if (bd < owner_dist[best]) {
      owner[best] = static_cast<int>(cls);
      owner_dist[best] = bd;
    }
  }
  PseudoLabelResult res;
  res.cluster_label.assign(k, -1);
  for (std::size_t m = 0; m < k; ++m) {
    if (owner[m] >= 0) {
      res.cluster_label[m] = owner[m];
      continue;
    }
    double bd = std::numeric_limits<double>::infinity();
    for (std::size_t q = 0; q < k; ++q) {
      if (owner[q] < 0) continue;
      const double dd = sq_dist(c + m * d, c + q * d, d);
      if (dd < bd) {
        bd = dd;
        res.cluster_label[m] = owner[q];
      }
    }
  }
  res.predictions.resize(n);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    res.predictions[i] = res.cluster_label[static_cast<std::size_t>(clusters.assignments[i])];
    if (!truth.empty() && res.predictions[i] == truth[i]) ++correct;
  }
  if (!truth.empty()) res.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return res;
}

PcaResult pca_project(const Tensor& features, std::size_t dims) {
  check_features(features, "pca_project");
  const auto n = features.shape[0];
  const auto d = features.shape[1];
  require(dims >= 1 && dims <= d, ErrorCode::kInvalidArgument,
          "pca_project: dims = " + std::to_string(dims) + " outside [1, D = " + std::to_string(d) + "]");
  Eigen::Map<const RowMat> x(features.data.data(), n, d);
  const Eigen::RowVectorXd mu = x.colwise().mean();
  const RowMat centered = x.rowwise() - mu;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(std::max<std::size_t>(n - 1, 1));
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorCode::kNumeric, "pca_project: eigensolver failed");
  const auto& evals = solver.eigenvalues();   // ascending
  const auto& evecs = solver.eigenvectors();

  PcaResult res;
  res.mean.assign(mu.data(), mu.data() + d);
  double total = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    const double v = std::max(evals(static_cast<Eigen::Index>(d - 1 - j)), 0.0);
    res.eigenvalues.push_back(v);
    total += v;
  }
  res.components = Tensor({dims, d});
  for (std::size_t p = 0; p < dims; ++p) {
    const auto col = static_cast<Eigen::Index>(d - 1 - p);
    // Sign convention: largest-magnitude entry positive.
    Eigen::Index arg = 0;
    evecs.col(col).cwiseAbs().maxCoeff(&arg);
    const double sign = evecs(arg, col) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) {
      res.components.data[p * d + j] = sign * evecs(static_cast<Eigen::Index>(j), col);
    }
    res.explained_ratio.push_back(total > 0.0 ? res.eigenvalues[p] / total : 0.0);
  }
  res.coordinates = Tensor({n, dims});
  Eigen::Map<const RowMat> comp(res.components.data.data(), dims, d);
  Eigen::Map<RowMat>(res.coordinates.data.data(), n, dims).noalias() = centered * comp.transpose();
  return res;
}

}  // namespace iqbench
