#pragma once

#include "asaloc/types.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace asaloc::asa {

/// Soft-partition parameters. alpha/beta shape the cosine attention weights;
/// strategy selects between the soft path and the two hard baselines.
struct PartitionSpec {
  Index num_parts = 2;
  double alpha = 1.0;
  double beta = 0.0;
  Strategy strategy = Strategy::kSoftKmeans;
  AttentionGrad attention_grad = AttentionGrad::kFlow;
  int kmeans_max_iters = 100;
  double kmeans_tol = 1e-9;

  void validate() const {
    if (num_parts < 1) throw ConfigError("asa: num_parts must be >= 1");
    if (alpha <= 0.0) throw ConfigError("asa: alpha must be > 0");
    if (beta < 0.0) throw ConfigError("asa: beta must be >= 0");
    if (kmeans_max_iters < 1) throw ConfigError("asa: kmeans_max_iters must be >= 1");
  }
};

/// Per-patch semantic scalar: arithmetic mean of the patch feature row.
template <typename Derived>
VectorX<typename Derived::Scalar> compress(const Eigen::MatrixBase<Derived>& patch_tokens) {
  if (patch_tokens.rows() < 1 || patch_tokens.cols() < 1) {
    throw PartitionError("compress: patch matrix must be non-empty");
  }
  return patch_tokens.rowwise().mean();
}

/// Patch indices ordered by descending q; ties keep ascending patch index.
template <typename T>
IndexList descending_order(const VectorX<T>& q) {
  IndexList order(static_cast<std::size_t>(q.size()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Index a, Index b) { return q[a] > q[b]; });
  return order;
}

/// 1-based rank positions of the initial cluster centers inside the sorted
/// sequence: floor((2k - 1) * N / (2K)) for k = 1..K, clamped to [1, N].
inline IndexList init_center_positions(Index n, Index k) {
  if (k < 1) throw PartitionError("init_center_positions: K must be >= 1");
  if (k > n) {
    throw PartitionError("init_center_positions: K (" + std::to_string(k) +
                         ") exceeds patch count N (" + std::to_string(n) + ")");
  }
  IndexList pos(static_cast<std::size_t>(k));
  for (Index j = 1; j <= k; ++j) {
    const Index p = ((2 * j - 1) * n) / (2 * k);
    pos[static_cast<std::size_t>(j - 1)] = std::clamp<Index>(p, 1, n);
  }
  return pos;
}

/// Initial center values: q at the seeded rank positions of the descending sort.
Vector seed_centers(const Vector& q, Index k);

struct KmeansResult {
  std::vector<int> assignments;  // N labels in [0, K)
  Vector centers;                // K center values
  int iterations = 0;
  bool converged = false;
};

/// Lloyd iterations on scalar values. Empty clusters are reseeded with the
/// point farthest from its current center; every cluster is non-empty on
/// return. Within-cluster SSE is nonincreasing across iterations.
KmeansResult kmeans_1d(const Vector& q, Index k, const Vector& initial_centers,
                       int max_iters = 100, double tol = 1e-9);

double kmeans_sse(const Vector& q, const KmeansResult& result);

/// Anchor of part k = index of the patch whose q is nearest to center k,
/// ties broken by lowest patch index.
IndexList select_anchors(const Vector& q, const Vector& centers);

/// K x N cosine attention over Euclidean distances between every patch and
/// each part anchor, computed on the full D-dimensional patch features.
/// Rows whose min and max distance coincide are set uniformly to alpha + beta.
Matrix compute_attention(const Matrix& patch_tokens, const IndexList& anchors,
                         const PartitionSpec& spec);

/// Attention-normalized weighted mean of patch rows: row k of the result is
/// sum_i P_i * A_ki / sum_i A_ki. Every row sum of `attention` must be > 0.
template <typename DerivedP, typename DerivedA>
MatrixX<typename DerivedP::Scalar> aggregate(const Eigen::MatrixBase<DerivedP>& patch_tokens,
                                             const Eigen::MatrixBase<DerivedA>& attention) {
  using T = typename DerivedP::Scalar;
  if (attention.cols() != patch_tokens.rows()) {
    throw PartitionError("aggregate: attention columns must match patch count");
  }
  const VectorX<T> row_sum = attention.rowwise().sum();
  if ((row_sum.array() <= T(0)).any()) {
    throw PartitionError("aggregate: attention row with non-positive sum");
  }
  MatrixX<T> rho = attention * patch_tokens;
  rho.array().colwise() /= row_sum.array();
  return rho;
}

/// Rank patches by q descending and split the ranking into K contiguous
/// groups; the remainder N mod K is distributed to the last groups.
std::vector<int> hard_partition_uniform(const Vector& q, Index k);

/// One row per part, 1 at member columns and 0 elsewhere.
Matrix one_hot_attention(const std::vector<int>& assignments, Index k);

struct PartFeatures {
  Matrix rho;                    // K x D
  IndexList anchor_indices;      // K patch indices
  Matrix attention;              // K x N effective weights (one-hot when hard)
  std::vector<int> assignments;  // cluster labels (empty for pure soft output)
  bool kmeans_converged = true;
};

/// Saved forward state for the backward pass.
struct ForwardCache {
  PartitionSpec spec;
  Matrix patch_tokens;  // N x D
  Matrix attention;     // K x N
  Vector row_sum;       // K
  Matrix rho;           // K x D
  // Soft-path extras (empty for hard strategies).
  bool soft = false;
  IndexList anchors;
  Matrix dis;    // K x N
  Matrix ratio;  // K x N normalized distances in [0, 1]
  IndexList argmin_col, argmax_col;
  std::vector<char> degenerate;  // rows where max distance == min distance
};

/// Differentiable soft sub-path with the anchor choice held fixed.
Matrix soft_aggregate(const Matrix& patch_tokens, const IndexList& anchors,
                      const PartitionSpec& spec, ForwardCache* cache = nullptr);

/// Full module: compress -> sort -> seeded k-means -> anchors -> attention ->
/// aggregation for the soft strategy; group means for the hard baselines.
PartFeatures asa_forward(const Matrix& patch_tokens, const PartitionSpec& spec,
                         ForwardCache* cache = nullptr);

/// Gradient of a scalar loss w.r.t. the patch tokens given d(loss)/d(rho).
/// Cluster assignments and anchor indices are treated as constants. In
/// kFlow mode gradients also pass through the attention weights; in kDetach
/// mode the attention matrix is treated as a constant.
Matrix asa_backward(const Matrix& drho, const ForwardCache& cache);

}  // namespace asaloc::asa
