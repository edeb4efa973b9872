#include "asaloc/asa.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace asaloc::asa {

namespace {

constexpr double kHalfPi = std::numbers::pi / 2.0;

// cos(r * pi/2) with exact values at both endpoints so the anchor column is
// exactly alpha + beta and the farthest column exactly beta.
double quarter_cos(double r) {
  if (r <= 0.0) return 1.0;
  if (r >= 1.0) return 0.0;
  return std::cos(r * kHalfPi);
}

int nearest_center(double value, const Vector& centers) {
  int best = 0;
  double best_dist = std::abs(value - centers[0]);
  for (Index c = 1; c < centers.size(); ++c) {
    const double d = std::abs(value - centers[c]);
    if (d < best_dist) {
      best_dist = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace

Vector seed_centers(const Vector& q, Index k) {
  const IndexList order = descending_order(q);
  const IndexList positions = init_center_positions(q.size(), k);
  Vector centers(k);
  for (Index j = 0; j < k; ++j) {
    const Index pos = positions[static_cast<std::size_t>(j)];  // 1-based rank
    centers[j] = q[order[static_cast<std::size_t>(pos - 1)]];
  }
  return centers;
}

KmeansResult kmeans_1d(const Vector& q, Index k, const Vector& initial_centers,
                       int max_iters, double tol) {
  const Index n = q.size();
  if (k > n) throw PartitionError("kmeans_1d: K exceeds number of points");
  if (initial_centers.size() != k) {
    throw PartitionError("kmeans_1d: initial center count must equal K");
  }

  KmeansResult result;
  result.centers = initial_centers;
  result.assignments.assign(static_cast<std::size_t>(n), 0);

  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int iter = 0; iter < max_iters; ++iter) {
    result.iterations = iter + 1;

    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      const int c = nearest_center(q[i], result.centers);
      if (c != result.assignments[static_cast<std::size_t>(i)]) {
        result.assignments[static_cast<std::size_t>(i)] = c;
        changed = true;
      }
    }

    std::fill(counts.begin(), counts.end(), 0);
    for (int a : result.assignments) ++counts[static_cast<std::size_t>(a)];

    // Reseed empty clusters with the point farthest from its own center.
    // Donors are restricted to clusters with at least two members so every
    // cluster is non-empty on return even when q has duplicated values.
    for (Index c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) continue;
      Index worst = -1;
      double worst_dist = -1.0;
      for (Index i = 0; i < n; ++i) {
        const int a = result.assignments[static_cast<std::size_t>(i)];
        if (counts[static_cast<std::size_t>(a)] < 2) continue;
        const double d = std::abs(q[i] - result.centers[a]);
        if (d > worst_dist) {
          worst_dist = d;
          worst = i;
        }
      }
      if (worst < 0) throw PartitionError("kmeans_1d: cannot fill empty cluster");
      const int old = result.assignments[static_cast<std::size_t>(worst)];
      --counts[static_cast<std::size_t>(old)];
      result.assignments[static_cast<std::size_t>(worst)] = static_cast<int>(c);
      ++counts[static_cast<std::size_t>(c)];
      result.centers[c] = q[worst];
      changed = true;
    }

    Vector sums = Vector::Zero(k);
    for (Index i = 0; i < n; ++i) {
      sums[result.assignments[static_cast<std::size_t>(i)]] += q[i];
    }
    double movement = 0.0;
    for (Index c = 0; c < k; ++c) {
      const double updated = sums[c] / counts[static_cast<std::size_t>(c)];
      movement = std::max(movement, std::abs(updated - result.centers[c]));
      result.centers[c] = updated;
    }

    if (!changed && movement <= tol) {
      result.converged = true;
      break;
    }
  }
  return result;
}

double kmeans_sse(const Vector& q, const KmeansResult& result) {
  double sse = 0.0;
  for (Index i = 0; i < q.size(); ++i) {
    const double d = q[i] - result.centers[result.assignments[static_cast<std::size_t>(i)]];
    sse += d * d;
  }
  return sse;
}

IndexList select_anchors(const Vector& q, const Vector& centers) {
  IndexList anchors(static_cast<std::size_t>(centers.size()));
  for (Index c = 0; c < centers.size(); ++c) {
    Index best = 0;
    double best_dist = std::abs(q[0] - centers[c]);
    for (Index i = 1; i < q.size(); ++i) {
      const double d = std::abs(q[i] - centers[c]);
      if (d < best_dist) {
        best_dist = d;
        best = i;
      }
    }
    anchors[static_cast<std::size_t>(c)] = best;
  }
  return anchors;
}

Matrix compute_attention(const Matrix& patch_tokens, const IndexList& anchors,
                         const PartitionSpec& spec) {
  ForwardCache cache;
  Matrix rho = soft_aggregate(patch_tokens, anchors, spec, &cache);
  return cache.attention;
}

std::vector<int> hard_partition_uniform(const Vector& q, Index k) {
  const Index n = q.size();
  if (k > n) throw PartitionError("hard_partition_uniform: K exceeds patch count");
  const IndexList order = descending_order(q);
  std::vector<int> assignments(static_cast<std::size_t>(n), 0);
  const Index base = n / k;
  const Index remainder = n % k;
  Index pos = 0;
  for (Index g = 0; g < k; ++g) {
    // Remainder goes to the last `remainder` groups.
    const Index size = base + (g >= k - remainder ? 1 : 0);
    for (Index j = 0; j < size; ++j) {
      assignments[static_cast<std::size_t>(order[static_cast<std::size_t>(pos++)])] =
          static_cast<int>(g);
    }
  }
  return assignments;
}

Matrix one_hot_attention(const std::vector<int>& assignments, Index k) {
  Matrix a = Matrix::Zero(k, static_cast<Index>(assignments.size()));
  for (std::size_t i = 0; i < assignments.size(); ++i) {
    a(assignments[i], static_cast<Index>(i)) = 1.0;
  }
  return a;
}

Matrix soft_aggregate(const Matrix& patch_tokens, const IndexList& anchors,
                      const PartitionSpec& spec, ForwardCache* cache) {
  const Index n = patch_tokens.rows();
  const Index k = static_cast<Index>(anchors.size());
  if (n < 2) throw PartitionError("soft_aggregate: need at least two patches");

  Matrix dis(k, n);
  Matrix ratio(k, n);
  Matrix attention(k, n);
  IndexList argmin_col(static_cast<std::size_t>(k));
  IndexList argmax_col(static_cast<std::size_t>(k));
  std::vector<char> degenerate(static_cast<std::size_t>(k), 0);

  for (Index c = 0; c < k; ++c) {
    const Index a = anchors[static_cast<std::size_t>(c)];
    dis.row(c) = (patch_tokens.rowwise() - patch_tokens.row(a)).rowwise().norm().transpose();
    Index imin = 0, imax = 0;
    const double mn = dis.row(c).minCoeff(&imin);
    const double mx = dis.row(c).maxCoeff(&imax);
    argmin_col[static_cast<std::size_t>(c)] = imin;
    argmax_col[static_cast<std::size_t>(c)] = imax;
    if (mx == mn) {
      // All patches equidistant from the anchor: continuous limit of the
      // cosine weighting is a uniform row.
      degenerate[static_cast<std::size_t>(c)] = 1;
      ratio.row(c).setZero();
      attention.row(c).setConstant(spec.alpha + spec.beta);
      continue;
    }
    for (Index i = 0; i < n; ++i) {
      const double r = (dis(c, i) - mn) / (mx - mn);
      ratio(c, i) = r;
      attention(c, i) = spec.alpha * quarter_cos(r) + spec.beta;
    }
  }

  Matrix rho = aggregate(patch_tokens, attention);
  if (cache != nullptr) {
    cache->spec = spec;
    cache->patch_tokens = patch_tokens;
    cache->attention = attention;
    cache->row_sum = attention.rowwise().sum();
    cache->rho = rho;
    cache->soft = true;
    cache->anchors = anchors;
    cache->dis = std::move(dis);
    cache->ratio = std::move(ratio);
    cache->argmin_col = std::move(argmin_col);
    cache->argmax_col = std::move(argmax_col);
    cache->degenerate = std::move(degenerate);
  }
  return rho;
}

PartFeatures asa_forward(const Matrix& patch_tokens, const PartitionSpec& spec,
                         ForwardCache* cache) {
  spec.validate();
  const Index n = patch_tokens.rows();
  if (spec.num_parts > n) {
    throw PartitionError("asa_forward: num_parts exceeds patch count");
  }
  if (!patch_tokens.allFinite()) {
    throw NumericError("asa_forward: non-finite patch features");
  }

  const Vector q = compress(patch_tokens);
  PartFeatures out;

  if (spec.strategy == Strategy::kSoftKmeans || spec.strategy == Strategy::kHardKmeans) {
    const Vector init = seed_centers(q, spec.num_parts);
    const KmeansResult km =
        kmeans_1d(q, spec.num_parts, init, spec.kmeans_max_iters, spec.kmeans_tol);
    out.assignments = km.assignments;
    out.kmeans_converged = km.converged;
    out.anchor_indices = select_anchors(q, km.centers);
    if (spec.strategy == Strategy::kSoftKmeans) {
      out.rho = soft_aggregate(patch_tokens, out.anchor_indices, spec, cache);
      out.attention = cache != nullptr
                          ? cache->attention
                          : compute_attention(patch_tokens, out.anchor_indices, spec);
      return out;
    }
    out.attention = one_hot_attention(km.assignments, spec.num_parts);
  } else {
    out.assignments = hard_partition_uniform(q, spec.num_parts);
    out.attention = one_hot_attention(out.assignments, spec.num_parts);
    // Representative patch per group: q nearest to the group mean.
    Vector group_mean = Vector::Zero(spec.num_parts);
    Vector group_count = Vector::Zero(spec.num_parts);
    for (Index i = 0; i < n; ++i) {
      group_mean[out.assignments[static_cast<std::size_t>(i)]] += q[i];
      group_count[out.assignments[static_cast<std::size_t>(i)]] += 1.0;
    }
    group_mean.array() /= group_count.array();
    out.anchor_indices = select_anchors(q, group_mean);
  }

  out.rho = aggregate(patch_tokens, out.attention);
  if (cache != nullptr) {
    cache->spec = spec;
    cache->patch_tokens = patch_tokens;
    cache->attention = out.attention;
    cache->row_sum = out.attention.rowwise().sum();
    cache->rho = out.rho;
    cache->soft = false;
  }
  return out;
}

Matrix asa_backward(const Matrix& drho, const ForwardCache& cache) {
  const Matrix& p = cache.patch_tokens;
  const Matrix& a = cache.attention;
  const Index n = p.rows();
  const Index k = a.rows();
  if (drho.rows() != k || drho.cols() != p.cols()) {
    throw PartitionError("asa_backward: drho shape mismatch");
  }

  // Aggregation path: rho_k = sum_i A_ki P_i / s_k, with A held where needed.
  Matrix weights = a;
  weights.array().colwise() /= cache.row_sum.array();
  Matrix dp = weights.transpose() * drho;  // N x D

  const bool attention_path = cache.soft &&
                              cache.spec.attention_grad == AttentionGrad::kFlow;
  if (!attention_path) return dp;

  // d(loss)/dA_ki = (P_i - rho_k) . drho_k / s_k
  Matrix da = p * drho.transpose();  // N x K; entry (i, k) = P_i . drho_k
  const Vector rho_dot = (cache.rho.array() * drho.array()).rowwise().sum();
  Matrix dloss_da(k, n);
  for (Index c = 0; c < k; ++c) {
    dloss_da.row(c) = (da.col(c).transpose().array() - rho_dot[c]) / cache.row_sum[c];
  }

  // Attention -> normalized distance ratio r.
  Matrix ddis = Matrix::Zero(k, n);
  for (Index c = 0; c < k; ++c) {
    if (cache.degenerate[static_cast<std::size_t>(c)]) continue;
    const Index imin = cache.argmin_col[static_cast<std::size_t>(c)];
    const Index imax = cache.argmax_col[static_cast<std::size_t>(c)];
    const double mn = cache.dis(c, imin);
    const double mx = cache.dis(c, imax);
    const double span = mx - mn;
    for (Index i = 0; i < n; ++i) {
      const double g_r = dloss_da(c, i) *
                         (-cache.spec.alpha * kHalfPi *
                          std::sin(cache.ratio(c, i) * kHalfPi));
      if (g_r == 0.0) continue;
      // r = (dis_i - dis_min) / (dis_max - dis_min); the min/max picks are
      // treated as fixed columns. Contributions cancel exactly when i is
      // itself the min or max column.
      ddis(c, i) += g_r / span;
      ddis(c, imin) += g_r * (cache.dis(c, i) - mx) / (span * span);
      ddis(c, imax) += g_r * (mn - cache.dis(c, i)) / (span * span);
    }
  }

  // Distances -> patch rows. dis_ki = ||P_i - P_anchor||.
  for (Index c = 0; c < k; ++c) {
    if (cache.degenerate[static_cast<std::size_t>(c)]) continue;
    const Index anchor = cache.anchors[static_cast<std::size_t>(c)];
    for (Index i = 0; i < n; ++i) {
      const double g = ddis(c, i);
      if (g == 0.0 || cache.dis(c, i) <= 0.0) continue;
      const auto direction = (p.row(i) - p.row(anchor)) / cache.dis(c, i);
      dp.row(i) += g * direction;
      dp.row(anchor) -= g * direction;
    }
  }
  return dp;
}

}  // namespace asaloc::asa
