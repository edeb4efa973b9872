#pragma once

#include "asaloc/types.hpp"

#include <vector>

namespace asaloc {

/// Numerically stable -log softmax(z)[y] for one logit row.
double cross_entropy_row(const Eigen::Ref<const Eigen::RowVectorXd>& logits, Index label);

struct CeResult {
  double loss = 0.0;
  std::vector<Matrix> dz;  // same shapes as z
};

/// Mean over heads and batch rows of softmax cross entropy. `heads` lists
/// the head indices included in the average.
double ce_loss(const std::vector<Matrix>& z, const std::vector<int>& labels,
               const std::vector<Index>& heads);
CeResult ce_loss_with_grad(const std::vector<Matrix>& z, const std::vector<int>& labels,
                           const std::vector<Index>& heads);

/// Per-head hinge on Euclidean distances, averaged over the given heads:
/// mean_k max(d(f_k, p_k) - d(f_k, n_k) + margin, 0).
double triplet_loss(const std::vector<Vector>& f_anchor, const std::vector<Vector>& f_pos,
                    const std::vector<Vector>& f_neg, double margin);

struct TripletResult {
  double loss = 0.0;
  std::vector<Matrix> df;  // same shapes as f
};

/// In-batch triplet loss with hardest-negative mining. For each sample as
/// anchor: the positive is the same-location sample from the opposite view;
/// per head, the negative is the opposite-view sample of a different
/// location at smallest feature distance. Mining choices are treated as
/// constants by the gradient.
double triplet_loss_batch(const std::vector<Matrix>& f, const std::vector<int>& locations,
                          const std::vector<View>& views, double margin,
                          const std::vector<Index>& heads);
TripletResult triplet_loss_batch_with_grad(const std::vector<Matrix>& f,
                                           const std::vector<int>& locations,
                                           const std::vector<View>& views, double margin,
                                           const std::vector<Index>& heads);

inline double total_loss(double ce, double triplet) { return ce + triplet; }

}  // namespace asaloc
