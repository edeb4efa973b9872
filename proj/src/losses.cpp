#include "asaloc/losses.hpp"

#include <cmath>
#include <limits>

namespace asaloc {

namespace {

Eigen::RowVectorXd softmax_row(const Eigen::Ref<const Eigen::RowVectorXd>& logits) {
  const double mx = logits.maxCoeff();
  Eigen::RowVectorXd p = (logits.array() - mx).exp();
  p /= p.sum();
  return p;
}

void check_labels(const std::vector<Matrix>& z, const std::vector<int>& labels) {
  if (z.empty()) throw ConfigError("ce_loss: no heads");
  const Index batch = z.front().rows();
  const Index classes = z.front().cols();
  if (static_cast<Index>(labels.size()) != batch) {
    throw ConfigError("ce_loss: label count does not match batch size");
  }
  for (int y : labels) {
    if (y < 0 || y >= classes) {
      throw ConfigError("ce_loss: label " + std::to_string(y) + " outside [0, " +
                        std::to_string(classes) + ")");
    }
  }
}

}  // namespace

double cross_entropy_row(const Eigen::Ref<const Eigen::RowVectorXd>& logits, Index label) {
  const double mx = logits.maxCoeff();
  const double log_sum = std::log((logits.array() - mx).exp().sum());
  return -(logits[label] - mx - log_sum);
}

double ce_loss(const std::vector<Matrix>& z, const std::vector<int>& labels,
               const std::vector<Index>& heads) {
  check_labels(z, labels);
  const Index batch = z.front().rows();
  double total = 0.0;
  for (Index h : heads) {
    for (Index r = 0; r < batch; ++r) {
      total += cross_entropy_row(z[static_cast<std::size_t>(h)].row(r),
                                 labels[static_cast<std::size_t>(r)]);
    }
  }
  return total / (static_cast<double>(heads.size()) * static_cast<double>(batch));
}

CeResult ce_loss_with_grad(const std::vector<Matrix>& z, const std::vector<int>& labels,
                           const std::vector<Index>& heads) {
  check_labels(z, labels);
  const Index batch = z.front().rows();
  const double scale = 1.0 / (static_cast<double>(heads.size()) * static_cast<double>(batch));

  CeResult out;
  out.dz.resize(z.size());
  for (std::size_t h = 0; h < z.size(); ++h) out.dz[h] = Matrix::Zero(z[h].rows(), z[h].cols());

  for (Index h : heads) {
    const Matrix& zh = z[static_cast<std::size_t>(h)];
    Matrix& dzh = out.dz[static_cast<std::size_t>(h)];
    for (Index r = 0; r < batch; ++r) {
      const int y = labels[static_cast<std::size_t>(r)];
      out.loss += cross_entropy_row(zh.row(r), y) * scale;
      Eigen::RowVectorXd p = softmax_row(zh.row(r));
      p[y] -= 1.0;
      dzh.row(r) += p * scale;
    }
  }
  return out;
}

double triplet_loss(const std::vector<Vector>& f_anchor, const std::vector<Vector>& f_pos,
                    const std::vector<Vector>& f_neg, double margin) {
  if (f_anchor.size() != f_pos.size() || f_anchor.size() != f_neg.size() || f_anchor.empty()) {
    throw ConfigError("triplet_loss: per-head feature lists must be non-empty and aligned");
  }
  double total = 0.0;
  for (std::size_t h = 0; h < f_anchor.size(); ++h) {
    const double dp = (f_anchor[h] - f_pos[h]).norm();
    const double dn = (f_anchor[h] - f_neg[h]).norm();
    total += std::max(dp - dn + margin, 0.0);
  }
  return total / static_cast<double>(f_anchor.size());
}

namespace {

struct MiningContext {
  Index batch = 0;
  std::vector<Index> positive;                // per anchor
  std::vector<std::vector<Index>> negatives;  // per anchor, candidate list
};

MiningContext build_mining(const std::vector<int>& locations, const std::vector<View>& views) {
  MiningContext ctx;
  ctx.batch = static_cast<Index>(locations.size());
  if (views.size() != locations.size()) {
    throw ConfigError("triplet: locations/views size mismatch");
  }
  ctx.positive.assign(static_cast<std::size_t>(ctx.batch), -1);
  ctx.negatives.resize(static_cast<std::size_t>(ctx.batch));
  for (Index a = 0; a < ctx.batch; ++a) {
    for (Index j = 0; j < ctx.batch; ++j) {
      if (j == a || views[static_cast<std::size_t>(j)] == views[static_cast<std::size_t>(a)]) continue;
      if (locations[static_cast<std::size_t>(j)] == locations[static_cast<std::size_t>(a)]) {
        if (ctx.positive[static_cast<std::size_t>(a)] < 0) {
          ctx.positive[static_cast<std::size_t>(a)] = j;
        }
      } else {
        ctx.negatives[static_cast<std::size_t>(a)].push_back(j);
      }
    }
    if (ctx.positive[static_cast<std::size_t>(a)] < 0) {
      throw DataError("triplet: sample " + std::to_string(a) +
                      " has no opposite-view sample of its location in the batch");
    }
    if (ctx.negatives[static_cast<std::size_t>(a)].empty()) {
      throw DataError("triplet: sample " + std::to_string(a) +
                      " has no opposite-view negatives in the batch");
    }
  }
  return ctx;
}

}  // namespace

double triplet_loss_batch(const std::vector<Matrix>& f, const std::vector<int>& locations,
                          const std::vector<View>& views, double margin,
                          const std::vector<Index>& heads) {
  return triplet_loss_batch_with_grad(f, locations, views, margin, heads).loss;
}

TripletResult triplet_loss_batch_with_grad(const std::vector<Matrix>& f,
                                           const std::vector<int>& locations,
                                           const std::vector<View>& views, double margin,
                                           const std::vector<Index>& heads) {
  const MiningContext ctx = build_mining(locations, views);
  const double scale = 1.0 / (static_cast<double>(heads.size()) * static_cast<double>(ctx.batch));

  TripletResult out;
  out.df.resize(f.size());
  for (std::size_t h = 0; h < f.size(); ++h) out.df[h] = Matrix::Zero(f[h].rows(), f[h].cols());

  for (Index h : heads) {
    const Matrix& fh = f[static_cast<std::size_t>(h)];
    Matrix& dfh = out.df[static_cast<std::size_t>(h)];
    for (Index a = 0; a < ctx.batch; ++a) {
      const Index p = ctx.positive[static_cast<std::size_t>(a)];
      const double dp = (fh.row(a) - fh.row(p)).norm();

      Index n = -1;
      double dn = std::numeric_limits<double>::infinity();
      for (Index cand : ctx.negatives[static_cast<std::size_t>(a)]) {
        const double d = (fh.row(a) - fh.row(cand)).norm();
        if (d < dn) {
          dn = d;
          n = cand;
        }
      }

      const double hinge = dp - dn + margin;
      if (hinge <= 0.0) continue;
      out.loss += hinge * scale;
      if (dp > 0.0) {
        const auto dir_p = (fh.row(a) - fh.row(p)) / dp;
        dfh.row(a) += scale * dir_p;
        dfh.row(p) -= scale * dir_p;
      }
      if (dn > 0.0) {
        const auto dir_n = (fh.row(a) - fh.row(n)) / dn;
        dfh.row(a) -= scale * dir_n;
        dfh.row(n) += scale * dir_n;
      }
    }
  }
  return out;
}

}  // namespace asaloc
