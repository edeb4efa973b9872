#pragma once

#include "asaloc/config.hpp"
#include "asaloc/nn.hpp"
#include "asaloc/rng.hpp"
#include "asaloc/types.hpp"

#include <vector>

namespace asaloc {

/// Transformed features and class logits, one entry per head.
/// Head 0 is the global branch, heads 1..K the part branches.
struct HeadOutputs {
  std::vector<Matrix> f;  // batch x additive_dim
  std::vector<Matrix> z;  // batch x num_classes
};

/// Classification module: a separate additive layer (affine + batch
/// standardization + GELU) and bias-free classification layer per head.
class HeadStack {
 public:
  HeadStack(const HeadConfig& cfg, Index input_dim, Index num_parts, Rng& rng);

  Index num_heads() const { return static_cast<Index>(heads_.size()); }
  const HeadConfig& config() const { return cfg_; }

  struct Cache {
    struct PerHead {
      nn::Dense::Cache add_c, cls_c;
      nn::BatchNorm1d::Cache bn_c;
      Matrix pre_act;
      nn::Dropout::Cache drop_c;
    };
    std::vector<PerHead> heads;
  };

  /// One input matrix (batch x input_dim) per head, global first.
  HeadOutputs forward(const std::vector<Matrix>& inputs, Cache& c, bool training,
                      Rng* dropout_rng = nullptr);

  /// df/dz: upstream gradients per head (either may be empty matrices for a
  /// zero contribution). Returns d(loss)/d(input) per head.
  std::vector<Matrix> backward(const std::vector<Matrix>& df, const std::vector<Matrix>& dz,
                               const Cache& c);

  void zero_grad();
  void collect(nn::ParamRefs& params);
  void collect_buffers(nn::ParamRefs& buffers);

 private:
  struct Head {
    nn::Dense add;        // input_dim -> additive_dim
    nn::BatchNorm1d bn;   // over additive_dim
    nn::Dropout drop;
    nn::Dense cls;        // additive_dim -> num_classes, no bias
  };
  HeadConfig cfg_;
  std::vector<Head> heads_;
};

}  // namespace asaloc
