#pragma once

#include "asaloc/rng.hpp"
#include "asaloc/types.hpp"

#include <string>
#include <vector>

namespace asaloc::nn {

Matrix gelu(const Matrix& x);
Matrix gelu_grad(const Matrix& x);  // elementwise derivative at pre-activation x
Matrix softmax_rows(const Matrix& scores);
Matrix softmax_rows_backward(const Matrix& probs, const Matrix& dprobs);

enum class ParamGroup { kBackbone, kNew };

/// Named view over one parameter tensor and its gradient buffer.
struct ParamRef {
  std::string name;
  double* value = nullptr;
  double* grad = nullptr;  // null for non-trainable buffers
  Index rows = 0;
  Index cols = 0;
  ParamGroup group = ParamGroup::kBackbone;

  Index size() const { return rows * cols; }
};

using ParamRefs = std::vector<ParamRef>;

/// y = x W + b with x of shape (rows, in).
struct Dense {
  Matrix w;  // in x out
  Vector b;  // out (unused when has_bias is false)
  Matrix gw;
  Vector gb;
  bool has_bias = true;

  void init(Index in, Index out, Rng& rng, double weight_std = 0.02, bool bias = true);

  struct Cache {
    Matrix x;
  };
  Matrix apply(const Matrix& x) const;
  Matrix forward(const Matrix& x, Cache& c) const;
  Matrix backward(const Matrix& dy, const Cache& c);

  void zero_grad();
  void collect(const std::string& prefix, ParamGroup g, ParamRefs& out);
};

/// Per-row standardization over the feature dimension with affine output.
struct LayerNorm {
  Vector gamma, beta;
  Vector ggamma, gbeta;
  double eps = 1e-6;

  void init(Index dim);

  struct Cache {
    Matrix xhat;
    Vector inv_std;  // one per row
  };
  Matrix apply(const Matrix& x) const;
  Matrix forward(const Matrix& x, Cache& c) const;
  Matrix backward(const Matrix& dy, const Cache& c);

  void zero_grad();
  void collect(const std::string& prefix, ParamGroup g, ParamRefs& out);
};

/// Per-feature standardization over the batch dimension. Training mode uses
/// batch statistics and updates running estimates; eval mode uses the
/// running estimates.
struct BatchNorm1d {
  Vector gamma, beta;
  Vector running_mean, running_var;
  Vector ggamma, gbeta;
  double eps = 1e-5;
  double momentum = 0.1;

  void init(Index dim);

  struct Cache {
    Matrix xhat;
    Vector inv_std;  // one per feature
    bool training = false;
  };
  Matrix forward(const Matrix& x, Cache& c, bool training);
  Matrix backward(const Matrix& dy, const Cache& c);

  void zero_grad();
  void collect(const std::string& prefix, ParamGroup g, ParamRefs& out);
  void collect_buffers(const std::string& prefix, ParamRefs& out);
};

struct Dropout {
  double prob = 0.0;

  struct Cache {
    Matrix mask;
    bool active = false;
  };
  Matrix forward(const Matrix& x, Cache& c, bool training, Rng* rng) const;
  Matrix backward(const Matrix& dy, const Cache& c) const;
};

/// Multi-head self-attention over a (tokens x dim) sequence.
struct Mhsa {
  Index num_heads = 1;
  Dense qkv;   // dim -> 3*dim
  Dense proj;  // dim -> dim

  void init(Index dim, Index heads, Rng& rng);

  struct Cache {
    Dense::Cache qkv_c, proj_c;
    Matrix q, k, v;               // tokens x dim each
    std::vector<Matrix> probs;    // per head: tokens x tokens
    Matrix concat;                // tokens x dim
  };
  Matrix forward(const Matrix& x, Cache& c) const;
  Matrix backward(const Matrix& dy, const Cache& c);

  void zero_grad();
  void collect(const std::string& prefix, ParamGroup g, ParamRefs& out);
};

/// Two dense layers, each followed by a GELU.
struct Mlp {
  Dense fc1, fc2;

  void init(Index dim, Index hidden, Rng& rng);

  struct Cache {
    Dense::Cache fc1_c, fc2_c;
    Matrix pre1, pre2;  // pre-activation values
  };
  Matrix forward(const Matrix& x, Cache& c) const;
  Matrix backward(const Matrix& dy, const Cache& c);

  void zero_grad();
  void collect(const std::string& prefix, ParamGroup g, ParamRefs& out);
};

/// Pre-norm transformer block: x + MHSA(LN(x)), then + MLP(LN(.)).
struct EncoderBlock {
  LayerNorm ln1, ln2;
  Mhsa attn;
  Mlp mlp;

  void init(Index dim, Index heads, Index mlp_hidden, Rng& rng);

  struct Cache {
    LayerNorm::Cache ln1_c, ln2_c;
    Mhsa::Cache attn_c;
    Mlp::Cache mlp_c;
  };
  Matrix forward(const Matrix& x, Cache& c) const;
  Matrix backward(const Matrix& dy, const Cache& c);

  void zero_grad();
  void collect(const std::string& prefix, ParamGroup g, ParamRefs& out);
};

}  // namespace asaloc::nn
