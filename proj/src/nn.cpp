#include "asaloc/nn.hpp"

#include <cmath>
#include <numbers>

namespace asaloc::nn {

namespace {

constexpr double kInvSqrt2 = std::numbers::sqrt2 / 2.0;
const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

}  // namespace

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) { return 0.5 * v * (1.0 + std::erf(v * kInvSqrt2)); });
}

Matrix gelu_grad(const Matrix& x) {
  return x.unaryExpr([](double v) {
    const double phi = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
    const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
    return phi + v * pdf;
  });
}

Matrix softmax_rows(const Matrix& scores) {
  Matrix p(scores.rows(), scores.cols());
  for (Index r = 0; r < scores.rows(); ++r) {
    const double mx = scores.row(r).maxCoeff();
    p.row(r) = (scores.row(r).array() - mx).exp();
    p.row(r) /= p.row(r).sum();
  }
  return p;
}

Matrix softmax_rows_backward(const Matrix& probs, const Matrix& dprobs) {
  Matrix ds(probs.rows(), probs.cols());
  for (Index r = 0; r < probs.rows(); ++r) {
    const double dot = probs.row(r).dot(dprobs.row(r));
    ds.row(r) = probs.row(r).array() * (dprobs.row(r).array() - dot);
  }
  return ds;
}

// ---------------------------------------------------------------- Dense

void Dense::init(Index in, Index out, Rng& rng, double weight_std, bool bias) {
  has_bias = bias;
  w.resize(in, out);
  for (Index j = 0; j < out; ++j) {
    for (Index i = 0; i < in; ++i) w(i, j) = rng.truncated_normal(weight_std);
  }
  b = has_bias ? Vector::Zero(out) : Vector();
  zero_grad();
}

Matrix Dense::apply(const Matrix& x) const {
  Matrix y = x * w;
  if (has_bias) y.rowwise() += b.transpose();
  return y;
}

Matrix Dense::forward(const Matrix& x, Cache& c) const {
  c.x = x;
  return apply(x);
}

Matrix Dense::backward(const Matrix& dy, const Cache& c) {
  gw.noalias() += c.x.transpose() * dy;
  if (has_bias) gb += dy.colwise().sum().transpose();
  return dy * w.transpose();
}

void Dense::zero_grad() {
  gw = Matrix::Zero(w.rows(), w.cols());
  gb = has_bias ? Vector::Zero(b.size()) : Vector();
}

void Dense::collect(const std::string& prefix, ParamGroup g, ParamRefs& out) {
  out.push_back({prefix + ".weight", w.data(), gw.data(), w.rows(), w.cols(), g});
  if (has_bias) out.push_back({prefix + ".bias", b.data(), gb.data(), b.size(), 1, g});
}

// ------------------------------------------------------------- LayerNorm

void LayerNorm::init(Index dim) {
  gamma = Vector::Ones(dim);
  beta = Vector::Zero(dim);
  zero_grad();
}

Matrix LayerNorm::apply(const Matrix& x) const {
  Cache c;
  return forward(x, c);
}

Matrix LayerNorm::forward(const Matrix& x, Cache& c) const {
  const Index d = x.cols();
  c.xhat.resize(x.rows(), d);
  c.inv_std.resize(x.rows());
  for (Index r = 0; r < x.rows(); ++r) {
    const double mean = x.row(r).mean();
    const double var = (x.row(r).array() - mean).square().sum() / static_cast<double>(d);
    const double inv = 1.0 / std::sqrt(var + eps);
    c.inv_std[r] = inv;
    c.xhat.row(r) = (x.row(r).array() - mean) * inv;
  }
  Matrix y = c.xhat.array().rowwise() * gamma.transpose().array();
  y.array().rowwise() += beta.transpose().array();
  return y;
}

Matrix LayerNorm::backward(const Matrix& dy, const Cache& c) {
  ggamma += (dy.array() * c.xhat.array()).colwise().sum().transpose().matrix();
  gbeta += dy.colwise().sum().transpose();

  Matrix dxhat = dy.array().rowwise() * gamma.transpose().array();
  Matrix dx(dy.rows(), dy.cols());
  for (Index r = 0; r < dy.rows(); ++r) {
    const double mean_dxhat = dxhat.row(r).mean();
    const double mean_dot = (dxhat.row(r).array() * c.xhat.row(r).array()).mean();
    dx.row(r) = c.inv_std[r] *
                (dxhat.row(r).array() - mean_dxhat - c.xhat.row(r).array() * mean_dot);
  }
  return dx;
}

void LayerNorm::zero_grad() {
  ggamma = Vector::Zero(gamma.size());
  gbeta = Vector::Zero(beta.size());
}

void LayerNorm::collect(const std::string& prefix, ParamGroup g, ParamRefs& out) {
  out.push_back({prefix + ".gamma", gamma.data(), ggamma.data(), gamma.size(), 1, g});
  out.push_back({prefix + ".beta", beta.data(), gbeta.data(), beta.size(), 1, g});
}

// ----------------------------------------------------------- BatchNorm1d

void BatchNorm1d::init(Index dim) {
  gamma = Vector::Ones(dim);
  beta = Vector::Zero(dim);
  running_mean = Vector::Zero(dim);
  running_var = Vector::Ones(dim);
  zero_grad();
}

Matrix BatchNorm1d::forward(const Matrix& x, Cache& c, bool training) {
  const Index n = x.rows();
  c.training = training;
  c.xhat.resize(x.rows(), x.cols());
  c.inv_std.resize(x.cols());
  if (training) {
    const Vector mean = x.colwise().mean().transpose();
    Vector var(x.cols());
    for (Index f = 0; f < x.cols(); ++f) {
      var[f] = (x.col(f).array() - mean[f]).square().sum() / static_cast<double>(n);
    }
    for (Index f = 0; f < x.cols(); ++f) {
      c.inv_std[f] = 1.0 / std::sqrt(var[f] + eps);
      c.xhat.col(f) = (x.col(f).array() - mean[f]) * c.inv_std[f];
    }
    running_mean = (1.0 - momentum) * running_mean + momentum * mean;
    if (n > 1) {
      const Vector unbiased = var * (static_cast<double>(n) / static_cast<double>(n - 1));
      running_var = (1.0 - momentum) * running_var + momentum * unbiased;
    }
  } else {
    for (Index f = 0; f < x.cols(); ++f) {
      c.inv_std[f] = 1.0 / std::sqrt(running_var[f] + eps);
      c.xhat.col(f) = (x.col(f).array() - running_mean[f]) * c.inv_std[f];
    }
  }
  Matrix y = c.xhat.array().rowwise() * gamma.transpose().array();
  y.array().rowwise() += beta.transpose().array();
  return y;
}

Matrix BatchNorm1d::backward(const Matrix& dy, const Cache& c) {
  ggamma += (dy.array() * c.xhat.array()).colwise().sum().transpose().matrix();
  gbeta += dy.colwise().sum().transpose();

  Matrix dxhat = dy.array().rowwise() * gamma.transpose().array();
  if (!c.training) {
    // Running statistics are constants in eval mode.
    return dxhat.array().rowwise() * c.inv_std.transpose().array();
  }
  const double n = static_cast<double>(dy.rows());
  Matrix dx(dy.rows(), dy.cols());
  for (Index f = 0; f < dy.cols(); ++f) {
    const double sum_dxhat = dxhat.col(f).sum();
    const double dot = (dxhat.col(f).array() * c.xhat.col(f).array()).sum();
    dx.col(f) = c.inv_std[f] *
                (dxhat.col(f).array() - sum_dxhat / n - c.xhat.col(f).array() * (dot / n));
  }
  return dx;
}

void BatchNorm1d::zero_grad() {
  ggamma = Vector::Zero(gamma.size());
  gbeta = Vector::Zero(beta.size());
}

void BatchNorm1d::collect(const std::string& prefix, ParamGroup g, ParamRefs& out) {
  out.push_back({prefix + ".gamma", gamma.data(), ggamma.data(), gamma.size(), 1, g});
  out.push_back({prefix + ".beta", beta.data(), gbeta.data(), beta.size(), 1, g});
}

void BatchNorm1d::collect_buffers(const std::string& prefix, ParamRefs& out) {
  out.push_back({prefix + ".running_mean", running_mean.data(), nullptr,
                 running_mean.size(), 1, ParamGroup::kNew});
  out.push_back({prefix + ".running_var", running_var.data(), nullptr,
                 running_var.size(), 1, ParamGroup::kNew});
}

// --------------------------------------------------------------- Dropout

Matrix Dropout::forward(const Matrix& x, Cache& c, bool training, Rng* rng) const {
  c.active = training && prob > 0.0;
  if (!c.active) return x;
  if (rng == nullptr) throw ConfigError("dropout: rng required in training mode");
  const double keep = 1.0 - prob;
  c.mask.resize(x.rows(), x.cols());
  for (Index j = 0; j < x.cols(); ++j) {
    for (Index i = 0; i < x.rows(); ++i) {
      c.mask(i, j) = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
    }
  }
  return x.cwiseProduct(c.mask);
}

Matrix Dropout::backward(const Matrix& dy, const Cache& c) const {
  if (!c.active) return dy;
  return dy.cwiseProduct(c.mask);
}

// ------------------------------------------------------------------ Mhsa

void Mhsa::init(Index dim, Index heads, Rng& rng) {
  num_heads = heads;
  qkv.init(dim, 3 * dim, rng);
  proj.init(dim, dim, rng);
}

Matrix Mhsa::forward(const Matrix& x, Cache& c) const {
  const Index t = x.rows();
  const Index d = x.cols();
  const Index dh = d / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Matrix fused = qkv.forward(x, c.qkv_c);
  c.q = fused.leftCols(d);
  c.k = fused.middleCols(d, d);
  c.v = fused.rightCols(d);

  c.probs.resize(static_cast<std::size_t>(num_heads));
  c.concat.resize(t, d);
  for (Index h = 0; h < num_heads; ++h) {
    const auto qh = c.q.middleCols(h * dh, dh);
    const auto kh = c.k.middleCols(h * dh, dh);
    const auto vh = c.v.middleCols(h * dh, dh);
    const Matrix scores = qh * kh.transpose() * scale;
    c.probs[static_cast<std::size_t>(h)] = softmax_rows(scores);
    c.concat.middleCols(h * dh, dh) = c.probs[static_cast<std::size_t>(h)] * vh;
  }
  return proj.forward(c.concat, c.proj_c);
}

Matrix Mhsa::backward(const Matrix& dy, const Cache& c) {
  const Index d = dy.cols();
  const Index dh = d / num_heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

  const Matrix dconcat = proj.backward(dy, c.proj_c);
  Matrix dfused(dy.rows(), 3 * d);
  auto dq = dfused.leftCols(d);
  auto dk = dfused.middleCols(d, d);
  auto dv = dfused.rightCols(d);

  for (Index h = 0; h < num_heads; ++h) {
    const auto qh = c.q.middleCols(h * dh, dh);
    const auto kh = c.k.middleCols(h * dh, dh);
    const auto vh = c.v.middleCols(h * dh, dh);
    const Matrix& probs = c.probs[static_cast<std::size_t>(h)];
    const auto doh = dconcat.middleCols(h * dh, dh);

    const Matrix dprobs = doh * vh.transpose();
    dv.middleCols(h * dh, dh) = probs.transpose() * doh;
    const Matrix dscores = softmax_rows_backward(probs, dprobs);
    dq.middleCols(h * dh, dh) = dscores * kh * scale;
    dk.middleCols(h * dh, dh) = dscores.transpose() * qh * scale;
  }
  return qkv.backward(dfused, c.qkv_c);
}

void Mhsa::zero_grad() {
  qkv.zero_grad();
  proj.zero_grad();
}

void Mhsa::collect(const std::string& prefix, ParamGroup g, ParamRefs& out) {
  qkv.collect(prefix + ".qkv", g, out);
  proj.collect(prefix + ".proj", g, out);
}

// ------------------------------------------------------------------- Mlp

void Mlp::init(Index dim, Index hidden, Rng& rng) {
  fc1.init(dim, hidden, rng);
  fc2.init(hidden, dim, rng);
}

Matrix Mlp::forward(const Matrix& x, Cache& c) const {
  c.pre1 = fc1.forward(x, c.fc1_c);
  const Matrix h = gelu(c.pre1);
  c.pre2 = fc2.forward(h, c.fc2_c);
  return gelu(c.pre2);
}

Matrix Mlp::backward(const Matrix& dy, const Cache& c) {
  const Matrix dpre2 = dy.cwiseProduct(gelu_grad(c.pre2));
  const Matrix dh = fc2.backward(dpre2, c.fc2_c);
  const Matrix dpre1 = dh.cwiseProduct(gelu_grad(c.pre1));
  return fc1.backward(dpre1, c.fc1_c);
}

void Mlp::zero_grad() {
  fc1.zero_grad();
  fc2.zero_grad();
}

void Mlp::collect(const std::string& prefix, ParamGroup g, ParamRefs& out) {
  fc1.collect(prefix + ".fc1", g, out);
  fc2.collect(prefix + ".fc2", g, out);
}

// ---------------------------------------------------------- EncoderBlock

void EncoderBlock::init(Index dim, Index heads, Index mlp_hidden, Rng& rng) {
  ln1.init(dim);
  ln2.init(dim);
  attn.init(dim, heads, rng);
  mlp.init(dim, mlp_hidden, rng);
}

Matrix EncoderBlock::forward(const Matrix& x, Cache& c) const {
  const Matrix attn_out = attn.forward(ln1.forward(x, c.ln1_c), c.attn_c);
  const Matrix mid = x + attn_out;
  const Matrix mlp_out = mlp.forward(ln2.forward(mid, c.ln2_c), c.mlp_c);
  return mid + mlp_out;
}

Matrix EncoderBlock::backward(const Matrix& dy, const Cache& c) {
  const Matrix dmid = dy + ln2.backward(mlp.backward(dy, c.mlp_c), c.ln2_c);
  return dmid + ln1.backward(attn.backward(dmid, c.attn_c), c.ln1_c);
}

void EncoderBlock::zero_grad() {
  ln1.zero_grad();
  ln2.zero_grad();
  attn.zero_grad();
  mlp.zero_grad();
}

void EncoderBlock::collect(const std::string& prefix, ParamGroup g, ParamRefs& out) {
  ln1.collect(prefix + ".ln1", g, out);
  attn.collect(prefix + ".attn", g, out);
  ln2.collect(prefix + ".ln2", g, out);
  mlp.collect(prefix + ".mlp", g, out);
}

}  // namespace asaloc::nn
