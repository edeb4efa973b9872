#include "asaloc/heads.hpp"

namespace asaloc {

HeadStack::HeadStack(const HeadConfig& cfg, Index input_dim, Index num_parts, Rng& rng)
    : cfg_(cfg) {
  cfg_.validate();
  heads_.resize(static_cast<std::size_t>(num_parts + 1));
  for (auto& head : heads_) {
    head.add.init(input_dim, cfg_.additive_dim, rng);
    head.bn.init(cfg_.additive_dim);
    head.drop.prob = cfg_.dropout;
    head.cls.init(cfg_.additive_dim, cfg_.num_classes, rng, 0.02, /*bias=*/false);
  }
}

HeadOutputs HeadStack::forward(const std::vector<Matrix>& inputs, Cache& c, bool training,
                               Rng* dropout_rng) {
  if (static_cast<Index>(inputs.size()) != num_heads()) {
    throw ConfigError("heads: expected " + std::to_string(num_heads()) + " input matrices");
  }
  HeadOutputs out;
  out.f.resize(inputs.size());
  out.z.resize(inputs.size());
  c.heads.resize(inputs.size());
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    auto& head = heads_[h];
    auto& hc = c.heads[h];
    const Matrix a = head.add.forward(inputs[h], hc.add_c);
    hc.pre_act = head.bn.forward(a, hc.bn_c, training);
    Matrix f = nn::gelu(hc.pre_act);
    f = head.drop.forward(f, hc.drop_c, training, dropout_rng);
    out.f[h] = f;
    out.z[h] = head.cls.forward(f, hc.cls_c);
    if (!out.z[h].allFinite()) {
      throw NumericError("heads: non-finite logits in head " + std::to_string(h));
    }
  }
  return out;
}

std::vector<Matrix> HeadStack::backward(const std::vector<Matrix>& df,
                                        const std::vector<Matrix>& dz, const Cache& c) {
  std::vector<Matrix> dinputs(heads_.size());
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    auto& head = heads_[h];
    const auto& hc = c.heads[h];
    Matrix dfeat = Matrix::Zero(hc.pre_act.rows(), hc.pre_act.cols());
    if (h < dz.size() && dz[h].size() > 0) dfeat += head.cls.backward(dz[h], hc.cls_c);
    if (h < df.size() && df[h].size() > 0) dfeat += df[h];
    dfeat = head.drop.backward(dfeat, hc.drop_c);
    const Matrix dpre = dfeat.cwiseProduct(nn::gelu_grad(hc.pre_act));
    const Matrix da = head.bn.backward(dpre, hc.bn_c);
    dinputs[h] = head.add.backward(da, hc.add_c);
  }
  return dinputs;
}

void HeadStack::zero_grad() {
  for (auto& head : heads_) {
    head.add.zero_grad();
    head.bn.zero_grad();
    head.cls.zero_grad();
  }
}

void HeadStack::collect(nn::ParamRefs& params) {
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    const std::string prefix = "heads." + std::to_string(h);
    heads_[h].add.collect(prefix + ".add", nn::ParamGroup::kNew, params);
    heads_[h].bn.collect(prefix + ".bn", nn::ParamGroup::kNew, params);
    heads_[h].cls.collect(prefix + ".cls", nn::ParamGroup::kNew, params);
  }
}

void HeadStack::collect_buffers(nn::ParamRefs& buffers) {
  for (std::size_t h = 0; h < heads_.size(); ++h) {
    heads_[h].bn.collect_buffers("heads." + std::to_string(h) + ".bn", buffers);
  }
}

}  // namespace asaloc
