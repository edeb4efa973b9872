#include "asaloc/backbone.hpp"

#include <string>

namespace asaloc {

VisionTransformer::VisionTransformer(const BackboneConfig& cfg, Rng& rng) : cfg_(cfg) {
  cfg_.validate();
  patch_proj_.init(cfg_.patch_dim(), cfg_.embed_dim, rng);

  cls_token_.resize(1, cfg_.embed_dim);
  for (Index j = 0; j < cfg_.embed_dim; ++j) cls_token_(0, j) = rng.truncated_normal(0.02);

  pos_embed_.resize(cfg_.num_patches() + 1, cfg_.embed_dim);
  for (Index j = 0; j < pos_embed_.cols(); ++j) {
    for (Index i = 0; i < pos_embed_.rows(); ++i) {
      pos_embed_(i, j) = rng.truncated_normal(0.02);
    }
  }

  blocks_.resize(static_cast<std::size_t>(cfg_.depth));
  for (auto& block : blocks_) {
    block.init(cfg_.embed_dim, cfg_.num_heads, cfg_.mlp_hidden(), rng);
  }
  if (cfg_.final_layernorm) {
    final_ln_.emplace();
    final_ln_->init(cfg_.embed_dim);
  }
  zero_grad();
}

Matrix VisionTransformer::patches_from_image(const Image& image) const {
  if (image.height != cfg_.image_height || image.width != cfg_.image_width ||
      image.channels() != cfg_.channels) {
    throw ConfigError("backbone: image " + std::to_string(image.height) + "x" +
                      std::to_string(image.width) + "x" + std::to_string(image.channels()) +
                      " does not match configured " + std::to_string(cfg_.image_height) +
                      "x" + std::to_string(cfg_.image_width) + "x" +
                      std::to_string(cfg_.channels));
  }
  const Index p = cfg_.patch_size;
  Matrix patches(cfg_.num_patches(), cfg_.patch_dim());
  Index row = 0;
  for (Index gy = 0; gy < cfg_.grid_rows(); ++gy) {
    for (Index gx = 0; gx < cfg_.grid_cols(); ++gx) {
      Index col = 0;
      for (Index dy = 0; dy < p; ++dy) {
        for (Index dx = 0; dx < p; ++dx) {
          for (Index c = 0; c < cfg_.channels; ++c) {
            patches(row, col++) = image.chan[static_cast<std::size_t>(c)](gy * p + dy, gx * p + dx);
          }
        }
      }
      ++row;
    }
  }
  return patches;
}

Matrix VisionTransformer::embed(const Image& image) const {
  Cache c;
  return embed(image, c);
}

Matrix VisionTransformer::embed(const Image& image, Cache& c) const {
  const Matrix patches = patches_from_image(image);
  Matrix z0(cfg_.num_patches() + 1, cfg_.embed_dim);
  z0.row(0) = cls_token_.row(0);
  z0.bottomRows(cfg_.num_patches()) = patch_proj_.forward(patches, c.patch_c);
  z0 += pos_embed_;
  return z0;
}

TokenSet VisionTransformer::encode(const Matrix& z0) const {
  Cache c;
  return encode(z0, c);
}

TokenSet VisionTransformer::encode(const Matrix& z0, Cache& c) const {
  if (z0.rows() != cfg_.num_patches() + 1 || z0.cols() != cfg_.embed_dim) {
    throw ConfigError("backbone: Z_0 shape mismatch");
  }
  c.blocks.resize(blocks_.size());
  Matrix z = z0;
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    z = blocks_[l].forward(z, c.blocks[l]);
    if (!z.allFinite()) {
      throw NumericError("backbone: non-finite activations after encoder block " +
                         std::to_string(l));
    }
  }
  if (final_ln_) {
    c.final_ln_c.emplace();
    z = final_ln_->forward(z, *c.final_ln_c);
    if (!z.allFinite()) throw NumericError("backbone: non-finite activations after final layernorm");
  }
  TokenSet out;
  out.class_token = z.row(0).transpose();
  out.patch_tokens = z.bottomRows(cfg_.num_patches());
  return out;
}

TokenSet VisionTransformer::forward(const Image& image, Cache& c) const {
  return encode(embed(image, c), c);
}

Matrix VisionTransformer::backward_encode(const Matrix& dzl, const Cache& c) {
  Matrix dz = dzl;
  if (final_ln_) dz = final_ln_->backward(dz, *c.final_ln_c);
  for (std::size_t l = blocks_.size(); l-- > 0;) {
    dz = blocks_[l].backward(dz, c.blocks[l]);
  }
  return dz;
}

void VisionTransformer::backward_embed(const Matrix& dz0, const Cache& c) {
  g_pos_ += dz0;
  g_cls_.row(0) += dz0.row(0);
  patch_proj_.backward(dz0.bottomRows(cfg_.num_patches()), c.patch_c);
}

Matrix VisionTransformer::assemble_token_grads(const Vector& dclass, const Matrix& dpatches) {
  Matrix dzl(dpatches.rows() + 1, dpatches.cols());
  dzl.row(0) = dclass.transpose();
  dzl.bottomRows(dpatches.rows()) = dpatches;
  return dzl;
}

void VisionTransformer::zero_grad() {
  patch_proj_.zero_grad();
  g_cls_ = Matrix::Zero(1, cfg_.embed_dim);
  g_pos_ = Matrix::Zero(cfg_.num_patches() + 1, cfg_.embed_dim);
  for (auto& block : blocks_) block.zero_grad();
  if (final_ln_) final_ln_->zero_grad();
}

void VisionTransformer::collect(nn::ParamRefs& params) {
  using nn::ParamGroup;
  patch_proj_.collect("backbone.patch_embed", ParamGroup::kBackbone, params);
  params.push_back({"backbone.cls_token", cls_token_.data(), g_cls_.data(), cls_token_.rows(),
                    cls_token_.cols(), ParamGroup::kBackbone});
  // Positional embeddings are trained from scratch and belong to the
  // freshly-trained parameter group.
  params.push_back({"backbone.pos_embed", pos_embed_.data(), g_pos_.data(), pos_embed_.rows(),
                    pos_embed_.cols(), ParamGroup::kNew});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    blocks_[l].collect("backbone.blocks." + std::to_string(l), ParamGroup::kBackbone, params);
  }
  if (final_ln_) final_ln_->collect("backbone.final_ln", nn::ParamGroup::kBackbone, params);
}

void VisionTransformer::collect_buffers(nn::ParamRefs&) {}

}  // namespace asaloc
