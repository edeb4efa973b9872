#pragma once

#include "asaloc/config.hpp"
#include "asaloc/image.hpp"
#include "asaloc/nn.hpp"
#include "asaloc/rng.hpp"
#include "asaloc/types.hpp"

#include <optional>
#include <vector>

namespace asaloc {

/// Small vision transformer mapping an image to one class token plus N patch
/// tokens. Patch projection, class token and positional embeddings are
/// learnable; positional embeddings are always trained from scratch.
class VisionTransformer {
 public:
  VisionTransformer(const BackboneConfig& cfg, Rng& rng);

  const BackboneConfig& config() const { return cfg_; }

  struct Cache {
    nn::Dense::Cache patch_c;
    std::vector<nn::EncoderBlock::Cache> blocks;
    std::optional<nn::LayerNorm::Cache> final_ln_c;
  };

  /// Fixed rearrangement of the image into N rows of patch_size^2 * channels
  /// values, raster order over the patch grid, channel-interleaved pixels.
  Matrix patches_from_image(const Image& image) const;

  /// Z_0: learnable class embedding stacked on linear patch projections,
  /// plus positional embeddings. Throws ConfigError on dimension mismatch.
  Matrix embed(const Image& image) const;
  Matrix embed(const Image& image, Cache& c) const;

  /// Runs the encoder blocks; row 0 of the result is the class token.
  /// Throws NumericError naming the offending layer on non-finite values.
  TokenSet encode(const Matrix& z0) const;
  TokenSet encode(const Matrix& z0, Cache& c) const;

  TokenSet forward(const Image& image, Cache& c) const;

  /// Backpropagates d(loss)/dZ_L through the encoder blocks, accumulating
  /// parameter gradients; returns d(loss)/dZ_0.
  Matrix backward_encode(const Matrix& dzl, const Cache& c);

  /// Backpropagates d(loss)/dZ_0 into patch projection, class token and
  /// positional embedding gradients.
  void backward_embed(const Matrix& dz0, const Cache& c);

  /// Convenience: dzl assembled from class-token and patch-token gradients.
  static Matrix assemble_token_grads(const Vector& dclass, const Matrix& dpatches);

  void zero_grad();
  void collect(nn::ParamRefs& params) ;
  void collect_buffers(nn::ParamRefs& buffers);

 private:
  BackboneConfig cfg_;
  nn::Dense patch_proj_;
  Matrix cls_token_;  // 1 x D
  Matrix pos_embed_;  // (N+1) x D
  Matrix g_cls_, g_pos_;
  std::vector<nn::EncoderBlock> blocks_;
  std::optional<nn::LayerNorm> final_ln_;
};

}  // namespace asaloc
