#pragma once

#include "asaloc/types.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace asaloc {

/// Planar real-valued image, values in [0, 1] unless normalized.
struct Image {
  Index height = 0;
  Index width = 0;
  std::vector<Matrix> chan;  // one height x width plane per channel

  static Image zeros(Index h, Index w, Index c);
  Index channels() const { return static_cast<Index>(chan.size()); }
  bool all_finite() const;
};

/// Binary PPM (P6, color) / PGM (P5, gray) at maxval 255.
Image load_ppm(const std::filesystem::path& path);
void save_ppm(const Image& img, const std::filesystem::path& path);
void save_pgm(const Matrix& gray01, const std::filesystem::path& path);

/// Row-major 2x3 affine map from output pixel coordinates to source pixel
/// coordinates: src = M * [x, y, 1]^T.
struct Affine {
  std::array<double, 6> m{1, 0, 0, 0, 1, 0};
  std::array<double, 2> apply(double x, double y) const {
    return {m[0] * x + m[1] * y + m[2], m[3] * x + m[4] * y + m[5]};
  }
  static Affine identity() { return {}; }
  /// Composition: (a * b)(p) = a(b(p)).
  friend Affine operator*(const Affine& a, const Affine& b);
};

Affine rotation_about(double cx, double cy, double radians);
Affine scale_about(double cx, double cy, double factor);
Affine translation(double dx, double dy);
Affine horizontal_flip(double width);

/// Bilinear resampling with clamp-to-edge borders. `out_to_src` maps output
/// pixel centers to source pixel centers.
Image warp_bilinear(const Image& src, const Affine& out_to_src,
                    Index out_height, Index out_width);

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;
  bool empty() const { return mean.empty(); }
};

/// Per-channel standardization: (x - mean) / stddev.
Image normalize(const Image& img, const ChannelStats& stats);

}  // namespace asaloc
