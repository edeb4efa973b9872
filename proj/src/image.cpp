#include "asaloc/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>

namespace asaloc {

namespace {

int read_pnm_token(std::istream& in) {
  // Skips whitespace and '#' comments per the PNM grammar.
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF) throw DataError("pnm: truncated header");
  int value = 0;
  bool any = false;
  while (c != EOF && std::isdigit(c)) {
    value = value * 10 + (c - '0');
    any = true;
    c = in.get();
  }
  if (!any) throw DataError("pnm: malformed header token");
  return value;
}

std::uint8_t to_byte(double v) {
  const double scaled = std::lround(std::clamp(v, 0.0, 1.0) * 255.0);
  return static_cast<std::uint8_t>(scaled);
}

}  // namespace

Image Image::zeros(Index h, Index w, Index c) {
  Image img;
  img.height = h;
  img.width = w;
  img.chan.assign(static_cast<std::size_t>(c), Matrix::Zero(h, w));
  return img;
}

bool Image::all_finite() const {
  for (const auto& plane : chan) {
    if (!plane.allFinite()) return false;
  }
  return true;
}

Image load_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open image file: " + path.string());
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  if (m0 != 'P' || (m1 != '6' && m1 != '5')) {
    throw DataError("unsupported image format in " + path.string() +
                    " (only binary PPM/PGM are supported; convert other formats first)");
  }
  const Index channels = (m1 == '6') ? 3 : 1;
  const Index width = read_pnm_token(in);
  const Index height = read_pnm_token(in);
  const int maxval = read_pnm_token(in);
  if (maxval != 255) throw DataError("pnm: only maxval 255 is supported");

  Image img = Image::zeros(height, width, channels);
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(height * width * channels));
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!in) throw DataError("pnm: truncated pixel data in " + path.string());
  std::size_t pos = 0;
  for (Index y = 0; y < height; ++y) {
    for (Index x = 0; x < width; ++x) {
      for (Index c = 0; c < channels; ++c) {
        img.chan[static_cast<std::size_t>(c)](y, x) = raw[pos++] / 255.0;
      }
    }
  }
  return img;
}

void save_ppm(const Image& img, const std::filesystem::path& path) {
  if (img.channels() != 3) throw DataError("save_ppm: expected 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image file: " + path.string());
  out << "P6\n" << img.width << " " << img.height << "\n255\n";
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(img.height * img.width * 3));
  for (Index y = 0; y < img.height; ++y) {
    for (Index x = 0; x < img.width; ++x) {
      for (Index c = 0; c < 3; ++c) {
        raw.push_back(to_byte(img.chan[static_cast<std::size_t>(c)](y, x)));
      }
    }
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

void save_pgm(const Matrix& gray01, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write image file: " + path.string());
  out << "P5\n" << gray01.cols() << " " << gray01.rows() << "\n255\n";
  for (Index y = 0; y < gray01.rows(); ++y) {
    for (Index x = 0; x < gray01.cols(); ++x) {
      const std::uint8_t b = to_byte(gray01(y, x));
      out.write(reinterpret_cast<const char*>(&b), 1);
    }
  }
  if (!out) throw DataError("failed writing " + path.string());
}

Affine operator*(const Affine& a, const Affine& b) {
  Affine r;
  r.m[0] = a.m[0] * b.m[0] + a.m[1] * b.m[3];
  r.m[1] = a.m[0] * b.m[1] + a.m[1] * b.m[4];
  r.m[2] = a.m[0] * b.m[2] + a.m[1] * b.m[5] + a.m[2];
  r.m[3] = a.m[3] * b.m[0] + a.m[4] * b.m[3];
  r.m[4] = a.m[3] * b.m[1] + a.m[4] * b.m[4];
  r.m[5] = a.m[3] * b.m[2] + a.m[4] * b.m[5] + a.m[5];
  return r;
}

Affine rotation_about(double cx, double cy, double radians) {
  const double c = std::cos(radians);
  const double s = std::sin(radians);
  Affine r;
  r.m = {c, -s, cx - c * cx + s * cy, s, c, cy - s * cx - c * cy};
  return r;
}

Affine scale_about(double cx, double cy, double factor) {
  Affine r;
  r.m = {factor, 0, cx * (1 - factor), 0, factor, cy * (1 - factor)};
  return r;
}

Affine translation(double dx, double dy) {
  Affine r;
  r.m = {1, 0, dx, 0, 1, dy};
  return r;
}

Affine horizontal_flip(double width) {
  Affine r;
  r.m = {-1, 0, width - 1, 0, 1, 0};
  return r;
}

Image warp_bilinear(const Image& src, const Affine& out_to_src,
                    Index out_height, Index out_width) {
  Image out = Image::zeros(out_height, out_width, src.channels());
  const auto clamp_x = [&](Index x) { return std::clamp<Index>(x, 0, src.width - 1); };
  const auto clamp_y = [&](Index y) { return std::clamp<Index>(y, 0, src.height - 1); };
  for (Index y = 0; y < out_height; ++y) {
    for (Index x = 0; x < out_width; ++x) {
      const auto [sx, sy] = out_to_src.apply(static_cast<double>(x), static_cast<double>(y));
      const Index x0 = static_cast<Index>(std::floor(sx));
      const Index y0 = static_cast<Index>(std::floor(sy));
      const double fx = sx - static_cast<double>(x0);
      const double fy = sy - static_cast<double>(y0);
      const Index x0c = clamp_x(x0), x1c = clamp_x(x0 + 1);
      const Index y0c = clamp_y(y0), y1c = clamp_y(y0 + 1);
      for (Index c = 0; c < src.channels(); ++c) {
        const Matrix& plane = src.chan[static_cast<std::size_t>(c)];
        const double v = (1 - fy) * ((1 - fx) * plane(y0c, x0c) + fx * plane(y0c, x1c)) +
                         fy * ((1 - fx) * plane(y1c, x0c) + fx * plane(y1c, x1c));
        out.chan[static_cast<std::size_t>(c)](y, x) = v;
      }
    }
  }
  return out;
}

Image normalize(const Image& img, const ChannelStats& stats) {
  if (static_cast<Index>(stats.mean.size()) != img.channels() ||
      static_cast<Index>(stats.stddev.size()) != img.channels()) {
    throw ConfigError("normalize: channel stats do not match image channels");
  }
  Image out = img;
  for (Index c = 0; c < img.channels(); ++c) {
    const double sd = stats.stddev[static_cast<std::size_t>(c)];
    if (sd <= 0.0) throw ConfigError("normalize: non-positive stddev");
    out.chan[static_cast<std::size_t>(c)] =
        (img.chan[static_cast<std::size_t>(c)].array() - stats.mean[static_cast<std::size_t>(c)]) / sd;
  }
  return out;
}

}  // namespace asaloc
