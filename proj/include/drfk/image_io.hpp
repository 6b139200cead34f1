#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "drfk/tensor.hpp"

namespace drfk {

// Round half away from zero after clipping to [0,1]; inputs are nonnegative
// after the clip, so floor(v*255 + 0.5) is exactly that rule.
inline std::uint8_t quantize8(float v) {
  const float c = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
  return std::uint8_t(std::floor(c * 255.0f + 0.5f));
}

inline float dequantize8(std::uint8_t q) { return float(q) / 255.0f; }

// All writes go through a temp file in the target directory plus a rename,
// so a crashed process never leaves a torn file at the destination.
inline void write_file_atomic(const std::string& path,
                              const std::string& bytes) {
  namespace fs = std::filesystem;
  const fs::path dst(path);
  const fs::path tmp = dst.parent_path() /
                       (dst.filename().string() + ".tmp");
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    require(f.good(), "write: cannot open ", tmp.string());
    f.write(bytes.data(), std::streamsize(bytes.size()));
    f.flush();
    require(f.good(), "write: short write to ", tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, dst, ec);
  require(!ec, "write: cannot rename ", tmp.string(), " to ", path, ": ",
          ec.message());
}

inline std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  require(f.good(), "read: cannot open ", path);
  std::string bytes((std::istreambuf_iterator<char>(f)),
                    std::istreambuf_iterator<char>());
  require(!f.bad(), "read: failed reading ", path);
  return bytes;
}

namespace detail {

// Header token scanner for the netpbm formats: tokens separated by
// whitespace, '#' starts a comment running to end of line.
struct PnmScanner {
  const std::string& s;
  std::size_t pos = 0;

  void skip_space() {
    while (pos < s.size()) {
      if (s[pos] == '#') {
        while (pos < s.size() && s[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(s[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  }

  std::string token(const std::string& path) {
    skip_space();
    const std::size_t start = pos;
    while (pos < s.size() &&
           !std::isspace(static_cast<unsigned char>(s[pos])) && s[pos] != '#')
      ++pos;
    require(pos > start, "pnm: truncated header in ", path);
    return s.substr(start, pos - start);
  }

  int number(const std::string& path) {
    const std::string t = token(path);
    for (char c : t)
      require(c >= '0' && c <= '9', "pnm: bad number \"", t, "\" in ", path);
    require(t.size() <= 9, "pnm: oversized number in ", path);
    return std::stoi(t);
  }
};

inline Tensor<float> read_pnm(const std::string& path, int channels) {
  const std::string bytes = read_file(path);
  PnmScanner sc{bytes};
  const std::string magic = sc.token(path);
  const std::string want = channels == 3 ? "P6" : "P5";
  require(magic == want, "pnm: ", path, " is not ", want, " (got \"", magic,
          "\")");
  const int w = sc.number(path);
  const int h = sc.number(path);
  const int maxval = sc.number(path);
  require(w >= 1 && h >= 1, "pnm: bad dimensions ", w, "x", h, " in ", path);
  require(maxval == 255, "pnm: only maxval 255 is supported, got ", maxval,
          " in ", path);
  // exactly one whitespace byte separates the header from the raster
  require(sc.pos < bytes.size() &&
              std::isspace(static_cast<unsigned char>(bytes[sc.pos])),
          "pnm: missing raster separator in ", path);
  ++sc.pos;
  const std::size_t need = std::size_t(w) * h * channels;
  require(bytes.size() - sc.pos == need, "pnm: raster size mismatch in ",
          path, ": expected ", need, " bytes, found ", bytes.size() - sc.pos);

  Tensor<float> img(1, channels, h, w);
  const unsigned char* p =
      reinterpret_cast<const unsigned char*>(bytes.data()) + sc.pos;
  for (int r = 0; r < h; ++r)
    for (int q = 0; q < w; ++q)
      for (int c = 0; c < channels; ++c)
        img.at(0, c, r, q) = dequantize8(*p++);
  return img;
}

inline void write_pnm(const std::string& path, const Tensor<float>& img,
                      int channels) {
  require(img.n() == 1 && img.c() == channels, "pnm: expected a (1,",
          channels, ",H,W) tensor, got ", img.shape().str());
  std::string out = channels == 3 ? "P6\n" : "P5\n";
  out += std::to_string(img.w()) + " " + std::to_string(img.h()) + "\n255\n";
  out.reserve(out.size() + std::size_t(img.w()) * img.h() * channels);
  for (int r = 0; r < img.h(); ++r)
    for (int q = 0; q < img.w(); ++q)
      for (int c = 0; c < channels; ++c)
        out.push_back(char(quantize8(img.at(0, c, r, q))));
  write_file_atomic(path, out);
}

}  // namespace detail

inline Tensor<float> read_ppm(const std::string& path) {
  return detail::read_pnm(path, 3);
}
inline void write_ppm(const std::string& path, const Tensor<float>& img) {
  detail::write_pnm(path, img, 3);
}
inline Tensor<float> read_pgm(const std::string& path) {
  return detail::read_pnm(path, 1);
}
inline void write_pgm(const std::string& path, const Tensor<float>& img) {
  detail::write_pnm(path, img, 1);
}

// Raw little-endian float32 payload in tensor layout order (N,C,H,W).
// Dimensions travel separately (the paired 8-bit file or the checkpoint
// entry table).
inline void append_f32_le(std::string& out, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  out.push_back(char(u & 0xff));
  out.push_back(char((u >> 8) & 0xff));
  out.push_back(char((u >> 16) & 0xff));
  out.push_back(char((u >> 24) & 0xff));
}

inline float parse_f32_le(const unsigned char* p) {
  const std::uint32_t u = std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) |
                          (std::uint32_t(p[2]) << 16) |
                          (std::uint32_t(p[3]) << 24);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

template <class T>
void write_f32(const std::string& path, const Tensor<T>& t) {
  std::string out;
  out.reserve(t.numel() * 4);
  for (std::size_t i = 0; i < t.numel(); ++i) append_f32_le(out, float(t[i]));
  write_file_atomic(path, out);
}

template <class T = float>
Tensor<T> read_f32(const std::string& path, Shape s) {
  const std::string bytes = read_file(path);
  Tensor<T> t(s);
  require(bytes.size() == t.numel() * 4, "f32: ", path, " holds ",
          bytes.size() / 4, " floats, shape ", s.str(), " needs ", t.numel());
  const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data());
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = T(parse_f32_le(p + 4 * i));
  return t;
}

}  // namespace drfk
