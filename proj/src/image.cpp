#include "crvae/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

namespace crvae {
namespace {

// Skips whitespace and '#' comments between PPM header tokens.
int next_header_int(std::istream& in, const std::string& path) {
  for (;;) {
    int c = in.peek();
    if (c == EOF) throw ParseError("ppm: truncated header in " + path);
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  int v = 0;
  if (!(in >> v)) throw ParseError("ppm: bad header integer in " + path);
  return v;
}

}  // namespace

ImageBuf read_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("ppm: cannot open " + path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  bool binary;
  if (m0 == 'P' && m1 == '6')
    binary = true;
  else if (m0 == 'P' && m1 == '3')
    binary = false;
  else
    throw ParseError("ppm: not a P6/P3 file: " + path);

  int w = next_header_int(in, path);
  int h = next_header_int(in, path);
  int maxval = next_header_int(in, path);
  if (w <= 0 || h <= 0) throw ParseError("ppm: bad dimensions in " + path);
  if (maxval <= 0 || maxval > 255) throw ParseError("ppm: unsupported maxval in " + path);

  ImageBuf img(h, w);
  const double scale = 1.0 / maxval;
  if (binary) {
    in.get();  // single whitespace byte after maxval
    std::vector<uint8_t> raw(static_cast<size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (static_cast<size_t>(in.gcount()) != raw.size())
      throw ParseError("ppm: truncated pixel data in " + path);
    for (int i = 0; i < h * w; ++i)
      for (int ch = 0; ch < 3; ++ch) img.data(i, ch) = raw[static_cast<size_t>(i) * 3 + ch] * scale;
  } else {
    for (int i = 0; i < h * w; ++i)
      for (int ch = 0; ch < 3; ++ch) {
        int v;
        if (!(in >> v)) throw ParseError("ppm: truncated pixel data in " + path);
        img.data(i, ch) = v * scale;
      }
  }
  return img;
}

void write_ppm(const std::string& path, const ImageBuf& img) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw StageError("ppm: cannot write " + path);
  out << "P6\n" << img.w << " " << img.h << "\n255\n";
  std::vector<uint8_t> raw(static_cast<size_t>(img.h) * img.w * 3);
  for (int i = 0; i < img.h * img.w; ++i)
    for (int ch = 0; ch < 3; ++ch) {
      double v = std::clamp(img.data(i, ch), 0.0, 1.0);
      raw[static_cast<size_t>(i) * 3 + ch] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
  out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (!out) throw StageError("ppm: write failed for " + path);
}

ImageBuf bilinear_resize(const ImageBuf& src, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0) throw ContractViolation("bilinear_resize: non-positive target");
  if (src.h == out_h && src.w == out_w) return src;
  ImageBuf dst(out_h, out_w);
  const double sy = static_cast<double>(src.h) / out_h;
  const double sx = static_cast<double>(src.w) / out_w;
  for (int r = 0; r < out_h; ++r) {
    double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, static_cast<double>(src.h - 1));
    int y0 = static_cast<int>(fy);
    int y1 = std::min(y0 + 1, src.h - 1);
    double wy = fy - y0;
    for (int c = 0; c < out_w; ++c) {
      double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, static_cast<double>(src.w - 1));
      int x0 = static_cast<int>(fx);
      int x1 = std::min(x0 + 1, src.w - 1);
      double wx = fx - x0;
      for (int ch = 0; ch < 3; ++ch) {
        double top = (1 - wx) * src.at(y0, x0, ch) + wx * src.at(y0, x1, ch);
        double bot = (1 - wx) * src.at(y1, x0, ch) + wx * src.at(y1, x1, ch);
        dst.at(r, c, ch) = (1 - wy) * top + wy * bot;
      }
    }
  }
  return dst;
}

Vecd to_chw(const ImageBuf& img) {
  Vecd v(3 * img.h * img.w);
  const int plane = img.h * img.w;
  for (int ch = 0; ch < 3; ++ch) v.segment(ch * plane, plane) = img.data.col(ch);
  return v;
}

ImageBuf from_chw(const Vecd& v, int h, int w) {
  if (v.size() != 3 * h * w) throw ContractViolation("from_chw: size mismatch");
  ImageBuf img(h, w);
  const int plane = h * w;
  for (int ch = 0; ch < 3; ++ch) img.data.col(ch) = v.segment(ch * plane, plane);
  return img;
}

}  // namespace crvae
