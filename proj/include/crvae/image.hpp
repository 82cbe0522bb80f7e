#pragma once

#include <string>

#include "crvae/types.hpp"

namespace crvae {

// RGB raster with values in [0,1]. Pixels are stored row-major (index r*w + c)
// down the rows of `data`; the three columns are the R, G, B planes.
struct ImageBuf {
  int h = 0;
  int w = 0;
  Matd data;  // (h*w) x 3

  ImageBuf() = default;
  ImageBuf(int h_, int w_) : h(h_), w(w_), data(Matd::Zero(h_ * w_, 3)) {}

  double& at(int r, int c, int ch) { return data(r * w + c, ch); }
  double at(int r, int c, int ch) const { return data(r * w + c, ch); }
};

// Binary PPM (P6) with maxval 255. read_ppm also accepts ASCII P3.
ImageBuf read_ppm(const std::string& path);
void write_ppm(const std::string& path, const ImageBuf& img);

// Resize by sampling the source at ((i+0.5)*scale - 0.5) per axis with
// coordinates clamped to the valid range, interpolating bilinearly.
ImageBuf bilinear_resize(const ImageBuf& src, int out_h, int out_w);

// CHW flattening used by the model: channel-major, rows within channel.
Vecd to_chw(const ImageBuf& img);
ImageBuf from_chw(const Vecd& v, int h, int w);

}  // namespace crvae
