#pragma once

// Layer zoo for the encoder/decoder stacks. Everything operates on
// feature-major matrices: one sample per column. Image tensors are flattened
// channel-major (plane c occupies rows [c*H*W, (c+1)*H*W)). Sequences are
// vectors of (dim x B) matrices, one per step.
//
// Each layer caches what its backward pass needs on a LIFO stack, so
// forward/backward calls must pair up in reverse order. Gradients accumulate
// into Param::grad and are allocated lazily on first use.

#include <cmath>
#include <string>
#include <vector>

#include "crvae/types.hpp"

namespace crvae::nn {

template <typename S>
struct Param {
  std::string name;
  MatX<S> value;
  MatX<S> grad;  // empty until first accumulation

  void accum(const MatX<S>& g) {
    if (grad.size() == 0) grad = MatX<S>::Zero(value.rows(), value.cols());
    grad += g;
  }
  void zero_grad() {
    if (grad.size() != 0) grad.setZero();
  }
};

template <typename S>
void uniform_init(MatX<S>& m, S bound, Rng& rng) {
  m = rng.rand_uniform<S>(m.rows(), m.cols(), -bound, bound);
}

// ---------------------------------------------------------------------------
// Dense: y = W x + b
template <typename S>
class Dense {
 public:
  Param<S> W, b;

  Dense() = default;
  Dense(const std::string& name, int in, int out, Rng& rng) {
    W.name = name + ".W";
    b.name = name + ".b";
    W.value.resize(out, in);
    b.value = MatX<S>::Zero(out, 1);
    S bound = S(1) / std::sqrt(static_cast<S>(in));
    uniform_init(W.value, bound, rng);
    uniform_init(b.value, bound, rng);
  }

  MatX<S> forward(const MatX<S>& x) {
    cache_.push_back(x);
    return (W.value * x).colwise() + b.value.col(0);
  }

  MatX<S> backward(const MatX<S>& dy) {
    MatX<S> x = std::move(cache_.back());
    cache_.pop_back();
    W.accum(dy * x.transpose());
    b.accum(dy.rowwise().sum());
    return W.value.transpose() * dy;
  }

  void collect(std::vector<Param<S>*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
  void clear_cache() { cache_.clear(); }

 private:
  std::vector<MatX<S>> cache_;
};

// ---------------------------------------------------------------------------
// ReLU (elementwise, shape-preserving)
template <typename S>
class ReLU {
 public:
  MatX<S> forward(const MatX<S>& x) {
    MatX<S> y = x.cwiseMax(S(0));
    cache_.push_back(y);
    return y;
  }
  MatX<S> backward(const MatX<S>& dy) {
    MatX<S> y = std::move(cache_.back());
    cache_.pop_back();
    return ((y.array() > S(0)).template cast<S>() * dy.array()).matrix();
  }
  void clear_cache() { cache_.clear(); }

 private:
  std::vector<MatX<S>> cache_;
};

// ---------------------------------------------------------------------------
// im2col helpers for 3x3 kernels. `stride` is 1 (same-size conv) or 2 (the
// dual of the exactly-doubling transposed conv). Padding is fixed at 1.
// Patch rows are ordered channel-major, then kernel row, then kernel column.

// stride 1: input (C*H*W) column -> (C*9) x (H*W)
template <typename S>
MatX<S> im2col3(const VecX<S>& v, int C, int H, int W) {
  MatX<S> cols = MatX<S>::Zero(C * 9, H * W);
  for (int c = 0; c < C; ++c) {
    const int plane = c * H * W;
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (int x = 0; x < W; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= W) continue;
            cols(row, y * W + x) = v(plane + sy * W + sx);
          }
        }
      }
  }
  return cols;
}

// stride 1 adjoint: scatter-add (C*9) x (H*W) patch grads into a (C*H*W) column
template <typename S>
void col2im3(const MatX<S>& cols, int C, int H, int W, Eigen::Ref<VecX<S>> out) {
  for (int c = 0; c < C; ++c) {
    const int plane = c * H * W;
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < H; ++y) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (int x = 0; x < W; ++x) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= W) continue;
            out(plane + sy * W + sx) += cols(row, y * W + x);
          }
        }
      }
  }
}

// stride 2: gathers 3x3 patches at positions (2y-1+ky, 2x-1+kx) from a
// (C*H2*W2) column where H2=2*H, W2=2*W; output (C*9) x (H*W)
template <typename S>
MatX<S> im2col3_s2(const VecX<S>& v, int C, int H, int W) {
  const int H2 = 2 * H, W2 = 2 * W;
  MatX<S> cols = MatX<S>::Zero(C * 9, H * W);
  for (int c = 0; c < C; ++c) {
    const int plane = c * H2 * W2;
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < H; ++y) {
          const int sy = 2 * y + ky - 1;
          if (sy < 0 || sy >= H2) continue;
          for (int x = 0; x < W; ++x) {
            const int sx = 2 * x + kx - 1;
            if (sx < 0 || sx >= W2) continue;
            cols(row, y * W + x) = v(plane + sy * W2 + sx);
          }
        }
      }
  }
  return cols;
}

template <typename S>
void col2im3_s2(const MatX<S>& cols, int C, int H, int W, Eigen::Ref<VecX<S>> out) {
  const int H2 = 2 * H, W2 = 2 * W;
  for (int c = 0; c < C; ++c) {
    const int plane = c * H2 * W2;
    for (int ky = 0; ky < 3; ++ky)
      for (int kx = 0; kx < 3; ++kx) {
        const int row = c * 9 + ky * 3 + kx;
        for (int y = 0; y < H; ++y) {
          const int sy = 2 * y + ky - 1;
          if (sy < 0 || sy >= H2) continue;
          for (int x = 0; x < W; ++x) {
            const int sx = 2 * x + kx - 1;
            if (sx < 0 || sx >= W2) continue;
            out(plane + sy * W2 + sx) += cols(row, y * W + x);
          }
        }
      }
  }
}

// ---------------------------------------------------------------------------
// Conv2d: 3x3, stride 1, pad 1, same spatial size. Weight is (inC*9) x outC so
// out_plane_matrix = W^T * im2col(x). Backward recomputes im2col from the
// cached input rather than caching the (much larger) patch matrix.
template <typename S>
class Conv2d {
 public:
  Param<S> W, b;

  Conv2d() = default;
  Conv2d(const std::string& name, int in_ch, int out_ch, int h, int w, Rng& rng)
      : in_ch_(in_ch), out_ch_(out_ch), h_(h), w_(w) {
    W.name = name + ".W";
    b.name = name + ".b";
    W.value.resize(in_ch * 9, out_ch);
    b.value = MatX<S>::Zero(out_ch, 1);
    S bound = S(1) / std::sqrt(static_cast<S>(in_ch * 9));
    uniform_init(W.value, bound, rng);
    uniform_init(b.value, bound, rng);
  }

  MatX<S> forward(const MatX<S>& x) {
    const int hw = h_ * w_;
    MatX<S> y(out_ch_ * hw, x.cols());
    for (Eigen::Index n = 0; n < x.cols(); ++n) {
      MatX<S> cols = im2col3<S>(x.col(n), in_ch_, h_, w_);
      MatX<S> o = W.value.transpose() * cols;  // outC x HW
      o.colwise() += b.value.col(0);
      for (int c = 0; c < out_ch_; ++c) y.col(n).segment(c * hw, hw) = o.row(c).transpose();
    }
    cache_.push_back(x);
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    MatX<S> x = std::move(cache_.back());
    cache_.pop_back();
    const int hw = h_ * w_;
    MatX<S> dx = MatX<S>::Zero(in_ch_ * hw, x.cols());
    MatX<S> dW = MatX<S>::Zero(W.value.rows(), W.value.cols());
    MatX<S> db = MatX<S>::Zero(out_ch_, 1);
    for (Eigen::Index n = 0; n < x.cols(); ++n) {
      MatX<S> dO(out_ch_, hw);
      for (int c = 0; c < out_ch_; ++c) dO.row(c) = dy.col(n).segment(c * hw, hw).transpose();
      db.col(0) += dO.rowwise().sum();
      MatX<S> cols = im2col3<S>(x.col(n), in_ch_, h_, w_);
      dW += cols * dO.transpose();
      MatX<S> dcols = W.value * dO;  // (inC*9) x HW
      VecX<S> dxn = VecX<S>::Zero(in_ch_ * hw);
      col2im3<S>(dcols, in_ch_, h_, w_, dxn);
      dx.col(n) = dxn;
    }
    W.accum(dW);
    b.accum(db);
    return dx;
  }

  void collect(std::vector<Param<S>*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
  void clear_cache() { cache_.clear(); }

 private:
  int in_ch_ = 0, out_ch_ = 0, h_ = 0, w_ = 0;
  std::vector<MatX<S>> cache_;
};

// ---------------------------------------------------------------------------
// MaxPool2d: 2x2 windows, stride 2. Requires even input dims; caches the
// winning source row per output element.
template <typename S>
class MaxPool2 {
 public:
  MaxPool2() = default;
  MaxPool2(int ch, int h, int w) : ch_(ch), h_(h), w_(w) {
    if (h % 2 != 0 || w % 2 != 0) throw ContractViolation("maxpool: odd spatial dims");
  }

  MatX<S> forward(const MatX<S>& x) {
    const int oh = h_ / 2, ow = w_ / 2;
    MatX<S> y(ch_ * oh * ow, x.cols());
    MatXi idx(ch_ * oh * ow, static_cast<int>(x.cols()));
    for (Eigen::Index n = 0; n < x.cols(); ++n)
      for (int c = 0; c < ch_; ++c) {
        const int in_plane = c * h_ * w_, out_plane = c * oh * ow;
        for (int y0 = 0; y0 < oh; ++y0)
          for (int x0 = 0; x0 < ow; ++x0) {
            int best = in_plane + (2 * y0) * w_ + 2 * x0;
            S bv = x(best, n);
            const int cand[3] = {in_plane + (2 * y0) * w_ + 2 * x0 + 1,
                                 in_plane + (2 * y0 + 1) * w_ + 2 * x0,
                                 in_plane + (2 * y0 + 1) * w_ + 2 * x0 + 1};
            for (int r : cand)
              if (x(r, n) > bv) {
                bv = x(r, n);
                best = r;
              }
            y(out_plane + y0 * ow + x0, n) = bv;
            idx(out_plane + y0 * ow + x0, static_cast<int>(n)) = best;
          }
      }
    idx_cache_.push_back(std::move(idx));
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    MatXi idx = std::move(idx_cache_.back());
    idx_cache_.pop_back();
    MatX<S> dx = MatX<S>::Zero(ch_ * h_ * w_, dy.cols());
    for (Eigen::Index n = 0; n < dy.cols(); ++n)
      for (Eigen::Index r = 0; r < dy.rows(); ++r)
        dx(idx(r, static_cast<int>(n)), n) += dy(r, n);
    return dx;
  }

  void clear_cache() { idx_cache_.clear(); }

 private:
  int ch_ = 0, h_ = 0, w_ = 0;
  std::vector<MatXi> idx_cache_;
};

// ---------------------------------------------------------------------------
// ConvTranspose2d: 3x3, stride 2, pad 1, output padding 1 — exactly doubles
// spatial dims. Implemented through conv duality: the forward pass is the
// input-gradient of a stride-2 conv whose weight we store directly, shaped
// (outC*9) x inC.
template <typename S>
class ConvT2d {
 public:
  Param<S> W, b;

  ConvT2d() = default;
  ConvT2d(const std::string& name, int in_ch, int out_ch, int h, int w, Rng& rng)
      : in_ch_(in_ch), out_ch_(out_ch), h_(h), w_(w) {
    W.name = name + ".W";
    b.name = name + ".b";
    W.value.resize(out_ch * 9, in_ch);
    b.value = MatX<S>::Zero(out_ch, 1);
    S bound = S(1) / std::sqrt(static_cast<S>(in_ch * 9));
    uniform_init(W.value, bound, rng);
    uniform_init(b.value, bound, rng);
  }

  // (inC*h*w) x B -> (outC*2h*2w) x B
  MatX<S> forward(const MatX<S>& x) {
    const int hw = h_ * w_, ohw = 4 * hw;
    MatX<S> y = MatX<S>::Zero(out_ch_ * ohw, x.cols());
    for (Eigen::Index n = 0; n < x.cols(); ++n) {
      MatX<S> xm(in_ch_, hw);
      for (int c = 0; c < in_ch_; ++c) xm.row(c) = x.col(n).segment(c * hw, hw).transpose();
      MatX<S> g = W.value * xm;  // (outC*9) x hw — patch grads of the dual conv
      VecX<S> yn = VecX<S>::Zero(out_ch_ * ohw);
      col2im3_s2<S>(g, out_ch_, h_, w_, yn);
      for (int c = 0; c < out_ch_; ++c) yn.segment(c * ohw, ohw).array() += b.value(c, 0);
      y.col(n) = yn;
    }
    cache_.push_back(x);
    return y;
  }

  MatX<S> backward(const MatX<S>& dy) {
    MatX<S> x = std::move(cache_.back());
    cache_.pop_back();
    const int hw = h_ * w_, ohw = 4 * hw;
    MatX<S> dx(in_ch_ * hw, x.cols());
    MatX<S> dW = MatX<S>::Zero(W.value.rows(), W.value.cols());
    MatX<S> db = MatX<S>::Zero(out_ch_, 1);
    for (Eigen::Index n = 0; n < x.cols(); ++n) {
      MatX<S> dcols = im2col3_s2<S>(dy.col(n), out_ch_, h_, w_);  // (outC*9) x hw
      MatX<S> xm(in_ch_, hw);
      for (int c = 0; c < in_ch_; ++c) xm.row(c) = x.col(n).segment(c * hw, hw).transpose();
      dW += dcols * xm.transpose();
      MatX<S> dxm = W.value.transpose() * dcols;  // inC x hw
      for (int c = 0; c < in_ch_; ++c) dx.col(n).segment(c * hw, hw) = dxm.row(c).transpose();
      for (int c = 0; c < out_ch_; ++c) db(c, 0) += dy.col(n).segment(c * ohw, ohw).sum();
    }
    W.accum(dW);
    b.accum(db);
    return dx;
  }

  void collect(std::vector<Param<S>*>& out) {
    out.push_back(&W);
    out.push_back(&b);
  }
  void clear_cache() { cache_.clear(); }

 private:
  int in_ch_ = 0, out_ch_ = 0, h_ = 0, w_ = 0;
  std::vector<MatX<S>> cache_;
};

// ---------------------------------------------------------------------------
// BatchNorm1d over features (rows), batch = columns. Training mode normalizes
// with biased batch statistics and maintains running buffers (momentum 0.1);
// eval mode uses the buffers. Backward is the full batch Jacobian.
template <typename S>
class BatchNorm1d {
 public:
  Param<S> gamma, beta;
  MatX<S> running_mean, running_var;  // buffers, (F x 1)
  bool training = true;

  BatchNorm1d() = default;
  BatchNorm1d(const std::string& name, int features) : features_(features) {
    gamma.name = name + ".gamma";
    beta.name = name + ".beta";
    gamma.value = MatX<S>::Ones(features, 1);
    beta.value = MatX<S>::Zero(features, 1);
    running_mean = MatX<S>::Zero(features, 1);
    running_var = MatX<S>::Ones(features, 1);
  }

  MatX<S> forward(const MatX<S>& x) {
    const S eps = S(1e-5);
    if (!training) {
      ArrX<S> inv = (running_var.col(0).array() + eps).sqrt().inverse();
      MatX<S> xhat = ((x.colwise() - running_mean.col(0)).array().colwise() * inv).matrix();
      return (xhat.array().colwise() * gamma.value.col(0).array()).matrix().colwise() +
             beta.value.col(0);
    }
    const S B = static_cast<S>(x.cols());
    VecX<S> mean = x.rowwise().mean();
    MatX<S> centered = x.colwise() - mean;
    VecX<S> var = centered.array().square().matrix().rowwise().mean();  // biased
    VecX<S> inv_std = (var.array() + eps).sqrt().inverse().matrix();
    MatX<S> xhat = (centered.array().colwise() * inv_std.array()).matrix();

    running_mean = ((S(1) - momentum_) * running_mean.col(0) + momentum_ * mean).eval();
    // buffers follow the unbiased estimate, matching common framework behavior
    if (x.cols() > 1) {
      VecX<S> var_unb = var * (B / (B - S(1)));
      running_var = ((S(1) - momentum_) * running_var.col(0) + momentum_ * var_unb).eval();
    }

    Cache c;
    c.xhat = xhat;
    c.inv_std = inv_std;
    cache_.push_back(std::move(c));
    return (xhat.array().colwise() * gamma.value.col(0).array()).matrix().colwise() +
           beta.value.col(0);
  }

  MatX<S> backward(const MatX<S>& dy) {
    if (!training) throw ContractViolation("batchnorm: backward in eval mode");
    Cache c = std::move(cache_.back());
    cache_.pop_back();
    const S B = static_cast<S>(dy.cols());
    gamma.accum((dy.array() * c.xhat.array()).rowwise().sum().matrix());
    beta.accum(dy.rowwise().sum());
    // dx = (g*inv_std/B) * (B*dxhat - sum(dxhat) - xhat * sum(dxhat*xhat))
    ArrXX<S> dxhat = dy.array().colwise() * gamma.value.col(0).array();
    VecX<S> sum_d = dxhat.rowwise().sum().matrix();
    VecX<S> sum_dx = (dxhat * c.xhat.array()).rowwise().sum().matrix();
    ArrXX<S> t = B * dxhat;
    t.colwise() -= sum_d.array();
    t -= c.xhat.array().colwise() * sum_dx.array();
    return ((t.colwise() * c.inv_std.array()) / B).matrix();
  }

  void collect(std::vector<Param<S>*>& out) {
    out.push_back(&gamma);
    out.push_back(&beta);
  }
  void clear_cache() { cache_.clear(); }

 private:
  struct Cache {
    MatX<S> xhat;
    VecX<S> inv_std;
  };
  int features_ = 0;
  S momentum_ = S(0.1);
  std::vector<Cache> cache_;
};

// ---------------------------------------------------------------------------
// Recurrent cell: LSTM (gates i,f,g,o) or vanilla tanh RNN, selected at
// construction. The RNN variant ignores the cell state.
enum class CellKind { Lstm, Rnn };

inline CellKind cell_kind_from_string(const std::string& s) {
  if (s == "lstm") return CellKind::Lstm;
  if (s == "rnn") return CellKind::Rnn;
  throw ConfigError("unknown recurrent cell kind: " + s);
}

template <typename S>
class SeqCell {
 public:
  Param<S> Wx, Wh, b;

  SeqCell() = default;
  SeqCell(const std::string& name, CellKind kind, int in_dim, int hidden, Rng& rng)
      : kind_(kind), in_(in_dim), hidden_(hidden) {
    const int gates = kind == CellKind::Lstm ? 4 : 1;
    Wx.name = name + ".Wx";
    Wh.name = name + ".Wh";
    b.name = name + ".b";
    Wx.value.resize(gates * hidden, in_dim);
    Wh.value.resize(gates * hidden, hidden);
    b.value = MatX<S>::Zero(gates * hidden, 1);
    S bound = S(1) / std::sqrt(static_cast<S>(hidden));
    uniform_init(Wx.value, bound, rng);
    uniform_init(Wh.value, bound, rng);
    uniform_init(b.value, bound, rng);
  }

  struct StepCache {
    MatX<S> x, h_prev, c_prev;
    MatX<S> i, f, g, o, tanh_c;  // LSTM
    MatX<S> h;                   // RNN output (tanh preactivation applied)
  };

  // One step; h/c are (hidden x B). Returns new (h, c); fills `cache`.
  void step(const MatX<S>& x, const MatX<S>& h_prev, const MatX<S>& c_prev, MatX<S>& h_out,
            MatX<S>& c_out, StepCache& cache) const {
    MatX<S> a = Wx.value * x + Wh.value * h_prev;
    a.colwise() += b.value.col(0);
    cache.x = x;
    cache.h_prev = h_prev;
    if (kind_ == CellKind::Rnn) {
      h_out = a.array().tanh().matrix();
      c_out = c_prev;  // untouched
      cache.h = h_out;
      return;
    }
    cache.c_prev = c_prev;
    const int H = hidden_;
    auto sig = [](const MatX<S>& m) {
      return (S(1) / (S(1) + (-m.array()).exp())).matrix().eval();
    };
    cache.i = sig(a.middleRows(0, H));
    cache.f = sig(a.middleRows(H, H));
    cache.g = a.middleRows(2 * H, H).array().tanh().matrix();
    cache.o = sig(a.middleRows(3 * H, H));
    c_out = (cache.f.array() * c_prev.array() + cache.i.array() * cache.g.array()).matrix();
    cache.tanh_c = c_out.array().tanh().matrix();
    h_out = (cache.o.array() * cache.tanh_c.array()).matrix();
  }

  // Backward one step. dh/dc are gradients flowing into this step's outputs;
  // returns dx and overwrites dh/dc with the gradients for the previous step.
  MatX<S> step_backward(const StepCache& cache, MatX<S>& dh, MatX<S>& dc) {
    MatX<S> da;
    if (kind_ == CellKind::Rnn) {
      da = (dh.array() * (S(1) - cache.h.array().square())).matrix();
    } else {
      const int H = hidden_;
      ArrXX<S> do_ = dh.array() * cache.tanh_c.array();
      ArrXX<S> dct = dh.array() * cache.o.array() * (S(1) - cache.tanh_c.array().square());
      if (dc.size() != 0) dct += dc.array();
      ArrXX<S> di = dct * cache.g.array();
      ArrXX<S> df = dct * cache.c_prev.array();
      ArrXX<S> dg = dct * cache.i.array();
      dc = (dct * cache.f.array()).matrix();  // flows to c_{t-1}
      da.resize(4 * H, dh.cols());
      da.middleRows(0, H) = (di * cache.i.array() * (S(1) - cache.i.array())).matrix();
      da.middleRows(H, H) = (df * cache.f.array() * (S(1) - cache.f.array())).matrix();
      da.middleRows(2 * H, H) = (dg * (S(1) - cache.g.array().square())).matrix();
      da.middleRows(3 * H, H) = (do_ * cache.o.array() * (S(1) - cache.o.array())).matrix();
    }
    Wx.accum(da * cache.x.transpose());
    Wh.accum(da * cache.h_prev.transpose());
    b.accum(da.rowwise().sum());
    dh = Wh.value.transpose() * da;
    return Wx.value.transpose() * da;
  }

  CellKind kind() const { return kind_; }
  int hidden() const { return hidden_; }
  void collect(std::vector<Param<S>*>& out) {
    out.push_back(&Wx);
    out.push_back(&Wh);
    out.push_back(&b);
  }

 private:
  CellKind kind_ = CellKind::Lstm;
  int in_ = 0, hidden_ = 0;
};

// ---------------------------------------------------------------------------
// Multi-layer (optionally bidirectional) sequence encoder. Output feature is
// the concatenation of every (layer, direction) final hidden state, ordered
// layer 0 fwd, layer 0 bwd, layer 1 fwd, ... — width layers*dirs*hidden.
template <typename S>
class SeqEncoder {
 public:
  SeqEncoder() = default;
  SeqEncoder(const std::string& name, CellKind kind, int input_dim, int hidden, int layers,
             bool bidirectional, Rng& rng)
      : layers_(layers), hidden_(hidden), bidir_(bidirectional) {
    const int dirs = bidirectional ? 2 : 1;
    for (int l = 0; l < layers; ++l) {
      const int in = l == 0 ? input_dim : dirs * hidden;
      for (int d = 0; d < dirs; ++d)
        cells_.emplace_back(name + ".l" + std::to_string(l) + (d ? ".bwd" : ".fwd"), kind, in,
                            hidden, rng);
    }
  }

  int feature_dim() const { return layers_ * (bidir_ ? 2 : 1) * hidden_; }

  // seq: L matrices (input_dim x B) -> (feature_dim x B)
  MatX<S> forward(const std::vector<MatX<S>>& seq) {
    if (seq.empty()) throw ContractViolation("seq encoder: empty sequence");
    const int L = static_cast<int>(seq.size());
    const auto B = seq[0].cols();
    const int dirs = bidir_ ? 2 : 1;
    Cache cache;
    cache.L = L;
    cache.caches.resize(cells_.size());
    for (auto& v : cache.caches) v.resize(L);
    MatX<S> feat(feature_dim(), B);
    std::vector<MatX<S>> layer_in = seq;
    for (int l = 0; l < layers_; ++l) {
      std::vector<MatX<S>> layer_out(L);
      for (int d = 0; d < dirs; ++d) {
        const int ci = l * dirs + d;
        MatX<S> h = MatX<S>::Zero(hidden_, B), c = MatX<S>::Zero(hidden_, B);
        for (int s = 0; s < L; ++s) {
          const int t = d == 0 ? s : L - 1 - s;  // bwd direction walks in reverse
          MatX<S> hn, cn;
          cells_[ci].step(layer_in[t], h, c, hn, cn, cache.caches[ci][s]);
          h = std::move(hn);
          c = std::move(cn);
          if (d == 0) {
            if (layer_out[t].size() == 0) layer_out[t].resize(dirs * hidden_, B);
            layer_out[t].topRows(hidden_) = h;
          } else {
            layer_out[t].bottomRows(hidden_) = h;
          }
        }
        feat.middleRows((l * dirs + d) * hidden_, hidden_) = h;  // final step of this direction
      }
      layer_in = std::move(layer_out);
    }
    caches_.push_back(std::move(cache));
    return feat;
  }

  // dfeat: (feature_dim x B) -> per-step input gradients (length L)
  std::vector<MatX<S>> backward(const MatX<S>& dfeat) {
    Cache cache = std::move(caches_.back());
    caches_.pop_back();
    const int L = cache.L;
    const auto B = dfeat.cols();
    const int dirs = bidir_ ? 2 : 1;
    std::vector<MatX<S>> dlayer_out;  // grads wrt current layer's output seq
    for (int l = layers_ - 1; l >= 0; --l) {
      const int in_dim = static_cast<int>(cells_[l * dirs].Wx.value.cols());
      std::vector<MatX<S>> dlayer_in(L, MatX<S>::Zero(in_dim, B));
      for (int d = 0; d < dirs; ++d) {
        const int ci = l * dirs + d;
        MatX<S> dh = dfeat.middleRows((l * dirs + d) * hidden_, hidden_);
        MatX<S> dc;  // empty = zero
        for (int s = L - 1; s >= 0; --s) {
          const int t = d == 0 ? s : L - 1 - s;
          if (!dlayer_out.empty())
            dh += dlayer_out[t].middleRows(d * hidden_, hidden_);
          MatX<S> dx = cells_[ci].step_backward(cache.caches[ci][s], dh, dc);
          dlayer_in[t] += dx;
        }
      }
      dlayer_out = std::move(dlayer_in);
    }
    return dlayer_out;
  }

  void collect(std::vector<Param<S>*>& out) {
    for (auto& c : cells_) c.collect(out);
  }
  void clear_cache() { caches_.clear(); }

 private:
  struct Cache {
    int L = 0;
    std::vector<std::vector<typename SeqCell<S>::StepCache>> caches;  // [cell][step]
  };
  int layers_ = 0, hidden_ = 0;
  bool bidir_ = false;
  std::vector<SeqCell<S>> cells_;
  std::vector<Cache> caches_;
};

// ---------------------------------------------------------------------------
// Unidirectional multi-layer sequence decoder with a linear per-step output
// projection. Step input is the previous ground-truth embedding under teacher
// forcing, or the previous prediction otherwise; step 0 consumes a zero
// vector. Initial hidden/cell states are supplied per layer (from learned
// projections upstream); their gradients are returned by backward.
template <typename S>
class SeqDecoder {
 public:
  SeqDecoder() = default;
  SeqDecoder(const std::string& name, CellKind kind, int embed_dim, int hidden, int layers,
             Rng& rng)
      : layers_(layers), hidden_(hidden), embed_(embed_dim) {
    for (int l = 0; l < layers; ++l)
      cells_.emplace_back(name + ".l" + std::to_string(l), kind, l == 0 ? embed_dim : hidden,
                          hidden, rng);
    out_proj_ = Dense<S>(name + ".out", hidden, embed_dim, rng);
  }

  // h0/c0: layers matrices (hidden x B). teacher: the ground-truth embedding
  // sequence (used for steps 1..L-1 when teacher_forcing). Returns L outputs
  // (embed x B).
  std::vector<MatX<S>> forward(const std::vector<MatX<S>>& h0, const std::vector<MatX<S>>& c0,
                               const std::vector<MatX<S>>& teacher, int L, bool teacher_forcing) {
    if (teacher_forcing && static_cast<int>(teacher.size()) < L)
      throw ContractViolation("seq decoder: teacher sequence shorter than requested length");
    const auto B = h0[0].cols();
    Cache cache;
    cache.L = L;
    cache.teacher_forcing = teacher_forcing;
    cache.caches.resize(layers_);
    for (auto& v : cache.caches) v.resize(L);
    std::vector<MatX<S>> h = h0, c = c0;
    std::vector<MatX<S>> outputs(L);
    MatX<S> prev = MatX<S>::Zero(embed_, B);  // start token
    for (int t = 0; t < L; ++t) {
      if (t > 0) prev = teacher_forcing ? teacher[t - 1] : outputs[t - 1];
      MatX<S> x = prev;
      for (int l = 0; l < layers_; ++l) {
        MatX<S> hn, cn;
        cells_[l].step(x, h[l], c[l], hn, cn, cache.caches[l][t]);
        h[l] = std::move(hn);
        c[l] = std::move(cn);
        x = h[l];
      }
      outputs[t] = out_proj_.forward(x);
    }
    caches_.push_back(std::move(cache));
    return outputs;
  }

  // d_outputs: per-step gradients. Returns (dh0, dc0) per layer. In self-feed
  // mode the gradient through each prediction's reuse as the next input is
  // folded in as the steps unwind.
  std::pair<std::vector<MatX<S>>, std::vector<MatX<S>>> backward(std::vector<MatX<S>> d_outputs) {
    Cache cache = std::move(caches_.back());
    caches_.pop_back();
    const int L = cache.L;
    const auto B = d_outputs[0].cols();
    std::vector<MatX<S>> dh(layers_, MatX<S>::Zero(hidden_, B));
    std::vector<MatX<S>> dc(layers_, MatX<S>::Zero(hidden_, B));
    for (int t = L - 1; t >= 0; --t) {
      MatX<S> dx = out_proj_.backward(d_outputs[t]);
      dh[layers_ - 1] += dx;
      MatX<S> d_step_in;
      for (int l = layers_ - 1; l >= 0; --l) {
        d_step_in = cells_[l].step_backward(cache.caches[l][t], dh[l], dc[l]);
        if (l > 0) dh[l - 1] += d_step_in;
      }
      if (!cache.teacher_forcing && t > 0) d_outputs[t - 1] += d_step_in;
      // teacher inputs are frozen embeddings: their gradient is dropped
    }
    return {std::move(dh), std::move(dc)};
  }

  void collect(std::vector<Param<S>*>& out) {
    for (auto& c : cells_) c.collect(out);
    out_proj_.collect(out);
  }
  void clear_cache() {
    caches_.clear();
    out_proj_.clear_cache();
  }

 private:
  struct Cache {
    int L = 0;
    bool teacher_forcing = true;
    std::vector<std::vector<typename SeqCell<S>::StepCache>> caches;  // [layer][step]
  };
  int layers_ = 0, hidden_ = 0, embed_ = 0;
  std::vector<SeqCell<S>> cells_;
  Dense<S> out_proj_;
  std::vector<Cache> caches_;
};

}  // namespace crvae::nn
