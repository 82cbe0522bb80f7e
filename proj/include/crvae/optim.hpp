#pragma once

// AdamW with elementwise gradient clipping. The clip is applied to the raw
// gradient before it enters the moment estimates, so a clip of 0.01 bounds
// every coordinate's contribution per step.

#include <cmath>
#include <vector>

#include "crvae/nn.hpp"
#include "crvae/types.hpp"

namespace crvae {

template <typename S>
class AdamW {
 public:
  AdamW(std::vector<nn::Param<S>*> params, double lr, double weight_decay, double grad_clip)
      : params_(std::move(params)), lr_(lr), wd_(weight_decay), clip_(grad_clip) {
    m_.resize(params_.size());
    v_.resize(params_.size());
  }

  void step() {
    ++t_;
    const S b1 = S(0.9), b2 = S(0.999), eps = S(1e-8);
    const S bc1 = S(1) - std::pow(b1, static_cast<S>(t_));
    const S bc2 = S(1) - std::pow(b2, static_cast<S>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = *params_[i];
      if (p.grad.size() == 0) continue;  // parameter untouched this step
      if (m_[i].size() == 0) {
        m_[i] = MatX<S>::Zero(p.value.rows(), p.value.cols());
        v_[i] = MatX<S>::Zero(p.value.rows(), p.value.cols());
      }
      ArrXX<S> g = p.grad.array().min(S(clip_)).max(S(-clip_));
      m_[i] = (b1 * m_[i].array() + (S(1) - b1) * g).matrix();
      v_[i] = (b2 * v_[i].array() + (S(1) - b2) * g.square()).matrix();
      ArrXX<S> mhat = m_[i].array() / bc1;
      ArrXX<S> vhat = v_[i].array() / bc2;
      p.value.array() -=
          S(lr_) * (mhat / (vhat.sqrt() + eps) + S(wd_) * p.value.array());
    }
  }

  void reset() {
    t_ = 0;
    for (auto& m : m_) m.resize(0, 0);
    for (auto& v : v_) v.resize(0, 0);
  }

 private:
  std::vector<nn::Param<S>*> params_;
  std::vector<MatX<S>> m_, v_;
  double lr_, wd_, clip_;
  long t_ = 0;
};

}  // namespace crvae
