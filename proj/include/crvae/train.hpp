#pragma once

// Minibatch training loop. Deterministic given the config seed: epoch
// shuffles, parameter init, and reparameterization noise all come from one
// seeded stream. A non-finite loss aborts the run and rolls the model back to
// the end of the last finite epoch.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <utility>
#include <vector>

#include "crvae/model.hpp"
#include "crvae/optim.hpp"
#include "crvae/types.hpp"

namespace crvae {

// One dataset item: a single aligned pair, already embedded.
template <typename S>
struct PairSample {
  VecX<S> image;              // (3*H*W)
  MatX<S> caption;            // (max_len x embed), row per step
  std::vector<char> mask;     // max_len
  int pair_id = 0;
};

template <typename S>
Batch<S> make_batch(const std::vector<PairSample<S>>& data, const std::vector<int>& idx,
                    const ModelConfig& cfg) {
  const int B = static_cast<int>(idx.size());
  Batch<S> b;
  b.images.resize(3 * cfg.image_h * cfg.image_w, B);
  b.captions.assign(cfg.max_len, MatX<S>::Zero(cfg.embed_dim, B));
  b.mask = MatX<S>::Zero(cfg.max_len, B);
  for (int j = 0; j < B; ++j) {
    const auto& s = data[idx[j]];
    b.images.col(j) = s.image;
    for (int t = 0; t < cfg.max_len; ++t) {
      b.captions[t].col(j) = s.caption.row(t).transpose();
      b.mask(t, j) = s.mask[t] ? S(1) : S(0);
    }
  }
  return b;
}

struct TrainResult {
  std::vector<LossBreakdown> curve;  // one entry per completed epoch
  int completed_epochs = 0;
  bool aborted = false;  // non-finite loss hit; model holds the last good state
};

template <typename S>
class Trainer {
 public:
  using EpochHook = std::function<void(int epoch, const LossBreakdown&)>;

  Trainer(CrvaeModel<S>& model, const ModelConfig& cfg) : model_(model), cfg_(cfg) {}

  TrainResult run(const std::vector<PairSample<S>>& data, Rng& rng,
                  const EpochHook& hook = nullptr) {
    if (data.empty()) throw ContractViolation("train: empty dataset");
    TrainResult res;
    model_.set_training(true);
    AdamW<S> opt(model_.parameters(), cfg_.lr, cfg_.weight_decay, cfg_.grad_clip);
    std::vector<int> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    auto snapshot = take_snapshot();
    for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng.engine());
      double img = 0, txt = 0, kl = 0, tot = 0;
      long seen = 0;
      bool bad = false;
      for (size_t off = 0; off < order.size(); off += cfg_.batch_size) {
        const size_t end = std::min(off + cfg_.batch_size, order.size());
        std::vector<int> idx(order.begin() + off, order.begin() + end);
        Batch<S> batch = make_batch(data, idx, cfg_);
        MatX<S> eps = rng.template randn<S>(cfg_.latent_dim, batch.size());
        model_.zero_grad();
        LossBreakdown lb = model_.forward_backward(batch, eps);
        if (!std::isfinite(lb.total)) {
          bad = true;
          break;
        }
        opt.step();
        const double w = static_cast<double>(idx.size());
        img += lb.image_loss * w;
        txt += lb.text_loss * w;
        kl += lb.kl * w;
        tot += lb.total * w;
        seen += idx.size();
      }
      if (bad) {
        restore_snapshot(snapshot);
        res.aborted = true;
        break;
      }
      LossBreakdown epoch_lb{img / seen, txt / seen, kl / seen, tot / seen};
      res.curve.push_back(epoch_lb);
      res.completed_epochs = epoch + 1;
      snapshot = take_snapshot();
      if (hook) hook(epoch, epoch_lb);
    }
    return res;
  }

 private:
  using Snapshot = std::pair<std::vector<MatX<S>>, std::vector<MatX<S>>>;

  Snapshot take_snapshot() {
    Snapshot s;
    for (auto* p : model_.parameters()) s.first.push_back(p->value);
    for (auto& [name, buf] : model_.buffers()) s.second.push_back(*buf);
    return s;
  }
  void restore_snapshot(const Snapshot& s) {
    auto params = model_.parameters();
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = s.first[i];
    auto bufs = model_.buffers();
    for (size_t i = 0; i < bufs.size(); ++i) *bufs[i].second = s.second[i];
  }

  CrvaeModel<S>& model_;
  ModelConfig cfg_;
};

// Latent means for every sample, dataset order, eval-mode batch norm; no
// sampling is involved so the result is deterministic.
template <typename S>
MatX<S> extract_latents(CrvaeModel<S>& model, const std::vector<PairSample<S>>& data,
                        const ModelConfig& cfg) {
  MatX<S> out(data.size(), cfg.latent_dim);
  model.set_training(false);
  std::vector<int> idx;
  for (size_t off = 0; off < data.size(); off += cfg.batch_size) {
    const size_t end = std::min(off + static_cast<size_t>(cfg.batch_size), data.size());
    idx.clear();
    for (size_t i = off; i < end; ++i) idx.push_back(static_cast<int>(i));
    Batch<S> batch = make_batch(data, idx, cfg);
    LatentStats<S> st = model.encode(batch.images, batch.captions);
    model.clear_caches();
    for (size_t i = off; i < end; ++i)
      out.row(i) = st.mu.col(i - off).transpose();
  }
  model.set_training(true);
  return out;
}

}  // namespace crvae
