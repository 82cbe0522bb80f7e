#pragma once

// The convolutional-recurrent VAE: a CNN image path and a recurrent text path
// fused through dense layers into a (mu, log_sigma) latent pair, decoded by a
// mirrored stack. Backprop is hand-rolled through the layer objects in nn.hpp.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "crvae/nn.hpp"
#include "crvae/types.hpp"

namespace crvae {

struct ModelConfig {
  int image_h = 120;
  int image_w = 200;
  int channels = 32;
  int lstm_hidden = 512;
  int lstm_layers = 2;
  bool bidirectional = true;
  int embed_dim = 300;
  int mid_dim = 4000;
  int latent_dim = 1000;
  int max_len = 20;
  double lambda_text = 3.0;
  double kl_weight = 0.0;  // extension knob; the reference loss has no KL term
  std::string cell = "lstm";
  bool teacher_forcing = true;
  double lr = 1e-4;
  double weight_decay = 0.01;
  double grad_clip = 0.01;
  int epochs = 500;
  int batch_size = 16;
  std::uint64_t seed = 0;

  // Architecture constants: the conv stack is fixed at 3x3 kernels with 2x2
  // pooling, three stages deep on each side.
  static constexpr int kConvKernel = 3;
  static constexpr int kPool = 2;
  static constexpr int kConvStages = 3;

  int conv_flat_dim() const { return channels * (image_h / 8) * (image_w / 8); }
  int text_feat_dim() const { return lstm_layers * (bidirectional ? 2 : 1) * lstm_hidden; }
  int fused_dim() const { return conv_flat_dim() + text_feat_dim(); }

  void validate() const {
    if (image_h <= 0 || image_w <= 0 || image_h % 8 != 0 || image_w % 8 != 0)
      throw ConfigError("model: image dims must be positive multiples of 8 (three 2x2 pools)");
    if (channels <= 0 || lstm_hidden <= 0 || lstm_layers <= 0 || embed_dim <= 0 ||
        mid_dim <= 0 || latent_dim <= 0 || max_len <= 0)
      throw ConfigError("model: all layer dimensions must be positive");
    if (lambda_text < 0) throw ConfigError("model: lambda_text must be >= 0");
    if (lr <= 0) throw ConfigError("model: lr must be > 0");
    if (grad_clip <= 0) throw ConfigError("model: grad_clip must be > 0");
    if (epochs < 0) throw ConfigError("model: epochs must be >= 0");
    if (batch_size <= 0) throw ConfigError("model: batch_size must be > 0");
    nn::cell_kind_from_string(cell);  // throws on unknown kinds
  }
};

template <typename S>
struct LatentStats {
  MatX<S> mu;         // (latent x B)
  MatX<S> log_sigma;  // (latent x B)
};

struct LossBreakdown {
  double image_loss = 0;
  double text_loss = 0;
  double kl = 0;  // zero unless kl_weight is enabled
  double total = 0;
};

// One training batch, feature-major: images (3*H*W x B) channel-major per
// column; captions as max_len matrices of (embed x B); mask (max_len x B)
// with 1 marking real tokens.
template <typename S>
struct Batch {
  MatX<S> images;
  std::vector<MatX<S>> captions;
  MatX<S> mask;

  Eigen::Index size() const { return images.cols(); }
};

template <typename S>
class CrvaeModel {
 public:
  struct Decoded {
    MatX<S> image;              // (3*H*W x B)
    std::vector<MatX<S>> text;  // L of (embed x B)
  };

  CrvaeModel(const ModelConfig& cfg, Rng& rng) : cfg_(cfg) {
    cfg.validate();
    const int C = cfg.channels, H = cfg.image_h, W = cfg.image_w;
    const nn::CellKind kind = nn::cell_kind_from_string(cfg.cell);
    conv1_ = nn::Conv2d<S>("enc.conv1", 3, C, H, W, rng);
    pool1_ = nn::MaxPool2<S>(C, H, W);
    conv2_ = nn::Conv2d<S>("enc.conv2", C, C, H / 2, W / 2, rng);
    pool2_ = nn::MaxPool2<S>(C, H / 2, W / 2);
    conv3_ = nn::Conv2d<S>("enc.conv3", C, C, H / 4, W / 4, rng);
    pool3_ = nn::MaxPool2<S>(C, H / 4, W / 4);
    text_enc_ = nn::SeqEncoder<S>("enc.rnn", kind, cfg.embed_dim, cfg.lstm_hidden,
                                  cfg.lstm_layers, cfg.bidirectional, rng);
    bn_img_ = nn::BatchNorm1d<S>("enc.bn_img", cfg.conv_flat_dim());
    bn_txt_ = nn::BatchNorm1d<S>("enc.bn_txt", cfg.text_feat_dim());
    fc1_ = nn::Dense<S>("enc.fc1", cfg.fused_dim(), cfg.mid_dim, rng);
    fc_latent_ = nn::Dense<S>("enc.fc_latent", cfg.mid_dim, 2 * cfg.latent_dim, rng);

    fc_z_ = nn::Dense<S>("dec.fc_z", cfg.latent_dim, cfg.mid_dim, rng);
    fc_f_ = nn::Dense<S>("dec.fc_f", cfg.mid_dim, cfg.fused_dim(), rng);
    tconv1_ = nn::ConvT2d<S>("dec.tconv1", C, C, H / 8, W / 8, rng);
    dconv1_ = nn::Conv2d<S>("dec.conv1", C, C, H / 4, W / 4, rng);
    tconv2_ = nn::ConvT2d<S>("dec.tconv2", C, C, H / 4, W / 4, rng);
    dconv2_ = nn::Conv2d<S>("dec.conv2", C, C, H / 2, W / 2, rng);
    tconv3_ = nn::ConvT2d<S>("dec.tconv3", C, C, H / 2, W / 2, rng);
    dconv3_ = nn::Conv2d<S>("dec.conv3", C, C, H, W, rng);
    out_conv_ = nn::Conv2d<S>("dec.out_conv", C, 3, H, W, rng);  // linear output
    proj_h_ = nn::Dense<S>("dec.proj_h", cfg.text_feat_dim(),
                           cfg.lstm_layers * cfg.lstm_hidden, rng);
    proj_c_ = nn::Dense<S>("dec.proj_c", cfg.text_feat_dim(),
                           cfg.lstm_layers * cfg.lstm_hidden, rng);
    text_dec_ = nn::SeqDecoder<S>("dec.rnn", kind, cfg.embed_dim, cfg.lstm_hidden,
                                  cfg.lstm_layers, rng);
  }

  const ModelConfig& config() const { return cfg_; }

  void set_training(bool training) {
    bn_img_.training = training;
    bn_txt_.training = training;
  }

  LatentStats<S> encode(const MatX<S>& images, const std::vector<MatX<S>>& captions) {
    if (images.rows() != 3 * cfg_.image_h * cfg_.image_w)
      throw ContractViolation("encode: image rows mismatch config");
    if (captions.empty() || captions[0].rows() != cfg_.embed_dim)
      throw ContractViolation("encode: caption embedding dim mismatch");
    MatX<S> x = pool1_.forward(relu1_.forward(conv1_.forward(images)));
    x = pool2_.forward(relu2_.forward(conv2_.forward(x)));
    x = pool3_.forward(relu3_.forward(conv3_.forward(x)));  // already flat, channel-major
    MatX<S> tf = text_enc_.forward(captions);
    MatX<S> xb = bn_img_.forward(x);
    MatX<S> tb = bn_txt_.forward(tf);
    MatX<S> fused(cfg_.fused_dim(), images.cols());
    fused.topRows(cfg_.conv_flat_dim()) = xb;
    fused.bottomRows(cfg_.text_feat_dim()) = tb;
    MatX<S> mid = relu_mid_.forward(fc1_.forward(fused));
    MatX<S> lat = fc_latent_.forward(mid);  // (2*latent x B)
    LatentStats<S> st;
    st.mu = lat.topRows(cfg_.latent_dim);
    st.log_sigma = lat.bottomRows(cfg_.latent_dim);
    return st;
  }

  // z = mu + exp(log_sigma) .* eps
  static MatX<S> reparameterize(const LatentStats<S>& st, const MatX<S>& eps) {
    return (st.mu.array() + st.log_sigma.array().exp() * eps.array()).matrix();
  }

  static MatX<S> sample_eps(const LatentStats<S>& st, Rng& rng) {
    return rng.template randn<S>(st.mu.rows(), st.mu.cols());
  }

  // teacher may be empty when teacher_forcing is false.
  Decoded decode(const MatX<S>& z, const std::vector<MatX<S>>& teacher, int L,
                 bool teacher_forcing) {
    if (teacher_forcing && static_cast<int>(teacher.size()) < L)
      throw ContractViolation("decode: teacher embeddings required in training mode");
    MatX<S> mid = relu_z_.forward(fc_z_.forward(z));
    MatX<S> fused = relu_f_.forward(fc_f_.forward(mid));
    MatX<S> xi = fused.topRows(cfg_.conv_flat_dim());
    MatX<S> xt = fused.bottomRows(cfg_.text_feat_dim());

    MatX<S> img = relu_t1_.forward(tconv1_.forward(xi));
    img = relu_d1_.forward(dconv1_.forward(img));
    img = relu_t2_.forward(tconv2_.forward(img));
    img = relu_d2_.forward(dconv2_.forward(img));
    img = relu_t3_.forward(tconv3_.forward(img));
    img = relu_d3_.forward(dconv3_.forward(img));
    img = out_conv_.forward(img);

    MatX<S> h0 = proj_h_.forward(xt);
    MatX<S> c0 = proj_c_.forward(xt);
    std::vector<MatX<S>> h0s(cfg_.lstm_layers), c0s(cfg_.lstm_layers);
    for (int l = 0; l < cfg_.lstm_layers; ++l) {
      h0s[l] = h0.middleRows(l * cfg_.lstm_hidden, cfg_.lstm_hidden);
      c0s[l] = c0.middleRows(l * cfg_.lstm_hidden, cfg_.lstm_hidden);
    }
    Decoded out;
    out.image = std::move(img);
    out.text = text_dec_.forward(h0s, c0s, teacher, L, teacher_forcing);
    return out;
  }

  LossBreakdown compute_loss(const Batch<S>& batch, const Decoded& recon,
                             const LatentStats<S>* st = nullptr) const {
    LossBreakdown lb;
    const double img_n = static_cast<double>(batch.images.size());
    lb.image_loss = static_cast<double>((recon.image - batch.images).squaredNorm()) / img_n;
    const double masked = static_cast<double>(batch.mask.sum());
    const double denom = masked * cfg_.embed_dim;
    if (denom > 0) {
      double acc = 0;
      for (size_t t = 0; t < batch.captions.size(); ++t) {
        ArrXX<S> diff = (recon.text[t] - batch.captions[t]).array();
        diff.rowwise() *= batch.mask.row(static_cast<int>(t)).array();
        acc += static_cast<double>(diff.square().sum());
      }
      lb.text_loss = acc / denom;
    }
    lb.total = lb.image_loss + cfg_.lambda_text * lb.text_loss;
    if (cfg_.kl_weight != 0) {
      if (st == nullptr) throw ContractViolation("compute_loss: KL term needs latent stats");
      const double B = static_cast<double>(st->mu.cols());
      double kl = -0.5 * static_cast<double>(
                             (1 + 2 * st->log_sigma.array() - st->mu.array().square() -
                              (2 * st->log_sigma.array()).exp())
                                 .sum());
      lb.kl = kl / B;
      lb.total += cfg_.kl_weight * lb.kl;
    }
    return lb;
  }

  // Forward with fixed reparameterization noise; no gradients, caches dropped.
  LossBreakdown forward_loss(const Batch<S>& batch, const MatX<S>& eps) {
    LatentStats<S> st = encode(batch.images, batch.captions);
    MatX<S> z = reparameterize(st, eps);
    Decoded recon =
        decode(z, batch.captions, static_cast<int>(batch.captions.size()), cfg_.teacher_forcing);
    LossBreakdown lb = compute_loss(batch, recon, &st);
    clear_caches();
    return lb;
  }

  // Forward + full backward; gradients accumulate into the parameters.
  LossBreakdown forward_backward(const Batch<S>& batch, const MatX<S>& eps) {
    const int L = static_cast<int>(batch.captions.size());
    LatentStats<S> st = encode(batch.images, batch.captions);
    MatX<S> z = reparameterize(st, eps);
    Decoded recon = decode(z, batch.captions, L, cfg_.teacher_forcing);
    LossBreakdown lb = compute_loss(batch, recon, &st);

    // d total / d recon
    const double img_n = static_cast<double>(batch.images.size());
    MatX<S> d_img = (recon.image - batch.images) * S(2.0 / img_n);
    const double masked = static_cast<double>(batch.mask.sum());
    const double denom = masked * cfg_.embed_dim;
    std::vector<MatX<S>> d_txt(L);
    for (int t = 0; t < L; ++t) {
      if (denom > 0) {
        ArrXX<S> diff = (recon.text[t] - batch.captions[t]).array();
        diff.rowwise() *= batch.mask.row(t).array();
        d_txt[t] = (diff * S(2.0 * cfg_.lambda_text / denom)).matrix();
      } else {
        d_txt[t] = MatX<S>::Zero(cfg_.embed_dim, batch.images.cols());
      }
    }

    // decoder image path
    MatX<S> dxi = out_conv_.backward(d_img);
    dxi = dconv3_.backward(relu_d3_.backward(dxi));
    dxi = tconv3_.backward(relu_t3_.backward(dxi));
    dxi = dconv2_.backward(relu_d2_.backward(dxi));
    dxi = tconv2_.backward(relu_t2_.backward(dxi));
    dxi = dconv1_.backward(relu_d1_.backward(dxi));
    dxi = tconv1_.backward(relu_t1_.backward(dxi));

    // decoder text path
    auto [dh0s, dc0s] = text_dec_.backward(std::move(d_txt));
    MatX<S> dh0(cfg_.lstm_layers * cfg_.lstm_hidden, batch.images.cols());
    MatX<S> dc0(cfg_.lstm_layers * cfg_.lstm_hidden, batch.images.cols());
    for (int l = 0; l < cfg_.lstm_layers; ++l) {
      dh0.middleRows(l * cfg_.lstm_hidden, cfg_.lstm_hidden) = dh0s[l];
      dc0.middleRows(l * cfg_.lstm_hidden, cfg_.lstm_hidden) = dc0s[l];
    }
    MatX<S> dxt = proj_h_.backward(dh0) + proj_c_.backward(dc0);

    MatX<S> d_fused(cfg_.fused_dim(), batch.images.cols());
    d_fused.topRows(cfg_.conv_flat_dim()) = dxi;
    d_fused.bottomRows(cfg_.text_feat_dim()) = dxt;
    MatX<S> dz = fc_z_.backward(relu_z_.backward(fc_f_.backward(relu_f_.backward(d_fused))));

    // reparameterization
    MatX<S> dmu = dz;
    MatX<S> dls = (dz.array() * eps.array() * st.log_sigma.array().exp()).matrix();
    if (cfg_.kl_weight != 0) {
      const S w = static_cast<S>(cfg_.kl_weight / static_cast<double>(st.mu.cols()));
      dmu += (st.mu.array() * w).matrix();
      dls += (((2 * st.log_sigma.array()).exp() - 1) * w).matrix();
    }

    // encoder
    MatX<S> d_lat(2 * cfg_.latent_dim, batch.images.cols());
    d_lat.topRows(cfg_.latent_dim) = dmu;
    d_lat.bottomRows(cfg_.latent_dim) = dls;
    MatX<S> d_enc_fused = fc1_.backward(relu_mid_.backward(fc_latent_.backward(d_lat)));
    MatX<S> d_conv = bn_img_.backward(d_enc_fused.topRows(cfg_.conv_flat_dim()));
    MatX<S> d_feat = bn_txt_.backward(d_enc_fused.bottomRows(cfg_.text_feat_dim()));
    text_enc_.backward(d_feat);  // caption-embedding grads dropped: tables are frozen
    d_conv = conv3_.backward(relu3_.backward(pool3_.backward(d_conv)));
    d_conv = conv2_.backward(relu2_.backward(pool2_.backward(d_conv)));
    conv1_.backward(relu1_.backward(pool1_.backward(d_conv)));
    return lb;
  }

  std::vector<nn::Param<S>*> parameters() {
    std::vector<nn::Param<S>*> out;
    conv1_.collect(out);
    conv2_.collect(out);
    conv3_.collect(out);
    text_enc_.collect(out);
    bn_img_.collect(out);
    bn_txt_.collect(out);
    fc1_.collect(out);
    fc_latent_.collect(out);
    fc_z_.collect(out);
    fc_f_.collect(out);
    tconv1_.collect(out);
    dconv1_.collect(out);
    tconv2_.collect(out);
    dconv2_.collect(out);
    tconv3_.collect(out);
    dconv3_.collect(out);
    out_conv_.collect(out);
    proj_h_.collect(out);
    proj_c_.collect(out);
    text_dec_.collect(out);
    return out;
  }

  std::vector<std::pair<std::string, MatX<S>*>> buffers() {
    return {{"enc.bn_img.running_mean", &bn_img_.running_mean},
            {"enc.bn_img.running_var", &bn_img_.running_var},
            {"enc.bn_txt.running_mean", &bn_txt_.running_mean},
            {"enc.bn_txt.running_var", &bn_txt_.running_var}};
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  void clear_caches() {
    conv1_.clear_cache();
    conv2_.clear_cache();
    conv3_.clear_cache();
    pool1_.clear_cache();
    pool2_.clear_cache();
    pool3_.clear_cache();
    relu1_.clear_cache();
    relu2_.clear_cache();
    relu3_.clear_cache();
    text_enc_.clear_cache();
    bn_img_.clear_cache();
    bn_txt_.clear_cache();
    fc1_.clear_cache();
    relu_mid_.clear_cache();
    fc_latent_.clear_cache();
    fc_z_.clear_cache();
    relu_z_.clear_cache();
    fc_f_.clear_cache();
    relu_f_.clear_cache();
    tconv1_.clear_cache();
    relu_t1_.clear_cache();
    dconv1_.clear_cache();
    relu_d1_.clear_cache();
    tconv2_.clear_cache();
    relu_t2_.clear_cache();
    dconv2_.clear_cache();
    relu_d2_.clear_cache();
    tconv3_.clear_cache();
    relu_t3_.clear_cache();
    dconv3_.clear_cache();
    relu_d3_.clear_cache();
    out_conv_.clear_cache();
    proj_h_.clear_cache();
    proj_c_.clear_cache();
    text_dec_.clear_cache();
  }

 private:
  ModelConfig cfg_;
  // encoder
  nn::Conv2d<S> conv1_, conv2_, conv3_;
  nn::MaxPool2<S> pool1_, pool2_, pool3_;
  nn::ReLU<S> relu1_, relu2_, relu3_;
  nn::SeqEncoder<S> text_enc_;
  nn::BatchNorm1d<S> bn_img_, bn_txt_;
  nn::Dense<S> fc1_, fc_latent_;
  nn::ReLU<S> relu_mid_;
  // decoder
  nn::Dense<S> fc_z_, fc_f_;
  nn::ReLU<S> relu_z_, relu_f_;
  nn::ConvT2d<S> tconv1_, tconv2_, tconv3_;
  nn::Conv2d<S> dconv1_, dconv2_, dconv3_, out_conv_;
  nn::ReLU<S> relu_t1_, relu_t2_, relu_t3_, relu_d1_, relu_d2_, relu_d3_;
  nn::Dense<S> proj_h_, proj_c_;
  nn::SeqDecoder<S> text_dec_;
};

}  // namespace crvae
