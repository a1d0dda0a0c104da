#include "a2k/networks.hpp"

#include <cmath>

#include "a2k/errors.hpp"
#include "a2k/keypoints.hpp"

namespace a2k {

Ablation ablation_from_string(const std::string& name) {
  if (name == "full") return Ablation::kFull;
  if (name == "only_audio") return Ablation::kOnlyAudio;
  if (name == "no_piv") return Ablation::kNoPiv;
  if (name == "no_discriminator") return Ablation::kNoDiscriminator;
  throw ValidationError("unknown ablation '" + name +
                        "' (want full|only_audio|no_piv|no_discriminator)");
}

std::string ablation_to_string(Ablation a) {
  switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kOnlyAudio: return "only_audio";
    case Ablation::kNoPiv: return "no_piv";
    case Ablation::kNoDiscriminator: return "no_discriminator";
  }
  return "full";
}

ModelConfig ModelConfig::toy() {
  ModelConfig cfg;
  cfg.base_channels = 8;
  cfg.latent_pv_dim = 8;
  cfg.latent_piv_dim = 8;
  cfg.n_temporal_levels = 2;
  cfg.discriminator_channels = 8;
  return cfg;
}

void ModelConfig::validate() const {
  if (base_channels <= 0 || latent_pv_dim <= 0 || latent_piv_dim <= 0 ||
      n_temporal_levels <= 0 || discriminator_channels <= 0 || n_mels <= 0 ||
      frames_per_video_frame <= 0) {
    throw ValidationError("model config values must be positive");
  }
}

namespace layers {

Var init_tensor(std::vector<int> shape, Rng& rng, double stddev) {
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = rng.normal(0.0, stddev);
  return ad::leaf(std::move(t), true);
}

Conv1d::Conv1d(int c_in, int c_out, int k, int stride, int pad, Rng& rng)
    : w(init_tensor({c_out, c_in, k}, rng)),
      b(ad::leaf(Tensor({c_out}), true)),
      stride(stride),
      pad(pad) {}

void Conv1d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

ConvTranspose1d::ConvTranspose1d(int c_in, int c_out, int k, int stride, int pad, Rng& rng)
    : w(init_tensor({c_in, c_out, k}, rng)),
      b(ad::leaf(Tensor({c_out}), true)),
      stride(stride),
      pad(pad) {}

void ConvTranspose1d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

Conv2d::Conv2d(int c_in, int c_out, int kh, int kw, int stride_h, int stride_w, int pad_h,
               int pad_w, Rng& rng)
    : w(init_tensor({c_out, c_in, kh, kw}, rng)),
      b(ad::leaf(Tensor({c_out}), true)),
      stride_h(stride_h),
      stride_w(stride_w),
      pad_h(pad_h),
      pad_w(pad_w) {}

void Conv2d::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

Dense::Dense(int in_dim, int out_dim, Rng& rng)
    : w(init_tensor({in_dim, out_dim}, rng)), b(ad::leaf(Tensor({out_dim}), true)) {}

void Dense::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".w", w});
  out.push_back({prefix + ".b", b});
}

InstanceNorm::InstanceNorm(int channels) {
  Tensor g({channels});
  g.fill(1.0);
  gamma = ad::leaf(std::move(g), true);
  beta = ad::leaf(Tensor({channels}), true);
}

void InstanceNorm::collect(const std::string& prefix, ParamList& out) const {
  out.push_back({prefix + ".gamma", gamma});
  out.push_back({prefix + ".beta", beta});
}

}  // namespace layers

namespace {

Var lrelu(const Var& x) { return ad::leaky_relu(x, kLeakySlope); }

int ceil_div2(int v) { return (v + 1) / 2; }

}  // namespace

// ---------------------------------------------------------------------------
// AudioEncoder

AudioEncoder::AudioEncoder(const ModelConfig& cfg, Rng& rng)
    : n_mels_(cfg.n_mels), fpv_(cfg.frames_per_video_frame), n_levels_(cfg.n_temporal_levels) {
  const int c = cfg.base_channels;
  int h = cfg.n_mels;
  int c_in = 1;
  while (h > 1) {
    mel_convs_.emplace_back(c_in, c, 3, 3, 2, 1, 1, 1, rng);  // stride (2,1) halves mel only
    mel_norms_.emplace_back(c);
    c_in = c;
    h = ceil_div2(h);
  }
  reduce1_ = layers::Conv1d(c, c, 4, 2, 1, rng);
  reduce_norm1_ = layers::InstanceNorm(c);
  reduce2_ = layers::Conv1d(c, c, 4, 2, 1, rng);
  reduce_norm2_ = layers::InstanceNorm(c);
  for (int i = 1; i < n_levels_; ++i) {
    pyramid_.emplace_back(c, c, 4, 2, 1, rng);
    pyramid_norms_.emplace_back(c);
  }
}

std::vector<Var> AudioEncoder::forward(const Var& spec_window) const {
  const Tensor& v = spec_window->value;
  if (v.ndim() != 2 || v.dim(0) != n_mels_) {
    throw ValidationError("audio encoder: mel axis must have " + std::to_string(n_mels_) +
                          " bins, got input " + v.shape_string());
  }
  const int steps = v.dim(1);
  if (steps % fpv_ != 0) {
    throw ValidationError("audio encoder: time axis (" + std::to_string(steps) +
                          " steps) must be divisible by " + std::to_string(fpv_));
  }
  const int t_frames = steps / fpv_;
  const int multiple = 1 << n_levels_;
  if (t_frames % multiple != 0) {
    throw ValidationError("audio encoder: time axis (" + std::to_string(t_frames) +
                          " frames) must be divisible by " + std::to_string(multiple));
  }

  Var x = ad::reshape(spec_window, {1, n_mels_, steps});
  for (std::size_t i = 0; i < mel_convs_.size(); ++i) {
    x = lrelu(mel_norms_[i].forward(mel_convs_[i].forward(x)));
  }
  x = ad::reshape(x, {x->value.dim(0), x->value.dim(2)});  // [C, 4T]

  x = lrelu(reduce_norm1_.forward(reduce1_.forward(x)));  // [C, 2T]
  x = lrelu(reduce_norm2_.forward(reduce2_.forward(x)));  // [C, T]

  std::vector<Var> skips;
  skips.reserve(static_cast<std::size_t>(n_levels_));
  skips.push_back(x);
  for (std::size_t i = 0; i < pyramid_.size(); ++i) {
    x = lrelu(pyramid_norms_[i].forward(pyramid_[i].forward(x)));
    skips.push_back(x);
  }
  return skips;
}

void AudioEncoder::collect(const std::string& prefix, ParamList& out) const {
  for (std::size_t i = 0; i < mel_convs_.size(); ++i) {
    mel_convs_[i].collect(prefix + ".mel" + std::to_string(i), out);
    mel_norms_[i].collect(prefix + ".mel" + std::to_string(i) + ".norm", out);
  }
  reduce1_.collect(prefix + ".reduce0", out);
  reduce_norm1_.collect(prefix + ".reduce0.norm", out);
  reduce2_.collect(prefix + ".reduce1", out);
  reduce_norm2_.collect(prefix + ".reduce1.norm", out);
  for (std::size_t i = 0; i < pyramid_.size(); ++i) {
    pyramid_[i].collect(prefix + ".pyr" + std::to_string(i), out);
    pyramid_norms_[i].collect(prefix + ".pyr" + std::to_string(i) + ".norm", out);
  }
}

// ---------------------------------------------------------------------------
// PoseEncoder

PoseEncoder::PoseEncoder(int out_dim, bool l2_normalized, Rng& rng)
    : out_dim_(out_dim),
      l2_normalized_(l2_normalized),
      fc0_(kFrameDim, kFcHidden, rng),
      fc1_(kFcHidden, kFcHidden, rng),
      fc2_(kFcHidden, out_dim, rng) {}

Var PoseEncoder::forward_rows(const Var& rows) const {
  const Tensor& v = rows->value;
  if (v.ndim() != 2 || v.dim(1) != kFrameDim) {
    throw ValidationError("pose encoder: expected [n, 136] input, got " + v.shape_string());
  }
  if (!v.all_finite()) throw ValidationError("pose encoder: non-finite input");
  Var x = lrelu(fc0_.forward(rows));
  x = lrelu(fc1_.forward(x));
  x = fc2_.forward(x);
  if (l2_normalized_) x = ad::l2_normalize_rows(x);
  return x;
}

Var PoseEncoder::forward_vector(const Var& k) const {
  const Tensor& v = k->value;
  if (v.ndim() != 1 || v.dim(0) != kFrameDim) {
    throw ValidationError("pose encoder: expected a 136-vector, got " + v.shape_string());
  }
  Var rows = ad::reshape(k, {1, kFrameDim});
  return ad::reshape(forward_rows(rows), {out_dim_});
}

void PoseEncoder::collect(const std::string& prefix, ParamList& out) const {
  fc0_.collect(prefix + ".fc0", out);
  fc1_.collect(prefix + ".fc1", out);
  fc2_.collect(prefix + ".fc2", out);
}

// ---------------------------------------------------------------------------
// Decoder

Decoder::Decoder(const ModelConfig& cfg, Rng& rng) {
  const int c = cfg.base_channels;
  bottleneck_ =
      layers::Conv1d(c + cfg.latent_pv_dim + cfg.latent_piv_dim, c, 1, 1, 0, rng);
  bottleneck_norm_ = layers::InstanceNorm(c);
  for (int i = 0; i < cfg.n_temporal_levels - 1; ++i) {
    ups_.emplace_back(c, c, 4, 2, 1, rng);
    up_norms_.emplace_back(c);
    fuse_.emplace_back(2 * c, c, 3, 1, 1, rng);
    fuse_norms_.emplace_back(c);
  }
  head_ = layers::Conv1d(c, kFrameDim, 1, 1, 0, rng);
}

Var Decoder::forward(const std::vector<Var>& skips, const Var& pv_latent,
                     const Var& piv_latent) const {
  if (skips.size() != ups_.size() + 1) {
    throw ValidationError("decoder: expected " + std::to_string(ups_.size() + 1) +
                          " skip levels, got " + std::to_string(skips.size()));
  }
  const Var& coarse = skips.back();
  const int bottom_len = coarse->value.dim(1);
  Var x = ad::concat_rows({coarse, ad::broadcast_col(pv_latent, bottom_len),
                           ad::broadcast_col(piv_latent, bottom_len)});
  x = lrelu(bottleneck_norm_.forward(bottleneck_.forward(x)));
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    const Var& skip = skips[skips.size() - 2 - i];
    x = lrelu(up_norms_[i].forward(ups_[i].forward(x)));
    if (x->value.dim(1) != skip->value.dim(1)) {
      throw ValidationError("decoder: upsampled length " + std::to_string(x->value.dim(1)) +
                            " does not match skip length " +
                            std::to_string(skip->value.dim(1)));
    }
    x = ad::concat_rows({x, skip});
    x = lrelu(fuse_norms_[i].forward(fuse_[i].forward(x)));
  }
  return ad::transpose2(head_.forward(x));  // [T, 136]
}

void Decoder::collect(const std::string& prefix, ParamList& out) const {
  bottleneck_.collect(prefix + ".bottleneck", out);
  bottleneck_norm_.collect(prefix + ".bottleneck.norm", out);
  for (std::size_t i = 0; i < ups_.size(); ++i) {
    ups_[i].collect(prefix + ".up" + std::to_string(i), out);
    up_norms_[i].collect(prefix + ".up" + std::to_string(i) + ".norm", out);
    fuse_[i].collect(prefix + ".fuse" + std::to_string(i), out);
    fuse_norms_[i].collect(prefix + ".fuse" + std::to_string(i) + ".norm", out);
  }
  head_.collect(prefix + ".head", out);
}

// ---------------------------------------------------------------------------
// Discriminator

Discriminator::Discriminator(const ModelConfig& cfg, Rng& rng) {
  const int c = cfg.discriminator_channels;
  conv0_ = layers::Conv1d(kFrameDim, c, 3, 2, 1, rng);
  conv1_ = layers::Conv1d(c, c, 3, 2, 1, rng);
  norm1_ = layers::InstanceNorm(c);
  conv2_ = layers::Conv1d(c, c, 3, 2, 1, rng);
  norm2_ = layers::InstanceNorm(c);
  head_ = layers::Conv1d(c, 1, 1, 1, 0, rng);
}

Var Discriminator::forward(const Var& seq) const {
  const Tensor& v = seq->value;
  if (v.ndim() != 2 || v.dim(1) != kFrameDim) {
    throw ValidationError("discriminator: expected [T, 136] input, got " + v.shape_string());
  }
  const int t = v.dim(0);
  if (t < 2) {
    throw ValidationError("discriminator: need at least 2 frames for displacements, got " +
                          std::to_string(t));
  }
  Var stacked = ad::transpose2(seq);  // [136, T]
  Var disp = ad::sub(ad::slice_cols(stacked, 1, t - 1), ad::slice_cols(stacked, 0, t - 1));
  Var x = lrelu(conv0_.forward(disp));
  x = lrelu(norm1_.forward(conv1_.forward(x)));
  x = lrelu(norm2_.forward(conv2_.forward(x)));
  Var patches = head_.forward(x);  // [1, n_patches]
  return ad::mean_all(patches);
}

void Discriminator::collect(const std::string& prefix, ParamList& out) const {
  conv0_.collect(prefix + ".conv0", out);
  conv1_.collect(prefix + ".conv1", out);
  norm1_.collect(prefix + ".conv1.norm", out);
  conv2_.collect(prefix + ".conv2", out);
  norm2_.collect(prefix + ".conv2.norm", out);
  head_.collect(prefix + ".head", out);
}

// ---------------------------------------------------------------------------
// Model

namespace {

ModelConfig validated(const ModelConfig& cfg) {
  cfg.validate();
  return cfg;
}

}  // namespace

Model::Model(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(validated(cfg)),
      audio_([&] {
        Rng rng(seed);
        return AudioEncoder(cfg_, rng);
      }()),
      pv_([&] {
        Rng rng(seed + 1);
        return PoseEncoder(cfg_.latent_pv_dim, false, rng);
      }()),
      piv_([&] {
        Rng rng(seed + 2);
        return PoseEncoder(cfg_.latent_piv_dim, true, rng);
      }()),
      decoder_([&] {
        Rng rng(seed + 3);
        return Decoder(cfg_, rng);
      }()),
      disc_([&] {
        Rng rng(seed + 4);
        return Discriminator(cfg_, rng);
      }()) {}

GeneratorOutput Model::generator_forward(const Var& spec_window, const Var& k,
                                         Ablation ablation) const {
  const std::vector<Var> skips = audio_.forward(spec_window);

  Var pv_latent;
  Var piv_latent;
  if (ablation == Ablation::kOnlyAudio) {
    pv_latent = ad::constant(Tensor({cfg_.latent_pv_dim}));
    piv_latent = ad::constant(Tensor({cfg_.latent_piv_dim}));
  } else {
    pv_latent = pv_.forward_vector(k);
    piv_latent = ablation == Ablation::kNoPiv
                     ? ad::constant(Tensor({cfg_.latent_piv_dim}))
                     : piv_.forward_vector(k);
  }
  return {decoder_.forward(skips, pv_latent, piv_latent), pv_latent, piv_latent};
}

ParamList Model::generator_params() const {
  ParamList out;
  audio_.collect("gen.audio", out);
  pv_.collect("gen.pv", out);
  decoder_.collect("gen.dec", out);
  return out;
}

ParamList Model::piv_params() const {
  ParamList out;
  piv_.collect("piv", out);
  return out;
}

ParamList Model::discriminator_params() const {
  ParamList out;
  disc_.collect("disc", out);
  return out;
}

ParamList Model::all_params() const {
  ParamList out = generator_params();
  for (auto& p : piv_params()) out.push_back(p);
  for (auto& p : discriminator_params()) out.push_back(p);
  return out;
}

}  // namespace a2k
