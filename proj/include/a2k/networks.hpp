#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "a2k/autodiff.hpp"
#include "a2k/rng.hpp"

namespace a2k {

using ad::Var;

enum class Ablation { kFull, kOnlyAudio, kNoPiv, kNoDiscriminator };

Ablation ablation_from_string(const std::string& name);
std::string ablation_to_string(Ablation a);

struct ModelConfig {
  int base_channels = 64;
  int latent_pv_dim = 64;
  int latent_piv_dim = 64;
  int n_temporal_levels = 4;
  int discriminator_channels = 64;
  int n_mels = 64;
  int frames_per_video_frame = 4;

  // Small enough for finite-difference gradient checks and quick training.
  static ModelConfig toy();

  void validate() const;
  // Generated/processed sequence lengths are padded to a multiple of this.
  int time_multiple() const { return 1 << n_temporal_levels; }
};

inline constexpr int kFcHidden = 256;
inline constexpr double kLeakySlope = 0.2;
inline constexpr double kInitStd = 0.02;

struct NamedParam {
  std::string name;
  Var tensor;
};
using ParamList = std::vector<NamedParam>;

namespace layers {

Var init_tensor(std::vector<int> shape, Rng& rng, double stddev = kInitStd);

struct Conv1d {
  Var w, b;
  int stride = 1, pad = 0;
  Conv1d() = default;
  Conv1d(int c_in, int c_out, int k, int stride, int pad, Rng& rng);
  Var forward(const Var& x) const { return ad::conv1d(x, w, b, stride, pad); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct ConvTranspose1d {
  Var w, b;
  int stride = 1, pad = 0;
  ConvTranspose1d() = default;
  ConvTranspose1d(int c_in, int c_out, int k, int stride, int pad, Rng& rng);
  Var forward(const Var& x) const { return ad::conv_transpose1d(x, w, b, stride, pad); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct Conv2d {
  Var w, b;
  int stride_h = 1, stride_w = 1, pad_h = 0, pad_w = 0;
  Conv2d() = default;
  Conv2d(int c_in, int c_out, int kh, int kw, int stride_h, int stride_w, int pad_h, int pad_w,
         Rng& rng);
  Var forward(const Var& x) const {
    return ad::conv2d(x, w, b, stride_h, stride_w, pad_h, pad_w);
  }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct Dense {
  Var w, b;
  Dense() = default;
  Dense(int in_dim, int out_dim, Rng& rng);
  Var forward(const Var& x) const { return ad::dense(x, w, b); }
  void collect(const std::string& prefix, ParamList& out) const;
};

struct InstanceNorm {
  Var gamma, beta;
  InstanceNorm() = default;
  explicit InstanceNorm(int channels);
  Var forward(const Var& x) const { return ad::instance_norm(x, gamma, beta); }
  void collect(const std::string& prefix, ParamList& out) const;
};

}  // namespace layers

// Downsamples a log-mel window [n_mels, 4T] into a temporal feature pyramid.
// 2D convolutions collapse the mel axis to 1, two stride-2 temporal
// convolutions bring 4T steps down to T, and further stride-2 convolutions
// build the skip pyramid for the decoder. forward() returns fine-to-coarse
// features: skips[0] has length T, skips[i] has length T / 2^i.
class AudioEncoder {
 public:
  AudioEncoder(const ModelConfig& cfg, Rng& rng);
  std::vector<Var> forward(const Var& spec_window) const;
  void collect(const std::string& prefix, ParamList& out) const;

 private:
  int n_mels_;
  int fpv_;
  int n_levels_;
  std::vector<layers::Conv2d> mel_convs_;
  std::vector<layers::InstanceNorm> mel_norms_;
  layers::Conv1d reduce1_, reduce2_;
  layers::InstanceNorm reduce_norm1_, reduce_norm2_;
  std::vector<layers::Conv1d> pyramid_;
  std::vector<layers::InstanceNorm> pyramid_norms_;
};

// Fully connected stack 136 -> 256 -> 256 -> out_dim with leaky ReLU between
// layers. With l2_normalized, output rows are unit-norm (the PIV variant).
class PoseEncoder {
 public:
  PoseEncoder(int out_dim, bool l2_normalized, Rng& rng);
  Var forward_rows(const Var& rows) const;   // [n, 136] -> [n, out_dim]
  Var forward_vector(const Var& k) const;    // [136] -> [out_dim]
  int out_dim() const { return out_dim_; }
  void collect(const std::string& prefix, ParamList& out) const;

 private:
  int out_dim_;
  bool l2_normalized_;
  layers::Dense fc0_, fc1_, fc2_;
};

// U-Net upsampling path. The pose latents are broadcast along time and
// concatenated to the coarsest audio feature; each upsampling level doubles
// time and fuses the matching skip; a final 1x1 convolution maps to 136
// keypoint channels. Output is [T, 136] in standardized keypoint space.
class Decoder {
 public:
  Decoder(const ModelConfig& cfg, Rng& rng);
  Var forward(const std::vector<Var>& skips, const Var& pv_latent, const Var& piv_latent) const;
  void collect(const std::string& prefix, ParamList& out) const;

 private:
  layers::Conv1d bottleneck_;
  layers::InstanceNorm bottleneck_norm_;
  std::vector<layers::ConvTranspose1d> ups_;
  std::vector<layers::InstanceNorm> up_norms_;
  std::vector<layers::Conv1d> fuse_;
  std::vector<layers::InstanceNorm> fuse_norms_;
  layers::Conv1d head_;
};

// Scores sequence realism from frame-to-frame displacements with a
// PatchGAN-style stack: three stride-2 temporal conv levels, per-patch
// scores, scalar = mean over patches. Constant offsets added to every frame
// cancel exactly in the displacements.
class Discriminator {
 public:
  Discriminator(const ModelConfig& cfg, Rng& rng);
  Var forward(const Var& seq) const;  // [T, 136], T >= 2 -> scalar
  void collect(const std::string& prefix, ParamList& out) const;

 private:
  layers::Conv1d conv0_, conv1_, conv2_, head_;
  layers::InstanceNorm norm1_, norm2_;
};

struct GeneratorOutput {
  Var y_hat;       // [T, 136]
  Var pv_latent;   // [latent_pv_dim]
  Var piv_latent;  // [latent_piv_dim]; zeros when the PIV path is ablated
};

// The three trainable networks plus the ablation-aware generator composition.
class Model {
 public:
  Model(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }

  const AudioEncoder& audio_encoder() const { return audio_; }
  const PoseEncoder& pv_encoder() const { return pv_; }
  const PoseEncoder& piv_encoder() const { return piv_; }
  const Decoder& decoder() const { return decoder_; }
  const Discriminator& discriminator() const { return disc_; }

  // G(s, k): spec_window [n_mels, 4T], k [136] standardized. Under
  // kOnlyAudio both latents are zeros; under kNoPiv only the PIV latent is.
  GeneratorOutput generator_forward(const Var& spec_window, const Var& k,
                                    Ablation ablation = Ablation::kFull) const;

  Var discriminator_forward(const Var& seq) const { return disc_.forward(seq); }

  Var piv_encode_vector(const Var& k) const { return piv_.forward_vector(k); }
  Var piv_encode_frames(const Var& frames) const { return piv_.forward_rows(frames); }

  ParamList generator_params() const;      // audio encoder + PV encoder + decoder
  ParamList piv_params() const;            // PIV encoder
  ParamList discriminator_params() const;  // discriminator
  ParamList all_params() const;

 private:
  ModelConfig cfg_;
  AudioEncoder audio_;
  PoseEncoder pv_;
  PoseEncoder piv_;
  Decoder decoder_;
  Discriminator disc_;
};

}  // namespace a2k
