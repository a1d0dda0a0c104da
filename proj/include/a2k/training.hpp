#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "a2k/audio.hpp"
#include "a2k/checkpoint.hpp"
#include "a2k/dataset.hpp"
#include "a2k/losses.hpp"
#include "a2k/mel.hpp"
#include "a2k/networks.hpp"

namespace a2k {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 300;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  std::uint64_t seed = 1;
  Ablation ablation = Ablation::kFull;
  int checkpoint_every = 1;      // epochs between last.ckpt refreshes
  double grad_clip_norm = 10.0;  // <= 0 disables clipping
  int window_frames = 64;
  int window_stride = 32;
  LossWeights loss_weights;
  ModelConfig model;

  void validate() const;
};

// Key-value text format, one `key = value` per line, '#' comments.
TrainConfig load_train_config(const std::filesystem::path& path);

struct LossReport {
  double l_adv = 0.0;
  double l_reg = 0.0;
  double l_piv_gen = 0.0;
  double l_piv_piv = 0.0;
  double l_d = 0.0;
  bool aborted = false;
  std::string diagnostic;

  std::string log_line(std::uint64_t step) const;
};

class Adam {
 public:
  Adam() = default;
  Adam(double lr, double beta1, double beta2, double eps);
  void step(const ParamList& params, const std::vector<Tensor>& grads);
  std::uint64_t t() const { return t_; }
  void export_state(const ParamList& params, const std::string& prefix,
                    std::map<std::string, Tensor>& out) const;
  void import_state(const ParamList& params, const std::string& prefix,
                    const std::map<std::string, Tensor>& in, std::uint64_t t);

 private:
  void ensure_state(const ParamList& params);
  double lr_ = 1e-4, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_, v_;
};

// Owns the three networks and their optimizers. One step updates D on the
// discriminator loss (detached fakes), then computes fresh scores against
// the updated D and applies simultaneous G / PIV-encoder updates from the
// same generated sequences. Ablation switches drop networks and zero their
// loss terms exactly.
class Trainer {
 public:
  Trainer(const TrainConfig& cfg, const NormStats& stats, const SpectrogramConfig& spec_cfg);
  Trainer(const TrainConfig& cfg, const Checkpoint& resume_from);

  LossReport train_step(const std::vector<const TrainingSample*>& batch);
  double validation_l1(const std::vector<TrainingSample>& val) const;

  Checkpoint to_checkpoint() const;

  Model& model() { return model_; }
  const Model& model() const { return model_; }
  const TrainConfig& config() const { return cfg_; }
  const NormStats& stats() const { return stats_; }
  const SpectrogramConfig& spectrogram_config() const { return spec_cfg_; }

  int epoch = 0;
  std::uint64_t global_step = 0;
  double best_val;
  int best_epoch = -1;

 private:
  TrainConfig cfg_;
  NormStats stats_;
  SpectrogramConfig spec_cfg_;
  Model model_;
  Adam opt_gen_, opt_piv_, opt_disc_;
};

struct StepRecord {
  int epoch = 0;
  std::uint64_t step = 0;
  LossReport losses;
};

struct EpochRecord {
  int epoch = 0;
  double val_l1 = 0.0;
};

struct FitHistory {
  std::vector<StepRecord> steps;
  std::vector<EpochRecord> epochs;
  double best_val = 0.0;
  int best_epoch = -1;
};

// Runs trainer.epoch .. cfg.epochs-1, one seeded shuffle per epoch,
// validates average L1 after every epoch and keeps the best checkpoint.
// When out_dir is non-empty: best.ckpt, last.ckpt, history.jsonl (appended
// incrementally so an interrupt keeps the partial history). Step logs go to
// *log when provided.
FitHistory fit(Trainer& trainer, const std::vector<TrainingSample>& train_samples,
               const std::vector<TrainingSample>& val_samples,
               const std::filesystem::path& out_dir = {}, std::ostream* log = nullptr);

// Full inference path: base-normalize + standardize the raw-pixel reference,
// compute the spectrogram, pad time to the model's multiple, run the
// generator once over the whole length, trim, destandardize, and re-add the
// reference frame's base point. Output is raw-pixel at the config's fps.
KeypointSequence generate_sequence(const Model& model, const NormStats& stats,
                                   const SpectrogramConfig& spec_cfg, const AudioClip& audio,
                                   const KeypointFrame& reference,
                                   Ablation ablation = Ablation::kFull);

}  // namespace a2k
