#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>

#include "a2k/keypoints.hpp"
#include "a2k/mel.hpp"
#include "a2k/networks.hpp"
#include "a2k/tensor.hpp"

namespace a2k {

// Versioned container: JSON header with the config echo and counters, then
// named float64 tensors (model parameters, Adam moments, dataset stats).
// Save/load round-trips are byte-identical.
struct Checkpoint {
  int version = 1;
  ModelConfig model;
  SpectrogramConfig spectrogram;
  NormStats stats;
  std::string ablation = "full";
  std::uint64_t seed = 0;
  int epoch = 0;
  std::uint64_t global_step = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::uint64_t adam_t_gen = 0;
  std::uint64_t adam_t_piv = 0;
  std::uint64_t adam_t_disc = 0;
  std::map<std::string, Tensor> tensors;
};

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies checkpoint tensors into the given parameters; every parameter must
// be present with a matching shape.
void load_param_values(const ParamList& params, const std::map<std::string, Tensor>& tensors);

// Reconstructs the model architecture from the config echo and restores all
// network parameters.
Model build_model(const Checkpoint& ckpt);

}  // namespace a2k
