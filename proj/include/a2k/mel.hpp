#pragma once

#include <filesystem>
#include <vector>

#include "a2k/audio.hpp"

namespace a2k {

// All defaults tie the spectrogram clock to the 25 fps keypoint stream:
// hop * frames_per_video_frame * video_fps == sample_rate (160*4*25 = 16000).
struct SpectrogramConfig {
  int sample_rate = 16000;
  int fft_size = 512;
  int hop = 160;  // 10 ms
  int n_mels = 64;
  double fmin = 0.0;
  double fmax = 8000.0;
  double log_floor = 1e-10;
  int frames_per_video_frame = 4;
  double video_fps = 25.0;

  void validate() const;
};

struct MelSpectrogram {
  int n_mels = 0;
  int n_steps = 0;
  std::vector<double> values;  // row-major [n_mels][n_steps]
  SpectrogramConfig config;

  double& at(int mel, int step) { return values[static_cast<std::size_t>(mel) * n_steps + step]; }
  double at(int mel, int step) const {
    return values[static_cast<std::size_t>(mel) * n_steps + step];
  }
};

// Centered STFT (reflect padding, Hann window), magnitude-squared energies,
// HTK-mel triangular filterbank, then log(energy + log_floor).
// n_steps = floor(len / hop) + 1.
MelSpectrogram log_mel_spectrogram(const AudioClip& clip, const SpectrogramConfig& cfg = {});

// Center frequencies (Hz) of the triangular filters; the test oracle for
// tone placement keys off these.
std::vector<double> mel_filter_center_frequencies(const SpectrogramConfig& cfg);

// Slice aligned to video frames: steps [start*fpv, (start+n)*fpv).
MelSpectrogram segment_for_frames(const MelSpectrogram& spec, int start_frame, int n_frames);

// Binary dump: magic "A2KSPEC1", u32 n_mels, u32 n_steps, float32 row-major.
void write_spectrogram(const std::filesystem::path& path, const MelSpectrogram& spec);
MelSpectrogram read_spectrogram(const std::filesystem::path& path,
                                const SpectrogramConfig& cfg = {});

}  // namespace a2k
