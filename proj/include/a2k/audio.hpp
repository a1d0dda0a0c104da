#pragma once

#include <filesystem>
#include <vector>

namespace a2k {

struct AudioClip {
  std::vector<double> samples;  // mono, nominally in [-1, 1]
  int sample_rate = 0;

  double duration_seconds() const {
    return sample_rate > 0 ? static_cast<double>(samples.size()) / sample_rate : 0.0;
  }
  void validate() const;  // positive rate, finite samples
};

// Reads a RIFF/WAVE file (PCM16 or IEEE float32). Multi-channel input is
// downmixed by averaging; the result is resampled to target_rate.
AudioClip load_audio(const std::filesystem::path& path, int target_rate);

// Raw WAV read without resampling (still downmixed to mono).
AudioClip load_wav(const std::filesystem::path& path);

// PCM16 mono writer, used by tooling and tests to produce fixtures.
void write_wav(const std::filesystem::path& path, const AudioClip& clip);

// Windowed-sinc resampler (Hann window, 32 taps per side).
AudioClip resample(const AudioClip& clip, int target_rate);

}  // namespace a2k
