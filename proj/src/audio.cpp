#include "a2k/audio.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "a2k/errors.hpp"

namespace a2k {

void AudioClip::validate() const {
  if (sample_rate <= 0) throw ValidationError("audio sample rate must be positive");
  for (double s : samples) {
    if (!std::isfinite(s)) throw ValidationError("audio contains non-finite samples");
  }
}

namespace {

std::uint32_t read_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t read_u16(const std::uint8_t* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

}  // namespace

AudioClip load_wav(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open audio file: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw ValidationError("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t sample_rate = 0;
  std::uint16_t bits = 0;
  const std::uint8_t* data = nullptr;
  std::uint32_t data_size = 0;

  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = reinterpret_cast<const char*>(bytes.data() + pos);
    const std::uint32_t size = read_u32(bytes.data() + pos + 4);
    pos += 8;
    if (pos + size > bytes.size()) {
      throw ValidationError("truncated WAV chunk in " + path.string());
    }
    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw ValidationError("malformed fmt chunk in " + path.string());
      format = read_u16(bytes.data() + pos);
      channels = read_u16(bytes.data() + pos + 2);
      sample_rate = read_u32(bytes.data() + pos + 4);
      bits = read_u16(bytes.data() + pos + 14);
    } else if (std::memcmp(id, "data", 4) == 0) {
      data = bytes.data() + pos;
      data_size = size;
    }
    pos += size + (size & 1);  // chunks are word-aligned
  }

  if (format == 0 || data == nullptr) {
    throw ValidationError("WAV file missing fmt or data chunk: " + path.string());
  }
  if (channels == 0 || sample_rate == 0) {
    throw ValidationError("WAV file has zero channels or sample rate: " + path.string());
  }

  AudioClip clip;
  clip.sample_rate = static_cast<int>(sample_rate);

  if (format == 1 && bits == 16) {
    const std::size_t n_values = data_size / 2;
    const std::size_t n_frames = n_values / channels;
    clip.samples.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
      double acc = 0.0;
      for (std::uint16_t c = 0; c < channels; ++c) {
        const std::uint8_t* p = data + 2 * (i * channels + c);
        const std::int16_t v = static_cast<std::int16_t>(p[0] | (p[1] << 8));
        acc += static_cast<double>(v) / 32768.0;
      }
      clip.samples[i] = acc / channels;
    }
  } else if (format == 3 && bits == 32) {
    const std::size_t n_values = data_size / 4;
    const std::size_t n_frames = n_values / channels;
    clip.samples.resize(n_frames);
    for (std::size_t i = 0; i < n_frames; ++i) {
      double acc = 0.0;
      for (std::uint16_t c = 0; c < channels; ++c) {
        std::uint32_t bits32 = read_u32(data + 4 * (i * channels + c));
        float v;
        std::memcpy(&v, &bits32, 4);
        acc += static_cast<double>(v);
      }
      clip.samples[i] = acc / channels;
    }
  } else {
    throw ValidationError("unsupported WAV encoding (want PCM16 or float32) in " + path.string());
  }

  clip.validate();
  return clip;
}

void write_wav(const std::filesystem::path& path, const AudioClip& clip) {
  clip.validate();
  const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
  const std::uint32_t data_size = n * 2;
  std::vector<std::uint8_t> out;
  out.reserve(44 + data_size);
  auto put_bytes = [&out](const char* s, std::size_t len) {
    out.insert(out.end(), s, s + len);
  };
  auto put_u32 = [&out](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
  };
  auto put_u16 = [&out](std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  };
  put_bytes("RIFF", 4);
  put_u32(36 + data_size);
  put_bytes("WAVE", 4);
  put_bytes("fmt ", 4);
  put_u32(16);
  put_u16(1);  // PCM
  put_u16(1);  // mono
  put_u32(static_cast<std::uint32_t>(clip.sample_rate));
  put_u32(static_cast<std::uint32_t>(clip.sample_rate) * 2);
  put_u16(2);
  put_u16(16);
  put_bytes("data", 4);
  put_u32(data_size);
  for (double s : clip.samples) {
    const double clamped = std::min(1.0, std::max(-1.0, s));
    const std::int16_t v = static_cast<std::int16_t>(std::lrint(clamped * 32767.0));
    put_u16(static_cast<std::uint16_t>(v));
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open audio file for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("short write on audio file: " + path.string());
}

AudioClip resample(const AudioClip& clip, int target_rate) {
  clip.validate();
  if (target_rate <= 0) throw ValidationError("target sample rate must be positive");
  if (clip.sample_rate == target_rate || clip.samples.empty()) {
    AudioClip out = clip;
    out.sample_rate = target_rate;
    return out;
  }

  const double ratio = static_cast<double>(target_rate) / clip.sample_rate;
  const std::size_t out_len =
      static_cast<std::size_t>(std::llround(clip.samples.size() * ratio));
  AudioClip out;
  out.sample_rate = target_rate;
  out.samples.resize(out_len);

  constexpr int kTaps = 32;
  const double cutoff = std::min(1.0, ratio);  // fraction of the source Nyquist
  const std::int64_t n = static_cast<std::int64_t>(clip.samples.size());
  for (std::size_t i = 0; i < out_len; ++i) {
    const double center = static_cast<double>(i) / ratio;
    const std::int64_t j0 = static_cast<std::int64_t>(std::floor(center)) - kTaps + 1;
    const std::int64_t j1 = static_cast<std::int64_t>(std::floor(center)) + kTaps;
    double acc = 0.0;
    double norm = 0.0;
    for (std::int64_t j = j0; j <= j1; ++j) {
      const double t = (static_cast<double>(j) - center) * cutoff;
      double sinc = 1.0;
      if (t != 0.0) {
        const double pt = std::numbers::pi * t;
        sinc = std::sin(pt) / pt;
      }
      const double u = (static_cast<double>(j) - center) / kTaps;
      const double hann = 0.5 * (1.0 + std::cos(std::numbers::pi * u));
      const double w = sinc * hann;
      norm += w;
      if (j >= 0 && j < n) acc += w * clip.samples[j];
    }
    // Kernel-sum normalization pins DC gain at exactly 1.
    out.samples[i] = norm != 0.0 ? acc / norm : 0.0;
  }
  return out;
}

AudioClip load_audio(const std::filesystem::path& path, int target_rate) {
  return resample(load_wav(path), target_rate);
}

}  // namespace a2k
