#include "a2k/mel.hpp"

#include <cmath>
#include <complex>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>
#include <string>

#include "a2k/errors.hpp"

namespace a2k {

void SpectrogramConfig::validate() const {
  if (sample_rate <= 0 || fft_size <= 0 || hop <= 0 || n_mels <= 0) {
    throw ValidationError("spectrogram config values must be positive");
  }
  if ((fft_size & (fft_size - 1)) != 0) {
    throw ValidationError("fft_size must be a power of two");
  }
  if (fmax <= fmin || fmax > sample_rate / 2.0) {
    throw ValidationError("mel band edges must satisfy 0 <= fmin < fmax <= nyquist");
  }
  if (log_floor <= 0.0) throw ValidationError("log_floor must be positive");
  const double steps_per_second = hop * frames_per_video_frame * video_fps;
  if (std::abs(steps_per_second - sample_rate) > 1e-9) {
    throw ValidationError("hop * frames_per_video_frame * fps must equal sample_rate");
  }
}

namespace {

// Iterative radix-2 complex FFT, n a power of two.
void fft_inplace(std::vector<std::complex<double>>& a) {
  const std::size_t n = a.size();
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(a[i], a[j]);
  }
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
    const std::complex<double> wlen(std::cos(ang), std::sin(ang));
    for (std::size_t i = 0; i < n; i += len) {
      std::complex<double> w(1.0, 0.0);
      for (std::size_t k = 0; k < len / 2; ++k) {
        const std::complex<double> u = a[i + k];
        const std::complex<double> v = a[i + k + len / 2] * w;
        a[i + k] = u + v;
        a[i + k + len / 2] = u - v;
        w *= wlen;
      }
    }
  }
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

// Triangle-wave fold of index i into [0, n), reflecting without repeating
// the edge samples. Handles arbitrarily deep overshoot.
std::size_t reflect_index(std::int64_t i, std::int64_t n) {
  if (n == 1) return 0;
  const std::int64_t period = 2 * (n - 1);
  std::int64_t m = i % period;
  if (m < 0) m += period;
  if (m >= n) m = period - m;
  return static_cast<std::size_t>(m);
}

std::vector<double> mel_band_edges(const SpectrogramConfig& cfg) {
  const double mel_lo = hz_to_mel(cfg.fmin);
  const double mel_hi = hz_to_mel(cfg.fmax);
  std::vector<double> edges(cfg.n_mels + 2);
  for (int i = 0; i < cfg.n_mels + 2; ++i) {
    const double mel = mel_lo + (mel_hi - mel_lo) * i / static_cast<double>(cfg.n_mels + 1);
    edges[i] = mel_to_hz(mel);
  }
  return edges;
}

}  // namespace

std::vector<double> mel_filter_center_frequencies(const SpectrogramConfig& cfg) {
  cfg.validate();
  const std::vector<double> edges = mel_band_edges(cfg);
  return {edges.begin() + 1, edges.end() - 1};
}

MelSpectrogram log_mel_spectrogram(const AudioClip& clip, const SpectrogramConfig& cfg) {
  cfg.validate();
  clip.validate();
  if (clip.samples.empty()) throw ValidationError("cannot compute spectrogram of empty audio");
  if (clip.sample_rate != cfg.sample_rate) {
    throw ValidationError("audio sample rate " + std::to_string(clip.sample_rate) +
                          " does not match spectrogram config rate " +
                          std::to_string(cfg.sample_rate));
  }

  const int n_bins = cfg.fft_size / 2 + 1;
  const std::int64_t len = static_cast<std::int64_t>(clip.samples.size());
  const int n_steps = static_cast<int>(len / cfg.hop) + 1;

  // Periodic Hann window.
  std::vector<double> window(cfg.fft_size);
  for (int i = 0; i < cfg.fft_size; ++i) {
    window[i] = 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * i / cfg.fft_size));
  }

  // Triangular filterbank over FFT bin frequencies.
  const std::vector<double> edges = mel_band_edges(cfg);
  std::vector<double> filters(static_cast<std::size_t>(cfg.n_mels) * n_bins, 0.0);
  for (int m = 0; m < cfg.n_mels; ++m) {
    const double f0 = edges[m], f1 = edges[m + 1], f2 = edges[m + 2];
    for (int k = 0; k < n_bins; ++k) {
      const double fk = static_cast<double>(k) * cfg.sample_rate / cfg.fft_size;
      double w = 0.0;
      if (fk > f0 && fk < f2) {
        w = fk <= f1 ? (fk - f0) / (f1 - f0) : (f2 - fk) / (f2 - f1);
      }
      filters[static_cast<std::size_t>(m) * n_bins + k] = w;
    }
  }

  MelSpectrogram spec;
  spec.config = cfg;
  spec.n_mels = cfg.n_mels;
  spec.n_steps = n_steps;
  spec.values.assign(static_cast<std::size_t>(cfg.n_mels) * n_steps, 0.0);

  std::vector<std::complex<double>> frame(cfg.fft_size);
  std::vector<double> power(n_bins);
  const int half = cfg.fft_size / 2;
  for (int t = 0; t < n_steps; ++t) {
    const std::int64_t start = static_cast<std::int64_t>(t) * cfg.hop - half;
    for (int i = 0; i < cfg.fft_size; ++i) {
      const double s = clip.samples[reflect_index(start + i, len)];
      frame[i] = s * window[i];
    }
    fft_inplace(frame);
    for (int k = 0; k < n_bins; ++k) power[k] = std::norm(frame[k]);
    for (int m = 0; m < cfg.n_mels; ++m) {
      const double* w = &filters[static_cast<std::size_t>(m) * n_bins];
      double energy = 0.0;
      for (int k = 0; k < n_bins; ++k) energy += w[k] * power[k];
      spec.at(m, t) = std::log(energy + cfg.log_floor);
    }
  }
  return spec;
}

MelSpectrogram segment_for_frames(const MelSpectrogram& spec, int start_frame, int n_frames) {
  const int fpv = spec.config.frames_per_video_frame;
  const int start = start_frame * fpv;
  const int len = n_frames * fpv;
  if (start_frame < 0 || n_frames <= 0 || start + len > spec.n_steps) {
    throw ValidationError("spectrogram window [" + std::to_string(start) + ", " +
                          std::to_string(start + len) + ") out of range, have " +
                          std::to_string(spec.n_steps) + " steps");
  }
  MelSpectrogram out;
  out.config = spec.config;
  out.n_mels = spec.n_mels;
  out.n_steps = len;
  out.values.resize(static_cast<std::size_t>(spec.n_mels) * len);
  for (int m = 0; m < spec.n_mels; ++m) {
    for (int t = 0; t < len; ++t) out.at(m, t) = spec.at(m, start + t);
  }
  return out;
}

namespace {

constexpr char kSpecMagic[8] = {'A', '2', 'K', 'S', 'P', 'E', 'C', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace

void write_spectrogram(const std::filesystem::path& path, const MelSpectrogram& spec) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open spectrogram file for writing: " + path.string());
  os.write(kSpecMagic, sizeof(kSpecMagic));
  put_u32(os, static_cast<std::uint32_t>(spec.n_mels));
  put_u32(os, static_cast<std::uint32_t>(spec.n_steps));
  for (double v : spec.values) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(os, bits);
  }
  if (!os) throw std::runtime_error("short write on spectrogram file: " + path.string());
}

MelSpectrogram read_spectrogram(const std::filesystem::path& path, const SpectrogramConfig& cfg) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open spectrogram file: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kSpecMagic, sizeof(magic)) != 0) {
    throw ValidationError("bad spectrogram file magic: " + path.string());
  }
  MelSpectrogram spec;
  spec.config = cfg;
  spec.n_mels = static_cast<int>(get_u32(is));
  spec.n_steps = static_cast<int>(get_u32(is));
  if (!is || spec.n_mels <= 0 || spec.n_steps <= 0) {
    throw ValidationError("bad spectrogram dimensions in " + path.string());
  }
  spec.values.resize(static_cast<std::size_t>(spec.n_mels) * spec.n_steps);
  for (double& v : spec.values) {
    const std::uint32_t bits = get_u32(is);
    float f;
    std::memcpy(&f, &bits, 4);
    v = f;
  }
  if (!is) throw ValidationError("truncated spectrogram file: " + path.string());
  return spec;
}

}  // namespace a2k
