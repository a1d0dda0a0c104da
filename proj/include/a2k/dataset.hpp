#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "a2k/keypoints.hpp"
#include "a2k/mel.hpp"
#include "a2k/tensor.hpp"

namespace a2k {

struct SampleRecord {
  std::string id;
  std::filesystem::path keypoint_path;
  std::filesystem::path audio_path;
  double fps = 25.0;
  int n_frames = 0;
  std::string split = "train";  // "train" | "val"
};

struct DatasetManifest {
  std::vector<SampleRecord> records;
  std::filesystem::path stats_path;

  std::vector<SampleRecord> split(const std::string& tag) const;
};

// Manifest JSON: {"records": [{id, keypoint_path, audio_path, n_frames, fps,
// split}...], "stats_path": ...}. Relative paths resolve against the manifest
// file's directory.
DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);

// Stats JSON: {"mean": [136], "std": [136], "n_sequences_used": n}.
NormStats load_norm_stats(const std::filesystem::path& path);
void save_norm_stats(const std::filesystem::path& path, const NormStats& stats);

struct IngestReport {
  int n_ok = 0;
  int n_skipped = 0;
  std::vector<std::string> diagnostics;
};

// Validates every input record (parseable 68-point keypoint file, loadable
// audio covering n_frames / fps seconds), base-normalizes keypoints into
// out_dir/keypoints/<id>.kp shards, computes norm stats over the first
// stats_limit sequences in id order, and writes out_dir/manifest.json +
// out_dir/stats.json. Bad records are skipped with a diagnostic; only an
// empty result is an error. Records without a split tag get a deterministic
// 90/10 assignment by id order.
DatasetManifest ingest(const std::filesystem::path& manifest_in,
                       const std::filesystem::path& out_dir, IngestReport* report = nullptr,
                       std::size_t stats_limit = 10000);

// One training window: aligned spectrogram slice, standardized reference
// vector (= flatten of the window's first frame), standardized target.
struct TrainingSample {
  std::string record_id;
  int offset = 0;
  Tensor spectrogram;                          // [n_mels, T * frames_per_video_frame]
  std::array<double, kFrameDim> reference{};   // standardized
  Tensor target;                               // [T, 136] standardized

  std::string window_id() const { return record_id + ":" + std::to_string(offset); }
};

// Cuts a record into windows at offsets 0, stride, 2*stride, ... while
// offset + n_frames_per_window <= record frames. Records shorter than one
// window yield an empty list.
std::vector<TrainingSample> window_training_samples(const SampleRecord& record,
                                                    const NormStats& stats,
                                                    const SpectrogramConfig& spec_cfg,
                                                    int n_frames_per_window = 64,
                                                    int stride = 32);

std::vector<TrainingSample> window_all_records(const std::vector<SampleRecord>& records,
                                               const NormStats& stats,
                                               const SpectrogramConfig& spec_cfg,
                                               int n_frames_per_window = 64, int stride = 32);

// Seed-deterministic shuffled batches over sample indices; one epoch visits
// every sample exactly once and the final partial batch is emitted.
class BatchIterator {
 public:
  BatchIterator(std::size_t n_samples, int batch_size, std::uint64_t shuffle_seed);
  std::optional<std::vector<std::size_t>> next();
  std::size_t n_batches() const;

 private:
  std::vector<std::size_t> order_;
  std::size_t batch_size_;
  std::size_t pos_ = 0;
};

}  // namespace a2k
