#include "a2k/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "a2k/audio.hpp"
#include "a2k/errors.hpp"
#include "a2k/rng.hpp"
#include "json.hpp"

namespace a2k {
namespace {

using nlohmann::json;

std::filesystem::path resolve(const std::filesystem::path& base,
                              const std::filesystem::path& p) {
  return p.is_absolute() ? p : base / p;
}

json read_json_file(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << text;
  if (!os) throw std::runtime_error("short write on " + path.string());
}

}  // namespace

std::vector<SampleRecord> DatasetManifest::split(const std::string& tag) const {
  std::vector<SampleRecord> out;
  for (const SampleRecord& r : records) {
    if (r.split == tag) out.push_back(r);
  }
  return out;
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  const std::filesystem::path base = path.parent_path();
  DatasetManifest manifest;
  if (!j.contains("records") || !j.at("records").is_array()) {
    throw ValidationError("manifest missing 'records' array: " + path.string());
  }
  for (const json& rj : j.at("records")) {
    SampleRecord r;
    r.id = rj.at("id").get<std::string>();
    r.keypoint_path = resolve(base, rj.at("keypoint_path").get<std::string>());
    r.audio_path = resolve(base, rj.at("audio_path").get<std::string>());
    if (rj.contains("fps")) r.fps = rj.at("fps").get<double>();
    if (rj.contains("n_frames")) r.n_frames = rj.at("n_frames").get<int>();
    if (rj.contains("split")) r.split = rj.at("split").get<std::string>();
    manifest.records.push_back(std::move(r));
  }
  if (j.contains("stats_path")) {
    manifest.stats_path = resolve(base, j.at("stats_path").get<std::string>());
  }
  return manifest;
}

void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  const std::filesystem::path base = path.parent_path();
  auto relativize = [&base](const std::filesystem::path& p) {
    const auto rel = p.lexically_relative(base);
    return (!rel.empty() && rel.native().rfind("..", 0) != 0) ? rel : p;
  };
  json records = json::array();
  for (const SampleRecord& r : manifest.records) {
    records.push_back(json{{"id", r.id},
                           {"keypoint_path", relativize(r.keypoint_path).generic_string()},
                           {"audio_path", relativize(r.audio_path).generic_string()},
                           {"fps", r.fps},
                           {"n_frames", r.n_frames},
                           {"split", r.split}});
  }
  json j{{"records", records}};
  if (!manifest.stats_path.empty()) {
    j["stats_path"] = relativize(manifest.stats_path).generic_string();
  }
  write_text_file(path, j.dump(2) + "\n");
}

NormStats load_norm_stats(const std::filesystem::path& path) {
  const json j = read_json_file(path);
  NormStats stats;
  const auto& mean = j.at("mean");
  const auto& stddev = j.at("std");
  if (mean.size() != kFrameDim || stddev.size() != kFrameDim) {
    throw ValidationError("stats file must carry 136 means and 136 stds: " + path.string());
  }
  for (int d = 0; d < kFrameDim; ++d) {
    stats.mean[d] = mean.at(d).get<double>();
    stats.std[d] = stddev.at(d).get<double>();
  }
  stats.n_sequences_used = j.at("n_sequences_used").get<std::size_t>();
  return stats;
}

void save_norm_stats(const std::filesystem::path& path, const NormStats& stats) {
  json j{{"mean", stats.mean}, {"std", stats.std}, {"n_sequences_used", stats.n_sequences_used}};
  write_text_file(path, j.dump(2) + "\n");
}

DatasetManifest ingest(const std::filesystem::path& manifest_in,
                       const std::filesystem::path& out_dir, IngestReport* report,
                       std::size_t stats_limit) {
  DatasetManifest input = load_manifest(manifest_in);
  std::sort(input.records.begin(), input.records.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.id < b.id; });

  std::filesystem::create_directories(out_dir / "keypoints");

  IngestReport local;
  IngestReport& rep = report ? *report : local;
  DatasetManifest out;
  std::set<std::string> seen_ids;
  bool any_split_tag = false;
  NormStatsAccumulator stats_acc;

  for (const SampleRecord& in : input.records) {
    try {
      if (in.id.empty()) throw ValidationError("record has empty id");
      if (!seen_ids.insert(in.id).second) {
        throw ValidationError("duplicate record id '" + in.id + "'");
      }
      const KeypointSequence raw = read_keypoint_file(in.keypoint_path, CoordSpace::kRawPixel);
      if (in.n_frames > 0 && in.n_frames != static_cast<int>(raw.frames.size())) {
        throw ValidationError("manifest n_frames=" + std::to_string(in.n_frames) +
                              " disagrees with keypoint file (" +
                              std::to_string(raw.frames.size()) + " frames)");
      }
      const AudioClip audio = load_wav(in.audio_path);
      const double needed = static_cast<double>(raw.frames.size()) / in.fps;
      if (audio.duration_seconds() + 1e-9 < needed) {
        throw ValidationError("audio covers " + std::to_string(audio.duration_seconds()) +
                              " s but keypoints need " + std::to_string(needed) + " s");
      }

      const KeypointSequence normalized = normalize_base_point(raw);
      SampleRecord stored = in;
      stored.n_frames = static_cast<int>(normalized.frames.size());
      stored.keypoint_path = out_dir / "keypoints" / (in.id + ".kp");
      write_keypoint_file(stored.keypoint_path, normalized);
      if (stats_acc.n_sequences() < stats_limit) stats_acc.add(normalized);
      if (!in.split.empty() && in.split != "train") any_split_tag = true;
      out.records.push_back(std::move(stored));
      ++rep.n_ok;
    } catch (const std::exception& e) {
      ++rep.n_skipped;
      rep.diagnostics.push_back("skipped '" + in.id + "': " + e.what());
    }
  }

  if (out.records.empty()) {
    throw ValidationError("ingest produced no usable records (skipped " +
                          std::to_string(rep.n_skipped) + ")");
  }

  // 90/10 split by id order when the input manifest carried no tags.
  if (!any_split_tag) {
    for (std::size_t i = 0; i < out.records.size(); ++i) {
      out.records[i].split = (i % 10 == 9) ? "val" : "train";
    }
    if (out.records.size() >= 2 && out.split("val").empty()) {
      out.records.back().split = "val";
    }
  }

  const NormStats stats = stats_acc.finalize();
  out.stats_path = out_dir / "stats.json";
  save_norm_stats(out.stats_path, stats);
  save_manifest(out_dir / "manifest.json", out);
  return out;
}

std::vector<TrainingSample> window_training_samples(const SampleRecord& record,
                                                    const NormStats& stats,
                                                    const SpectrogramConfig& spec_cfg,
                                                    int n_frames_per_window, int stride) {
  if (n_frames_per_window <= 0 || stride <= 0) {
    throw ValidationError("window length and stride must be positive");
  }
  std::vector<TrainingSample> samples;
  const KeypointSequence normalized =
      read_keypoint_file(record.keypoint_path, CoordSpace::kBaseNormalized);
  const int n_frames = static_cast<int>(normalized.frames.size());
  if (n_frames < n_frames_per_window) return samples;

  const KeypointSequence standardized = standardize(normalized, stats);
  const AudioClip audio = load_audio(record.audio_path, spec_cfg.sample_rate);
  const MelSpectrogram spec = log_mel_spectrogram(audio, spec_cfg);

  const int fpv = spec_cfg.frames_per_video_frame;
  for (int offset = 0; offset + n_frames_per_window <= n_frames; offset += stride) {
    TrainingSample sample;
    sample.record_id = record.id;
    sample.offset = offset;

    const MelSpectrogram window = segment_for_frames(spec, offset, n_frames_per_window);
    sample.spectrogram = Tensor({window.n_mels, window.n_steps});
    for (int m = 0; m < window.n_mels; ++m) {
      for (int t = 0; t < window.n_steps; ++t) sample.spectrogram.at(m, t) = window.at(m, t);
    }

    sample.target = Tensor({n_frames_per_window, kFrameDim});
    for (int t = 0; t < n_frames_per_window; ++t) {
      const auto flat = flatten(standardized.frames[offset + t]);
      for (int d = 0; d < kFrameDim; ++d) sample.target.at(t, d) = flat[d];
    }
    sample.reference = flatten(standardized.frames[offset]);
    (void)fpv;
    samples.push_back(std::move(sample));
  }
  return samples;
}

std::vector<TrainingSample> window_all_records(const std::vector<SampleRecord>& records,
                                               const NormStats& stats,
                                               const SpectrogramConfig& spec_cfg,
                                               int n_frames_per_window, int stride) {
  std::vector<TrainingSample> all;
  for (const SampleRecord& record : records) {
    auto samples =
        window_training_samples(record, stats, spec_cfg, n_frames_per_window, stride);
    for (auto& s : samples) all.push_back(std::move(s));
  }
  return all;
}

BatchIterator::BatchIterator(std::size_t n_samples, int batch_size, std::uint64_t shuffle_seed)
    : batch_size_(static_cast<std::size_t>(batch_size)) {
  if (n_samples == 0) throw ValidationError("empty dataset");
  if (batch_size <= 0) throw ValidationError("batch size must be positive");
  order_.resize(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) order_[i] = i;
  Rng rng(shuffle_seed);
  rng.shuffle(order_);
}

std::optional<std::vector<std::size_t>> BatchIterator::next() {
  if (pos_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(pos_ + batch_size_, order_.size());
  std::vector<std::size_t> batch(order_.begin() + static_cast<std::ptrdiff_t>(pos_),
                                 order_.begin() + static_cast<std::ptrdiff_t>(end));
  pos_ = end;
  return batch;
}

std::size_t BatchIterator::n_batches() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

}  // namespace a2k
