#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "a2k/audio.hpp"
#include "a2k/checkpoint.hpp"
#include "a2k/dataset.hpp"
#include "a2k/errors.hpp"
#include "a2k/image.hpp"
#include "a2k/metrics.hpp"
#include "a2k/training.hpp"

namespace fs = std::filesystem;

namespace {

void run_prepare(const fs::path& manifest, const fs::path& out) {
  a2k::IngestReport report;
  const a2k::DatasetManifest result = a2k::ingest(manifest, out, &report);
  for (const std::string& d : report.diagnostics) std::cerr << d << "\n";
  std::cout << "prepared " << result.records.size() << " records (" << report.n_skipped
            << " skipped) into " << out.string() << "\n";
}

void run_stats(const fs::path& data_dir, std::size_t limit) {
  const a2k::DatasetManifest manifest = a2k::load_manifest(data_dir / "manifest.json");
  a2k::NormStatsAccumulator acc;
  for (const a2k::SampleRecord& r : manifest.records) {
    if (acc.n_sequences() >= limit) break;
    acc.add(a2k::read_keypoint_file(r.keypoint_path, a2k::CoordSpace::kBaseNormalized));
  }
  const a2k::NormStats stats = acc.finalize();
  const fs::path stats_path = data_dir / "stats.json";
  a2k::save_norm_stats(stats_path, stats);
  std::cout << "stats over " << stats.n_sequences_used << " sequences written to "
            << stats_path.string() << "\n";
}

void run_train(const fs::path& config_path, const fs::path& data_dir, const fs::path& out_dir,
               const std::string& ablation) {
  a2k::TrainConfig cfg = a2k::load_train_config(config_path);
  if (!ablation.empty()) cfg.ablation = a2k::ablation_from_string(ablation);
  cfg.validate();

  const a2k::DatasetManifest manifest = a2k::load_manifest(data_dir / "manifest.json");
  const a2k::NormStats stats = a2k::load_norm_stats(
      manifest.stats_path.empty() ? data_dir / "stats.json" : manifest.stats_path);
  a2k::SpectrogramConfig spec_cfg;
  spec_cfg.n_mels = cfg.model.n_mels;
  spec_cfg.frames_per_video_frame = cfg.model.frames_per_video_frame;

  const auto train_samples = a2k::window_all_records(manifest.split("train"), stats, spec_cfg,
                                                     cfg.window_frames, cfg.window_stride);
  auto val_samples = a2k::window_all_records(manifest.split("val"), stats, spec_cfg,
                                             cfg.window_frames, cfg.window_stride);
  if (val_samples.empty()) {
    std::cerr << "warning: no validation windows; validating on the training windows\n";
    val_samples = train_samples;
  }
  std::cout << "training on " << train_samples.size() << " windows, validating on "
            << val_samples.size() << " (ablation " << a2k::ablation_to_string(cfg.ablation)
            << ")\n";

  a2k::Trainer trainer(cfg, stats, spec_cfg);
  const a2k::FitHistory history = fit(trainer, train_samples, val_samples, out_dir, &std::cout);
  std::cout << "best val_l1 " << history.best_val << " at epoch " << history.best_epoch
            << "; checkpoints in " << out_dir.string() << "\n";
}

void run_infer(const fs::path& checkpoint_path, const fs::path& audio_path,
               const fs::path& keypoints_path, const fs::path& out_path) {
  const a2k::Checkpoint ckpt = a2k::load_checkpoint(checkpoint_path);
  const a2k::Model model = a2k::build_model(ckpt);
  const a2k::AudioClip audio = a2k::load_audio(audio_path, ckpt.spectrogram.sample_rate);
  const a2k::KeypointSequence ref_seq =
      a2k::read_keypoint_file(keypoints_path, a2k::CoordSpace::kRawPixel);

  const a2k::KeypointSequence generated =
      a2k::generate_sequence(model, ckpt.stats, ckpt.spectrogram, audio, ref_seq.frames.front(),
                             a2k::ablation_from_string(ckpt.ablation));
  if (!out_path.parent_path().empty()) fs::create_directories(out_path.parent_path());
  a2k::write_keypoint_file(out_path, generated);
  std::cout << "generated " << generated.frames.size() << " frames -> " << out_path.string()
            << "\n";
}

void run_eval(const fs::path& pred_path, const fs::path& gt_path, double alpha,
              const fs::path& stats_path) {
  const a2k::KeypointSequence pred_raw =
      a2k::read_keypoint_file(pred_path, a2k::CoordSpace::kRawPixel);
  const a2k::KeypointSequence gt_raw =
      a2k::read_keypoint_file(gt_path, a2k::CoordSpace::kRawPixel);
  const a2k::KeypointSequence pred = a2k::normalize_base_point(pred_raw);
  const a2k::KeypointSequence gt = a2k::normalize_base_point(gt_raw);

  const double pck_value = a2k::pck(gt, pred, alpha);
  double l1;
  if (!stats_path.empty()) {
    const a2k::NormStats stats = a2k::load_norm_stats(stats_path);
    l1 = a2k::average_l1(a2k::standardize(gt, stats), a2k::standardize(pred, stats));
  } else {
    l1 = a2k::average_l1(gt, pred);
  }
  std::printf("sequence pred=%s gt=%s n_frames=%zu avg_l1=%.6f pck=%.4f\n",
              pred_path.string().c_str(), gt_path.string().c_str(), gt.frames.size(), l1,
              pck_value);
  std::printf("aggregate n_frames=%zu avg_l1=%.6f pck=%.4f\n", gt.frames.size(), l1, pck_value);
}

void run_render(const fs::path& seq_path, const fs::path& out_dir, double fps, int width,
                int height) {
  const a2k::KeypointSequence seq =
      a2k::read_keypoint_file(seq_path, a2k::CoordSpace::kRawPixel);
  const auto paths = a2k::render_sequence(seq, out_dir, width, height, a2k::Palette{}, fps);
  std::cout << "rendered " << paths.size() << " frames at " << fps << " fps into "
            << out_dir.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"audio2keypoint: facial keypoint sequences from audio"};
  app.require_subcommand(1);

  std::string manifest, data_dir, out_dir, config_path, checkpoint_path, audio_path;
  std::string keypoints_path, out_path, pred_path, gt_path, seq_path, ablation, stats_path;
  std::size_t limit = 10000;
  double alpha = 0.02;
  double fps = 25.0;
  int width = 224;
  int height = 224;

  auto* prepare = app.add_subcommand("prepare", "Ingest a manifest of keypoint/audio pairs");
  prepare->add_option("--manifest", manifest, "Input manifest JSON")->required();
  prepare->add_option("--out", out_dir, "Output dataset directory")->required();
  prepare->callback([&] { run_prepare(manifest, out_dir); });

  auto* stats = app.add_subcommand("stats", "Recompute normalization stats for a dataset");
  stats->add_option("--data", data_dir, "Prepared dataset directory")->required();
  stats->add_option("--limit", limit, "Max sequences to use (default 10000)");
  stats->callback([&] { run_stats(data_dir, limit); });

  auto* train = app.add_subcommand("train", "Train the generator/PIV-encoder/discriminator");
  train->add_option("--config", config_path, "Key-value training config file")->required();
  train->add_option("--data", data_dir, "Prepared dataset directory")->required();
  train->add_option("--out", out_dir, "Output directory for checkpoints/history")->required();
  train->add_option("--ablation", ablation,
                    "full|only_audio|no_piv|no_discriminator (overrides config)");
  train->callback([&] { run_train(config_path, data_dir, out_dir, ablation); });

  auto* infer = app.add_subcommand("infer", "Generate a keypoint sequence for an audio clip");
  infer->add_option("--checkpoint", checkpoint_path, "Trained checkpoint")->required();
  infer->add_option("--audio", audio_path, "Input WAV")->required();
  infer->add_option("--keypoints", keypoints_path, "Reference keypoint file (frame 0 is used)")
      ->required();
  infer->add_option("--out", out_path, "Output keypoint sequence file")->required();
  infer->callback([&] { run_infer(checkpoint_path, audio_path, keypoints_path, out_path); });

  auto* eval = app.add_subcommand("eval", "Score a predicted sequence against ground truth");
  eval->add_option("--pred", pred_path, "Predicted keypoint sequence")->required();
  eval->add_option("--gt", gt_path, "Ground-truth keypoint sequence")->required();
  eval->add_option("--alpha", alpha, "PCK threshold factor (default 0.02)");
  eval->add_option("--stats", stats_path,
                   "Optional stats JSON; reports avg_l1 in standardized space");
  eval->callback([&] { run_eval(pred_path, gt_path, alpha, stats_path); });

  auto* render = app.add_subcommand("render", "Rasterize a keypoint sequence to PNG frames");
  render->add_option("--seq", seq_path, "Keypoint sequence file")->required();
  render->add_option("--out", out_dir, "Output image directory")->required();
  render->add_option("--fps", fps, "Frame rate metadata (default 25)");
  render->add_option("--width", width, "Canvas width (default 224)");
  render->add_option("--height", height, "Canvas height (default 224)");
  render->callback([&] { run_render(seq_path, out_dir, fps, width, height); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  } catch (const a2k::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
