#include "a2k/training.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "a2k/errors.hpp"
#include "a2k/metrics.hpp"
#include "json.hpp"

namespace a2k {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be positive");
  if (batch_size <= 0) throw ValidationError("batch_size must be positive");
  if (epochs <= 0) throw ValidationError("epochs must be positive");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) {
    throw ValidationError("adam betas must lie in [0, 1)");
  }
  if (!(adam_eps > 0.0)) throw ValidationError("adam_eps must be positive");
  if (checkpoint_every <= 0) throw ValidationError("checkpoint_every must be positive");
  if (window_frames <= 0 || window_stride <= 0) {
    throw ValidationError("window_frames and window_stride must be positive");
  }
  if (window_frames % model.time_multiple() != 0) {
    throw ValidationError("window_frames must be divisible by 2^n_temporal_levels = " +
                          std::to_string(model.time_multiple()));
  }
  loss_weights.validate();
  model.validate();
}

TrainConfig load_train_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config file: " + path.string());
  TrainConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto comment = line.find('#');
    if (comment != std::string::npos) line.erase(comment);
    const auto eq = line.find('=');
    std::string key = eq == std::string::npos ? line : line.substr(0, eq);
    std::string value = eq == std::string::npos ? "" : line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto b = s.find_first_not_of(" \t\r\n");
      const auto e = s.find_last_not_of(" \t\r\n");
      s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
    };
    trim(key);
    trim(value);
    if (key.empty()) continue;
    if (eq == std::string::npos || value.empty()) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": expected 'key = value'");
    }
    try {
      if (key == "learning_rate") cfg.learning_rate = std::stod(value);
      else if (key == "batch_size") cfg.batch_size = std::stoi(value);
      else if (key == "epochs") cfg.epochs = std::stoi(value);
      else if (key == "adam_beta1") cfg.adam_beta1 = std::stod(value);
      else if (key == "adam_beta2") cfg.adam_beta2 = std::stod(value);
      else if (key == "adam_eps") cfg.adam_eps = std::stod(value);
      else if (key == "seed") cfg.seed = std::stoull(value);
      else if (key == "ablation") cfg.ablation = ablation_from_string(value);
      else if (key == "checkpoint_every") cfg.checkpoint_every = std::stoi(value);
      else if (key == "grad_clip_norm") cfg.grad_clip_norm = std::stod(value);
      else if (key == "window_frames") cfg.window_frames = std::stoi(value);
      else if (key == "window_stride") cfg.window_stride = std::stoi(value);
      else if (key == "w_adv") cfg.loss_weights.w_adv = std::stod(value);
      else if (key == "w_reg") cfg.loss_weights.w_reg = std::stod(value);
      else if (key == "w_piv_gen") cfg.loss_weights.w_piv_gen = std::stod(value);
      else if (key == "w_piv_piv") cfg.loss_weights.w_piv_piv = std::stod(value);
      else if (key == "margin") cfg.loss_weights.margin = std::stod(value);
      else if (key == "base_channels") cfg.model.base_channels = std::stoi(value);
      else if (key == "latent_pv_dim") cfg.model.latent_pv_dim = std::stoi(value);
      else if (key == "latent_piv_dim") cfg.model.latent_piv_dim = std::stoi(value);
      else if (key == "n_temporal_levels") cfg.model.n_temporal_levels = std::stoi(value);
      else if (key == "discriminator_channels") {
        cfg.model.discriminator_channels = std::stoi(value);
      } else {
        throw ValidationError("unknown config key '" + key + "'");
      }
    } catch (const std::invalid_argument&) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) + ": bad value for '" +
                            key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

std::string LossReport::log_line(std::uint64_t step) const {
  std::ostringstream os;
  os << "step=" << step << " l_adv=" << l_adv << " l_reg=" << l_reg
     << " l_piv_gen=" << l_piv_gen << " l_piv_piv=" << l_piv_piv << " l_d=" << l_d;
  return os.str();
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void Adam::ensure_state(const ParamList& params) {
  if (!m_.empty()) return;
  m_.reserve(params.size());
  v_.reserve(params.size());
  for (const NamedParam& p : params) {
    m_.emplace_back(p.tensor->value.shape());
    v_.emplace_back(p.tensor->value.shape());
  }
}

void Adam::step(const ParamList& params, const std::vector<Tensor>& grads) {
  if (grads.size() != params.size()) throw ValidationError("adam: gradient count mismatch");
  ensure_state(params);
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& value = params[i].tensor->value;
    const Tensor& g = grads[i];
    if (!value.same_shape(g)) throw ValidationError("adam: gradient shape mismatch");
    Tensor& m = m_[i];
    Tensor& v = v_[i];
    for (std::int64_t j = 0; j < value.size(); ++j) {
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
      const double m_hat = m[j] / bc1;
      const double v_hat = v[j] / bc2;
      value[j] -= lr_ * m_hat / (std::sqrt(v_hat) + eps_);
    }
  }
}

void Adam::export_state(const ParamList& params, const std::string& prefix,
                        std::map<std::string, Tensor>& out) const {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (i < m_.size()) {
      out[prefix + ".m." + params[i].name] = m_[i];
      out[prefix + ".v." + params[i].name] = v_[i];
    }
  }
}

void Adam::import_state(const ParamList& params, const std::string& prefix,
                        const std::map<std::string, Tensor>& in, std::uint64_t t) {
  ensure_state(params);
  t_ = t;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto mi = in.find(prefix + ".m." + params[i].name);
    const auto vi = in.find(prefix + ".v." + params[i].name);
    if (mi != in.end()) m_[i] = mi->second;
    if (vi != in.end()) v_[i] = vi->second;
  }
}

// ---------------------------------------------------------------------------
// Trainer

namespace {

TrainConfig validated_config(TrainConfig cfg) {
  cfg.validate();
  return cfg;
}

Tensor reference_tensor(const TrainingSample& s) {
  Tensor k({kFrameDim});
  for (int d = 0; d < kFrameDim; ++d) k[d] = s.reference[d];
  return k;
}

std::vector<Tensor> snapshot_grads(const ParamList& params) {
  std::vector<Tensor> grads;
  grads.reserve(params.size());
  for (const NamedParam& p : params) {
    grads.push_back(p.tensor->grad_ready ? p.tensor->grad : Tensor(p.tensor->value.shape()));
  }
  return grads;
}

void clip_global_norm(std::vector<Tensor>& grads, double max_norm) {
  if (max_norm <= 0.0) return;
  double ss = 0.0;
  for (const Tensor& g : grads) {
    for (std::int64_t i = 0; i < g.size(); ++i) ss += g[i] * g[i];
  }
  const double norm = std::sqrt(ss);
  if (norm <= max_norm) return;
  const double scale = max_norm / norm;
  for (Tensor& g : grads) {
    for (std::int64_t i = 0; i < g.size(); ++i) g[i] *= scale;
  }
}

Var batch_mean(const std::vector<Var>& terms) {
  Var total = terms.front();
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return ad::scale(total, 1.0 / static_cast<double>(terms.size()));
}

std::uint64_t epoch_seed(std::uint64_t base, int epoch) {
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

Trainer::Trainer(const TrainConfig& cfg, const NormStats& stats,
                 const SpectrogramConfig& spec_cfg)
    : best_val(std::numeric_limits<double>::infinity()),
      cfg_(validated_config(cfg)),
      stats_(stats),
      spec_cfg_(spec_cfg),
      model_(cfg_.model, cfg_.seed),
      opt_gen_(cfg_.learning_rate, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps),
      opt_piv_(cfg_.learning_rate, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps),
      opt_disc_(cfg_.learning_rate, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps) {
  spec_cfg_.validate();
}

Trainer::Trainer(const TrainConfig& cfg, const Checkpoint& resume_from)
    : best_val(resume_from.best_val),
      cfg_(validated_config(cfg)),
      stats_(resume_from.stats),
      spec_cfg_(resume_from.spectrogram),
      model_(resume_from.model, resume_from.seed),
      opt_gen_(cfg_.learning_rate, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps),
      opt_piv_(cfg_.learning_rate, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps),
      opt_disc_(cfg_.learning_rate, cfg_.adam_beta1, cfg_.adam_beta2, cfg_.adam_eps) {
  if (ablation_to_string(cfg_.ablation) != resume_from.ablation) {
    throw ValidationError("checkpoint was trained with ablation '" + resume_from.ablation +
                          "', config requests '" + ablation_to_string(cfg_.ablation) + "'");
  }
  epoch = resume_from.epoch;
  global_step = resume_from.global_step;

  load_param_values(model_.all_params(), resume_from.tensors);
  opt_gen_.import_state(model_.generator_params(), "adam.gen", resume_from.tensors,
                        resume_from.adam_t_gen);
  opt_piv_.import_state(model_.piv_params(), "adam.piv", resume_from.tensors,
                        resume_from.adam_t_piv);
  opt_disc_.import_state(model_.discriminator_params(), "adam.disc", resume_from.tensors,
                         resume_from.adam_t_disc);
}

Checkpoint Trainer::to_checkpoint() const {
  Checkpoint ckpt;
  ckpt.model = cfg_.model;
  ckpt.spectrogram = spec_cfg_;
  ckpt.stats = stats_;
  ckpt.ablation = ablation_to_string(cfg_.ablation);
  ckpt.seed = cfg_.seed;
  ckpt.epoch = epoch;
  ckpt.global_step = global_step;
  ckpt.best_val = best_val;
  ckpt.adam_t_gen = opt_gen_.t();
  ckpt.adam_t_piv = opt_piv_.t();
  ckpt.adam_t_disc = opt_disc_.t();
  for (const NamedParam& p : model_.all_params()) ckpt.tensors[p.name] = p.tensor->value;
  opt_gen_.export_state(model_.generator_params(), "adam.gen", ckpt.tensors);
  opt_piv_.export_state(model_.piv_params(), "adam.piv", ckpt.tensors);
  opt_disc_.export_state(model_.discriminator_params(), "adam.disc", ckpt.tensors);
  return ckpt;
}

LossReport Trainer::train_step(const std::vector<const TrainingSample*>& batch) {
  if (batch.empty()) throw ValidationError("train_step: empty batch");
  const Ablation ablation = cfg_.ablation;
  const bool use_disc = ablation != Ablation::kNoDiscriminator;
  const bool use_piv = ablation == Ablation::kFull ||
                       ablation == Ablation::kNoDiscriminator;

  struct SampleGraph {
    Var y;
    Var y_hat;
    Var piv_latent;
  };
  std::vector<SampleGraph> graphs;
  graphs.reserve(batch.size());
  for (const TrainingSample* s : batch) {
    const Var spec = ad::constant(s->spectrogram);
    const Var k = ad::constant(reference_tensor(*s));
    const Var y = ad::constant(s->target);
    GeneratorOutput gen = model_.generator_forward(spec, k, ablation);
    graphs.push_back({y, gen.y_hat, gen.piv_latent});
  }

  LossReport report;

  // Discriminator phase: real vs detached fakes, then its own Adam step.
  if (use_disc) {
    std::vector<Var> d_terms;
    d_terms.reserve(batch.size());
    for (const SampleGraph& g : graphs) {
      const Var d_real = model_.discriminator_forward(g.y);
      const Var d_fake = model_.discriminator_forward(ad::constant(g.y_hat->value));
      d_terms.push_back(losses::discriminator(d_real, d_fake));
    }
    const Var l_d = batch_mean(d_terms);
    report.l_d = ad::scalar_value(l_d);
    if (!std::isfinite(report.l_d)) {
      report.aborted = true;
      report.diagnostic = "non-finite discriminator loss";
      return report;
    }
    ad::backward(l_d);
    const ParamList disc_params = model_.discriminator_params();
    std::vector<Tensor> grads = snapshot_grads(disc_params);
    clip_global_norm(grads, cfg_.grad_clip_norm);
    opt_disc_.step(disc_params, grads);
  }

  // Generator / PIV phase: fresh scores against the updated discriminator,
  // same generated sequences.
  std::vector<Var> adv_terms, reg_terms, piv_gen_terms, piv_piv_terms;
  for (const SampleGraph& g : graphs) {
    reg_terms.push_back(losses::regression(g.y, g.y_hat));
    if (use_disc) {
      adv_terms.push_back(losses::adversarial_gen(model_.discriminator_forward(g.y_hat)));
    }
    if (use_piv) {
      const Var e_y = model_.piv_encode_frames(g.y);
      const Var e_yhat = model_.piv_encode_frames(g.y_hat);
      piv_gen_terms.push_back(losses::piv_gen(g.piv_latent, e_yhat));
      piv_piv_terms.push_back(
          losses::piv_triplet(g.piv_latent, e_y, e_yhat, cfg_.loss_weights.margin));
    }
  }

  const Var zero = ad::constant(Tensor::scalar(0.0));
  const Var l_reg = batch_mean(reg_terms);
  const Var l_adv = use_disc ? batch_mean(adv_terms) : zero;
  const Var l_piv_gen = use_piv ? batch_mean(piv_gen_terms) : zero;
  const Var l_piv_piv = use_piv ? batch_mean(piv_piv_terms) : zero;

  report.l_reg = ad::scalar_value(l_reg);
  report.l_adv = ad::scalar_value(l_adv);
  report.l_piv_gen = ad::scalar_value(l_piv_gen);
  report.l_piv_piv = ad::scalar_value(l_piv_piv);
  for (double v : {report.l_reg, report.l_adv, report.l_piv_gen, report.l_piv_piv}) {
    if (!std::isfinite(v)) {
      report.aborted = true;
      report.diagnostic = "non-finite generator-phase loss";
      return report;
    }
  }

  const Var l_gen_total = losses::generator_total(l_adv, l_reg, l_piv_gen, cfg_.loss_weights);
  const ParamList gen_params = model_.generator_params();
  ad::backward(l_gen_total);
  std::vector<Tensor> gen_grads = snapshot_grads(gen_params);

  ParamList piv_params;
  std::vector<Tensor> piv_grads;
  if (use_piv) {
    const Var l_piv_total = losses::piv_total(l_reg, l_adv, l_piv_piv, cfg_.loss_weights);
    ad::backward(l_piv_total);
    piv_params = model_.piv_params();
    piv_grads = snapshot_grads(piv_params);
  }

  // Both gradient sets are computed against pre-update values; apply last.
  clip_global_norm(gen_grads, cfg_.grad_clip_norm);
  opt_gen_.step(gen_params, gen_grads);
  if (use_piv) {
    clip_global_norm(piv_grads, cfg_.grad_clip_norm);
    opt_piv_.step(piv_params, piv_grads);
  }
  return report;
}

double Trainer::validation_l1(const std::vector<TrainingSample>& val) const {
  if (val.empty()) throw ValidationError("validation set is empty");
  double total = 0.0;
  for (const TrainingSample& s : val) {
    const Var spec = ad::constant(s.spectrogram);
    const Var k = ad::constant(reference_tensor(s));
    const GeneratorOutput gen = model_.generator_forward(spec, k, cfg_.ablation);
    total += losses::regression(s.target, gen.y_hat->value);
  }
  return total / static_cast<double>(val.size());
}

// ---------------------------------------------------------------------------
// fit

namespace {

nlohmann::json step_json(const StepRecord& r) {
  return nlohmann::json{{"type", "step"},
                        {"epoch", r.epoch},
                        {"step", r.step},
                        {"l_adv", r.losses.l_adv},
                        {"l_reg", r.losses.l_reg},
                        {"l_piv_gen", r.losses.l_piv_gen},
                        {"l_piv_piv", r.losses.l_piv_piv},
                        {"l_d", r.losses.l_d}};
}

}  // namespace

FitHistory fit(Trainer& trainer, const std::vector<TrainingSample>& train_samples,
               const std::vector<TrainingSample>& val_samples,
               const std::filesystem::path& out_dir, std::ostream* log) {
  if (train_samples.empty()) throw ValidationError("training set is empty");
  if (val_samples.empty()) throw ValidationError("validation set is empty");
  const TrainConfig& cfg = trainer.config();

  std::ofstream history_file;
  if (!out_dir.empty()) {
    std::filesystem::create_directories(out_dir);
    history_file.open(out_dir / "history.jsonl", std::ios::app);
    if (!history_file) {
      throw std::runtime_error("cannot open history file in " + out_dir.string());
    }
  }

  FitHistory history;
  history.best_val = trainer.best_val;
  history.best_epoch = trainer.best_epoch;

  while (trainer.epoch < cfg.epochs) {
    const int current_epoch = trainer.epoch;
    BatchIterator batches(train_samples.size(), cfg.batch_size,
                          epoch_seed(cfg.seed, current_epoch));
    while (auto indices = batches.next()) {
      std::vector<const TrainingSample*> batch;
      batch.reserve(indices->size());
      for (std::size_t i : *indices) batch.push_back(&train_samples[i]);
      const LossReport report = trainer.train_step(batch);
      ++trainer.global_step;
      StepRecord record{current_epoch, trainer.global_step, report};
      history.steps.push_back(record);
      if (history_file.is_open()) history_file << step_json(record).dump() << "\n" << std::flush;
      if (log) *log << report.log_line(trainer.global_step) << "\n";
      if (report.aborted) {
        throw std::runtime_error("training aborted at step " +
                                 std::to_string(trainer.global_step) + ": " + report.diagnostic);
      }
    }

    const double val_l1 = trainer.validation_l1(val_samples);
    history.epochs.push_back({current_epoch, val_l1});
    const bool is_best = val_l1 < trainer.best_val;
    if (is_best) {
      trainer.best_val = val_l1;
      trainer.best_epoch = current_epoch;
      history.best_val = val_l1;
      history.best_epoch = current_epoch;
    }
    if (history_file.is_open()) {
      history_file << nlohmann::json{{"type", "epoch"},
                                     {"epoch", current_epoch},
                                     {"val_l1", val_l1},
                                     {"best", is_best}}
                          .dump()
                   << "\n"
                   << std::flush;
    }
    if (log) {
      *log << "epoch=" << current_epoch << " val_l1=" << val_l1 << (is_best ? " (best)" : "")
           << "\n";
    }

    // Checkpoints record the next epoch to run, making resume exact.
    trainer.epoch = current_epoch + 1;
    if (!out_dir.empty()) {
      if (is_best) save_checkpoint(out_dir / "best.ckpt", trainer.to_checkpoint());
      if (trainer.epoch % cfg.checkpoint_every == 0 || trainer.epoch == cfg.epochs) {
        save_checkpoint(out_dir / "last.ckpt", trainer.to_checkpoint());
      }
    }
  }
  return history;
}

// ---------------------------------------------------------------------------
// Inference

KeypointSequence generate_sequence(const Model& model, const NormStats& stats,
                                   const SpectrogramConfig& spec_cfg, const AudioClip& audio,
                                   const KeypointFrame& reference, Ablation ablation) {
  reference.validate();
  if (reference.space != CoordSpace::kRawPixel) {
    throw ValidationError("reference frame must be in raw-pixel space");
  }
  const Point2 base = reference.points[kBasePointIndex];

  KeypointSequence ref_seq;
  ref_seq.fps = spec_cfg.video_fps;
  ref_seq.frames.push_back(reference);
  const KeypointSequence ref_std = standardize(normalize_base_point(ref_seq), stats);
  Tensor k({kFrameDim});
  {
    const auto flat = flatten(ref_std.frames[0]);
    for (int d = 0; d < kFrameDim; ++d) k[d] = flat[d];
  }

  const AudioClip clip =
      audio.sample_rate == spec_cfg.sample_rate ? audio : resample(audio, spec_cfg.sample_rate);
  const MelSpectrogram spec = log_mel_spectrogram(clip, spec_cfg);
  const int fpv = spec_cfg.frames_per_video_frame;
  const int t_raw = spec.n_steps / fpv;
  if (t_raw < 1) {
    throw ValidationError("audio too short: need at least one video frame (" +
                          std::to_string(1.0 / spec_cfg.video_fps) + " s)");
  }
  const int multiple = model.config().time_multiple();
  const int t_pad = (t_raw + multiple - 1) / multiple * multiple;

  Tensor spec_tensor({spec.n_mels, spec.n_steps});
  for (int m = 0; m < spec.n_mels; ++m) {
    for (int t = 0; t < spec.n_steps; ++t) spec_tensor.at(m, t) = spec.at(m, t);
  }
  Var window = ad::slice_cols(ad::constant(std::move(spec_tensor)), 0, t_raw * fpv);
  if (t_pad != t_raw) {
    window = ad::reflect_pad_cols(window, 0, (t_pad - t_raw) * fpv);
  }

  const GeneratorOutput gen = model.generator_forward(window, ad::constant(k), ablation);
  const Tensor& y_hat = gen.y_hat->value;
  if (!y_hat.all_finite()) throw std::runtime_error("generator produced non-finite keypoints");

  KeypointSequence out_std;
  out_std.fps = spec_cfg.video_fps;
  out_std.frames.reserve(static_cast<std::size_t>(t_raw));
  for (int t = 0; t < t_raw; ++t) {
    std::array<double, kFrameDim> flat{};
    for (int d = 0; d < kFrameDim; ++d) flat[d] = y_hat.at(t, d);
    out_std.frames.push_back(unflatten(flat, CoordSpace::kStandardized));
  }

  KeypointSequence out = destandardize(out_std, stats);
  for (KeypointFrame& f : out.frames) {
    f.space = CoordSpace::kRawPixel;
    for (Point2& p : f.points) {
      p.x += base.x;
      p.y += base.y;
    }
  }
  return out;
}

}  // namespace a2k
