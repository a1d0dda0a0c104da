#include "a2k/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "a2k/errors.hpp"
#include "json.hpp"

namespace a2k {
namespace {

using nlohmann::json;

constexpr char kMagic[8] = {'A', '2', 'K', 'C', 'K', 'P', 'T', '1'};

json model_config_to_json(const ModelConfig& m) {
  return json{{"base_channels", m.base_channels},
              {"latent_pv_dim", m.latent_pv_dim},
              {"latent_piv_dim", m.latent_piv_dim},
              {"n_temporal_levels", m.n_temporal_levels},
              {"discriminator_channels", m.discriminator_channels},
              {"n_mels", m.n_mels},
              {"frames_per_video_frame", m.frames_per_video_frame}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig m;
  m.base_channels = j.at("base_channels").get<int>();
  m.latent_pv_dim = j.at("latent_pv_dim").get<int>();
  m.latent_piv_dim = j.at("latent_piv_dim").get<int>();
  m.n_temporal_levels = j.at("n_temporal_levels").get<int>();
  m.discriminator_channels = j.at("discriminator_channels").get<int>();
  m.n_mels = j.at("n_mels").get<int>();
  m.frames_per_video_frame = j.at("frames_per_video_frame").get<int>();
  return m;
}

json spectrogram_config_to_json(const SpectrogramConfig& c) {
  return json{{"sample_rate", c.sample_rate},
              {"fft_size", c.fft_size},
              {"hop", c.hop},
              {"n_mels", c.n_mels},
              {"fmin", c.fmin},
              {"fmax", c.fmax},
              {"log_floor", c.log_floor},
              {"frames_per_video_frame", c.frames_per_video_frame},
              {"video_fps", c.video_fps}};
}

SpectrogramConfig spectrogram_config_from_json(const json& j) {
  SpectrogramConfig c;
  c.sample_rate = j.at("sample_rate").get<int>();
  c.fft_size = j.at("fft_size").get<int>();
  c.hop = j.at("hop").get<int>();
  c.n_mels = j.at("n_mels").get<int>();
  c.fmin = j.at("fmin").get<double>();
  c.fmax = j.at("fmax").get<double>();
  c.log_floor = j.at("log_floor").get<double>();
  c.frames_per_video_frame = j.at("frames_per_video_frame").get<int>();
  c.video_fps = j.at("video_fps").get<double>();
  return c;
}

void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
  const auto* b = static_cast<const std::uint8_t*>(p);
  out.insert(out.end(), b, b + n);
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  put_u64(out, std::bit_cast<std::uint64_t>(v));
}

class Reader {
 public:
  explicit Reader(std::vector<std::uint8_t> bytes) : bytes_(std::move(bytes)) {}

  void read(void* dst, std::size_t n) {
    if (pos_ + n > bytes_.size()) throw ValidationError("truncated checkpoint file");
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32() {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(byte()) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(byte()) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t n) {
    std::string s(n, '\0');
    read(s.data(), n);
    return s;
  }

 private:
  std::uint8_t byte() {
    if (pos_ >= bytes_.size()) throw ValidationError("truncated checkpoint file");
    return bytes_[pos_++];
  }
  std::vector<std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  json header;
  header["version"] = ckpt.version;
  header["model"] = model_config_to_json(ckpt.model);
  header["spectrogram"] = spectrogram_config_to_json(ckpt.spectrogram);
  header["ablation"] = ckpt.ablation;
  header["seed"] = ckpt.seed;
  header["epoch"] = ckpt.epoch;
  header["global_step"] = ckpt.global_step;
  header["best_val"] = ckpt.best_val;
  header["adam_t_gen"] = ckpt.adam_t_gen;
  header["adam_t_piv"] = ckpt.adam_t_piv;
  header["adam_t_disc"] = ckpt.adam_t_disc;
  header["n_sequences_used"] = ckpt.stats.n_sequences_used;
  const std::string header_str = header.dump();

  std::vector<std::uint8_t> out;
  put_bytes(out, kMagic, sizeof(kMagic));
  put_u32(out, static_cast<std::uint32_t>(ckpt.version));
  put_u64(out, header_str.size());
  put_bytes(out, header_str.data(), header_str.size());

  // Stats travel in the tensor section under reserved names.
  std::map<std::string, Tensor> tensors = ckpt.tensors;
  Tensor mean({kFrameDim}), stddev({kFrameDim});
  for (int d = 0; d < kFrameDim; ++d) {
    mean[d] = ckpt.stats.mean[d];
    stddev[d] = ckpt.stats.std[d];
  }
  tensors["stats.mean"] = mean;
  tensors["stats.std"] = stddev;

  put_u64(out, tensors.size());
  for (const auto& [name, tensor] : tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    put_bytes(out, name.data(), name.size());
    put_u32(out, static_cast<std::uint32_t>(tensor.ndim()));
    for (int i = 0; i < tensor.ndim(); ++i) {
      put_u32(out, static_cast<std::uint32_t>(tensor.dim(i)));
    }
    for (std::int64_t i = 0; i < tensor.size(); ++i) put_f64(out, tensor[i]);
  }

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("short write on checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                                  std::istreambuf_iterator<char>());
  Reader r(std::move(bytes));

  char magic[8];
  r.read(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw ValidationError("bad checkpoint magic in " + path.string());
  }

  Checkpoint ckpt;
  ckpt.version = static_cast<int>(r.u32());
  if (ckpt.version != 1) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(ckpt.version));
  }
  const std::uint64_t header_len = r.u64();
  const std::string header_str = r.str(header_len);
  json header;
  try {
    header = json::parse(header_str);
  } catch (const json::exception& e) {
    throw ValidationError("malformed checkpoint header in " + path.string() + ": " + e.what());
  }

  ckpt.model = model_config_from_json(header.at("model"));
  ckpt.spectrogram = spectrogram_config_from_json(header.at("spectrogram"));
  ckpt.ablation = header.at("ablation").get<std::string>();
  ckpt.seed = header.at("seed").get<std::uint64_t>();
  ckpt.epoch = header.at("epoch").get<int>();
  ckpt.global_step = header.at("global_step").get<std::uint64_t>();
  ckpt.best_val = header.at("best_val").get<double>();
  ckpt.adam_t_gen = header.at("adam_t_gen").get<std::uint64_t>();
  ckpt.adam_t_piv = header.at("adam_t_piv").get<std::uint64_t>();
  ckpt.adam_t_disc = header.at("adam_t_disc").get<std::uint64_t>();
  ckpt.stats.n_sequences_used = header.at("n_sequences_used").get<std::size_t>();

  const std::uint64_t n_tensors = r.u64();
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    const std::uint32_t name_len = r.u32();
    const std::string name = r.str(name_len);
    const std::uint32_t ndim = r.u32();
    std::vector<int> shape(ndim);
    for (std::uint32_t d = 0; d < ndim; ++d) shape[d] = static_cast<int>(r.u32());
    Tensor t(shape);
    for (std::int64_t j = 0; j < t.size(); ++j) t[j] = r.f64();
    ckpt.tensors[name] = std::move(t);
  }

  auto take = [&ckpt, &path](const char* name) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end() || it->second.size() != kFrameDim) {
      throw ValidationError(std::string("checkpoint missing ") + name + ": " + path.string());
    }
    Tensor t = std::move(it->second);
    ckpt.tensors.erase(it);
    return t;
  };
  const Tensor mean = take("stats.mean");
  const Tensor stddev = take("stats.std");
  for (int d = 0; d < kFrameDim; ++d) {
    ckpt.stats.mean[d] = mean[d];
    ckpt.stats.std[d] = stddev[d];
  }
  return ckpt;
}

void load_param_values(const ParamList& params, const std::map<std::string, Tensor>& tensors) {
  for (const NamedParam& p : params) {
    const auto it = tensors.find(p.name);
    if (it == tensors.end()) {
      throw ValidationError("checkpoint missing tensor '" + p.name + "'");
    }
    if (!it->second.same_shape(p.tensor->value)) {
      throw ValidationError("checkpoint tensor '" + p.name + "' has shape " +
                            it->second.shape_string() + ", model expects " +
                            p.tensor->value.shape_string());
    }
    p.tensor->value = it->second;
  }
}

Model build_model(const Checkpoint& ckpt) {
  Model model(ckpt.model, ckpt.seed);
  load_param_values(model.all_params(), ckpt.tensors);
  return model;
}

}  // namespace a2k
