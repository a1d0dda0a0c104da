#include "a2k/keypoints.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "a2k/errors.hpp"

namespace a2k {
namespace {

void require(bool ok, const std::string& message) {
  if (!ok) throw ValidationError(message);
}

}  // namespace

const char* coord_space_name(CoordSpace space) {
  switch (space) {
    case CoordSpace::kRawPixel: return "raw-pixel";
    case CoordSpace::kBaseNormalized: return "base-normalized";
    case CoordSpace::kStandardized: return "standardized";
  }
  return "unknown";
}

void KeypointFrame::validate() const {
  for (const Point2& p : points) {
    require(std::isfinite(p.x) && std::isfinite(p.y),
            "keypoint frame contains non-finite coordinates");
  }
}

CoordSpace KeypointSequence::space() const {
  require(!frames.empty(), "empty keypoint sequence has no coordinate space");
  return frames.front().space;
}

void KeypointSequence::validate() const {
  require(!frames.empty(), "keypoint sequence must have at least one frame");
  const CoordSpace common = frames.front().space;
  for (const KeypointFrame& f : frames) {
    require(f.space == common, "keypoint sequence mixes coordinate spaces");
    f.validate();
  }
}

std::array<double, kFrameDim> flatten(const KeypointFrame& frame) {
  std::array<double, kFrameDim> out{};
  for (int i = 0; i < kNumKeypoints; ++i) {
    out[2 * i] = frame.points[i].x;
    out[2 * i + 1] = frame.points[i].y;
  }
  return out;
}

KeypointFrame unflatten(const std::array<double, kFrameDim>& values, CoordSpace space) {
  KeypointFrame frame;
  frame.space = space;
  for (int i = 0; i < kNumKeypoints; ++i) {
    frame.points[i] = {values[2 * i], values[2 * i + 1]};
  }
  return frame;
}

KeypointSequence normalize_base_point(const KeypointSequence& seq) {
  seq.validate();
  require(seq.space() == CoordSpace::kRawPixel,
          std::string("normalize_base_point expects raw-pixel input, got ") +
              coord_space_name(seq.space()));
  KeypointSequence out;
  out.fps = seq.fps;
  out.frames.reserve(seq.frames.size());
  for (const KeypointFrame& f : seq.frames) {
    const Point2 base = f.points[kBasePointIndex];
    KeypointFrame g;
    g.space = CoordSpace::kBaseNormalized;
    for (int i = 0; i < kNumKeypoints; ++i) {
      g.points[i] = {f.points[i].x - base.x, f.points[i].y - base.y};
    }
    out.frames.push_back(g);
  }
  return out;
}

void NormStatsAccumulator::add(const KeypointSequence& seq) {
  seq.validate();
  require(seq.space() == CoordSpace::kBaseNormalized,
          "norm stats expect base-normalized sequences");
  ++n_sequences_;
  for (const KeypointFrame& f : seq.frames) {
    ++n_frames_;
    const auto v = flatten(f);
    for (int d = 0; d < kFrameDim; ++d) {
      const double delta = v[d] - mean_[d];
      mean_[d] += delta / static_cast<double>(n_frames_);
      m2_[d] += delta * (v[d] - mean_[d]);
    }
  }
}

NormStats NormStatsAccumulator::finalize() const {
  require(n_sequences_ > 0, "no sequences");
  NormStats stats;
  stats.n_sequences_used = n_sequences_;
  stats.mean = mean_;
  for (int d = 0; d < kFrameDim; ++d) {
    const double var = m2_[d] / static_cast<double>(n_frames_);  // population
    stats.std[d] = std::max(std::sqrt(std::max(var, 0.0)), kStdFloor);
  }
  return stats;
}

NormStats compute_norm_stats(const std::vector<KeypointSequence>& sequences,
                             std::size_t limit) {
  NormStatsAccumulator acc;
  for (const KeypointSequence& seq : sequences) {
    if (acc.n_sequences() >= limit) break;
    acc.add(seq);
  }
  return acc.finalize();
}

KeypointSequence standardize(const KeypointSequence& seq, const NormStats& stats) {
  seq.validate();
  require(seq.space() == CoordSpace::kBaseNormalized,
          std::string("standardize expects base-normalized input, got ") +
              coord_space_name(seq.space()));
  KeypointSequence out;
  out.fps = seq.fps;
  out.frames.reserve(seq.frames.size());
  for (const KeypointFrame& f : seq.frames) {
    KeypointFrame g;
    g.space = CoordSpace::kStandardized;
    for (int i = 0; i < kNumKeypoints; ++i) {
      g.points[i].x = (f.points[i].x - stats.mean[2 * i]) / stats.std[2 * i];
      g.points[i].y = (f.points[i].y - stats.mean[2 * i + 1]) / stats.std[2 * i + 1];
    }
    out.frames.push_back(g);
  }
  return out;
}

KeypointSequence destandardize(const KeypointSequence& seq, const NormStats& stats) {
  seq.validate();
  require(seq.space() == CoordSpace::kStandardized,
          std::string("destandardize expects standardized input, got ") +
              coord_space_name(seq.space()));
  KeypointSequence out;
  out.fps = seq.fps;
  out.frames.reserve(seq.frames.size());
  for (const KeypointFrame& f : seq.frames) {
    KeypointFrame g;
    g.space = CoordSpace::kBaseNormalized;
    for (int i = 0; i < kNumKeypoints; ++i) {
      g.points[i].x = f.points[i].x * stats.std[2 * i] + stats.mean[2 * i];
      g.points[i].y = f.points[i].y * stats.std[2 * i + 1] + stats.mean[2 * i + 1];
    }
    out.frames.push_back(g);
  }
  return out;
}

BoundingBox bounding_box(const KeypointSequence& seq) {
  seq.validate();
  double min_x = seq.frames[0].points[0].x, max_x = min_x;
  double min_y = seq.frames[0].points[0].y, max_y = min_y;
  for (const KeypointFrame& f : seq.frames) {
    for (const Point2& p : f.points) {
      min_x = std::min(min_x, p.x);
      max_x = std::max(max_x, p.x);
      min_y = std::min(min_y, p.y);
      max_y = std::max(max_y, p.y);
    }
  }
  return {max_y - min_y, max_x - min_x};
}

namespace {

constexpr char kKeypointMagic[8] = {'V', 'O', 'X', 'K', 'P', '0', '0', '1'};

void put_u32(std::ostream& os, std::uint32_t v) {
  unsigned char bytes[4] = {static_cast<unsigned char>(v & 0xff),
                            static_cast<unsigned char>((v >> 8) & 0xff),
                            static_cast<unsigned char>((v >> 16) & 0xff),
                            static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(bytes), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char bytes[4];
  is.read(reinterpret_cast<char*>(bytes), 4);
  return static_cast<std::uint32_t>(bytes[0]) |
         (static_cast<std::uint32_t>(bytes[1]) << 8) |
         (static_cast<std::uint32_t>(bytes[2]) << 16) |
         (static_cast<std::uint32_t>(bytes[3]) << 24);
}

void put_f32(std::ostream& os, float v) {
  std::uint32_t bits;
  std::memcpy(&bits, &v, 4);
  put_u32(os, bits);
}

float get_f32(std::istream& is) {
  const std::uint32_t bits = get_u32(is);
  float v;
  std::memcpy(&v, &bits, 4);
  return v;
}

}  // namespace

void write_keypoint_file(const std::filesystem::path& path, const KeypointSequence& seq) {
  seq.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open keypoint file for writing: " + path.string());
  os.write(kKeypointMagic, sizeof(kKeypointMagic));
  put_u32(os, static_cast<std::uint32_t>(seq.frames.size()));
  for (const KeypointFrame& f : seq.frames) {
    for (const Point2& p : f.points) {
      put_f32(os, static_cast<float>(p.x));
      put_f32(os, static_cast<float>(p.y));
    }
  }
  if (!os) throw std::runtime_error("short write on keypoint file: " + path.string());
}

KeypointSequence read_keypoint_file(const std::filesystem::path& path, CoordSpace space) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open keypoint file: " + path.string());
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kKeypointMagic, sizeof(magic)) != 0) {
    throw ValidationError("bad keypoint file magic: " + path.string());
  }
  const std::uint32_t n_frames = get_u32(is);
  if (!is || n_frames == 0) throw ValidationError("keypoint file has no frames: " + path.string());

  KeypointSequence seq;
  seq.frames.reserve(n_frames);
  for (std::uint32_t t = 0; t < n_frames; ++t) {
    KeypointFrame f;
    f.space = space;
    for (int i = 0; i < kNumKeypoints; ++i) {
      f.points[i].x = get_f32(is);
      f.points[i].y = get_f32(is);
    }
    if (!is) {
      throw ValidationError("truncated keypoint file (expected " + std::to_string(n_frames) +
                            " frames of 68 points): " + path.string());
    }
    seq.frames.push_back(f);
  }
  // A well-formed file ends exactly after the last coordinate.
  is.peek();
  if (!is.eof()) {
    throw ValidationError("trailing bytes after keypoint payload (not 68 points per frame?): " +
                          path.string());
  }
  seq.validate();
  return seq;
}

}  // namespace a2k
