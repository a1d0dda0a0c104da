#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

namespace a2k {

inline constexpr int kNumKeypoints = 68;
inline constexpr int kFrameDim = 2 * kNumKeypoints;  // 136
// First nose keypoint (top of the nose bridge) in the standard 68-point
// annotation order; nose spans 27..35.
inline constexpr int kBasePointIndex = 27;
inline constexpr double kStdFloor = 1e-6;

enum class CoordSpace { kRawPixel, kBaseNormalized, kStandardized };

const char* coord_space_name(CoordSpace space);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

// One frame of 68 2D facial keypoints plus the coordinate space it lives in.
struct KeypointFrame {
  std::array<Point2, kNumKeypoints> points{};
  CoordSpace space = CoordSpace::kRawPixel;

  void validate() const;  // 68 finite points
};

struct KeypointSequence {
  std::vector<KeypointFrame> frames;
  double fps = 25.0;

  std::size_t length() const { return frames.size(); }
  CoordSpace space() const;  // common space of all frames
  void validate() const;     // length >= 1, uniform space, finite coords
};

// Per-dimension mean/std of flattened frames, computed over the leading
// sequences of a dataset.
struct NormStats {
  std::array<double, kFrameDim> mean{};
  std::array<double, kFrameDim> std{};
  std::size_t n_sequences_used = 0;
};

struct BoundingBox {
  double h = 0.0;
  double w = 0.0;
};

// Flatten order is (x0, y0, x1, y1, ..., x67, y67).
std::array<double, kFrameDim> flatten(const KeypointFrame& frame);
KeypointFrame unflatten(const std::array<double, kFrameDim>& values, CoordSpace space);

// Subtracts each frame's own point-27 coordinates from all 68 points of that
// frame. Input must be raw-pixel; output is base-normalized with point 27 at
// (0,0) in every frame.
KeypointSequence normalize_base_point(const KeypointSequence& seq);

// Streaming per-dimension mean / population std (Welford).
class NormStatsAccumulator {
 public:
  void add(const KeypointSequence& seq);  // base-normalized input
  NormStats finalize() const;             // throws ValidationError on empty
  std::size_t n_sequences() const { return n_sequences_; }

 private:
  std::size_t n_sequences_ = 0;
  std::size_t n_frames_ = 0;
  std::array<double, kFrameDim> mean_{};
  std::array<double, kFrameDim> m2_{};
};

NormStats compute_norm_stats(const std::vector<KeypointSequence>& sequences,
                             std::size_t limit = 10000);

KeypointSequence standardize(const KeypointSequence& seq, const NormStats& stats);
KeypointSequence destandardize(const KeypointSequence& seq, const NormStats& stats);

// One box per sequence, over all frames and points.
BoundingBox bounding_box(const KeypointSequence& seq);

// Keypoint file format: magic "VOXKP001", little-endian u32 frame count, then
// T x 68 x 2 float32 coordinates in (x, y) order. The file carries geometry
// only; the caller supplies the coordinate space it is known to be in.
void write_keypoint_file(const std::filesystem::path& path, const KeypointSequence& seq);
KeypointSequence read_keypoint_file(const std::filesystem::path& path,
                                    CoordSpace space = CoordSpace::kRawPixel);

}  // namespace a2k
