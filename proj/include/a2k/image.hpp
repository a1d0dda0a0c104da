#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "a2k/keypoints.hpp"

namespace a2k {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  bool operator==(const Rgb&) const = default;
};

class Image {
 public:
  Image(int width, int height);

  int width() const { return width_; }
  int height() const { return height_; }
  bool contains(int x, int y) const {
    return x >= 0 && x < width_ && y >= 0 && y < height_;
  }
  Rgb get(int x, int y) const;
  void set(int x, int y, Rgb c);  // out-of-bounds pixels are dropped
  const std::vector<std::uint8_t>& bytes() const { return pixels_; }

 private:
  int width_;
  int height_;
  std::vector<std::uint8_t> pixels_;  // RGB8, row-major, black-initialized
};

// 8-bit RGB PNG, deterministic bytes for identical pixel content.
void write_png(const std::filesystem::path& path, const Image& image);

// Colors for the eight facial parts of the 68-point annotation.
struct Palette {
  Rgb chin{128, 128, 128};
  Rgb right_brow{0, 255, 0};
  Rgb left_brow{0, 255, 0};
  Rgb nose{0, 0, 255};
  Rgb right_eye{255, 0, 0};
  Rgb left_eye{255, 0, 0};
  Rgb outer_lips{255, 255, 0};
  Rgb inner_lips{255, 0, 255};
};

// Polyline connectivity: chin 0-16, right brow 17-21, left brow 22-26,
// nose 27-35, right eye 36-41 (closed), left eye 42-47 (closed), outer lips
// 48-59 (closed), inner lips 60-67 (closed). Raw-pixel frames only; segments
// are clipped per pixel against the canvas.
Image rasterize_frame(const KeypointFrame& frame, int width, int height,
                      const Palette& palette = Palette{});

// Writes one PNG per frame into out_dir, zero-padded numeric filenames
// (frame_000000.png, ...). Returns the written paths in frame order.
std::vector<std::filesystem::path> render_sequence(const KeypointSequence& seq,
                                                   const std::filesystem::path& out_dir,
                                                   int width, int height,
                                                   const Palette& palette = Palette{},
                                                   double fps = 25.0);

}  // namespace a2k
