#include "a2k/image.hpp"

#include <zlib.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <utility>

#include "a2k/errors.hpp"

namespace a2k {

Image::Image(int width, int height) : width_(width), height_(height) {
  if (width <= 0 || height <= 0) {
    throw ValidationError("canvas dimensions must be positive, got " +
                          std::to_string(width) + "x" + std::to_string(height));
  }
  pixels_.assign(static_cast<std::size_t>(width) * height * 3, 0);
}

Rgb Image::get(int x, int y) const {
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
}

void Image::set(int x, int y, Rgb c) {
  if (!contains(x, y)) return;
  const std::size_t i = (static_cast<std::size_t>(y) * width_ + x) * 3;
  pixels_[i] = c.r;
  pixels_[i + 1] = c.g;
  pixels_[i + 2] = c.b;
}

namespace {

void put_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
  out.push_back(static_cast<std::uint8_t>(v & 0xff));
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
  put_be32(out, static_cast<std::uint32_t>(payload.size()));
  const std::size_t crc_start = out.size();
  out.insert(out.end(), type, type + 4);
  out.insert(out.end(), payload.begin(), payload.end());
  const uLong crc = crc32(crc32(0L, nullptr, 0), out.data() + crc_start,
                          static_cast<uInt>(out.size() - crc_start));
  put_be32(out, static_cast<std::uint32_t>(crc));
}

}  // namespace

void write_png(const std::filesystem::path& path, const Image& image) {
  const int w = image.width();
  const int h = image.height();

  // Filter byte 0 (None) per scanline.
  std::vector<std::uint8_t> raw;
  raw.reserve(static_cast<std::size_t>(h) * (1 + static_cast<std::size_t>(w) * 3));
  const std::vector<std::uint8_t>& px = image.bytes();
  for (int y = 0; y < h; ++y) {
    raw.push_back(0);
    const std::uint8_t* row = px.data() + static_cast<std::size_t>(y) * w * 3;
    raw.insert(raw.end(), row, row + static_cast<std::size_t>(w) * 3);
  }

  uLongf bound = compressBound(static_cast<uLong>(raw.size()));
  std::vector<std::uint8_t> compressed(bound);
  if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()),
                Z_DEFAULT_COMPRESSION) != Z_OK) {
    throw std::runtime_error("zlib compression failed for " + path.string());
  }
  compressed.resize(bound);

  std::vector<std::uint8_t> file;
  const std::uint8_t signature[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  file.insert(file.end(), signature, signature + 8);

  std::vector<std::uint8_t> ihdr;
  put_be32(ihdr, static_cast<std::uint32_t>(w));
  put_be32(ihdr, static_cast<std::uint32_t>(h));
  ihdr.push_back(8);  // bit depth
  ihdr.push_back(2);  // color type: truecolor RGB
  ihdr.push_back(0);  // compression
  ihdr.push_back(0);  // filter
  ihdr.push_back(0);  // interlace
  append_chunk(file, "IHDR", ihdr);
  append_chunk(file, "IDAT", compressed);
  append_chunk(file, "IEND", {});

  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open image file for writing: " + path.string());
  os.write(reinterpret_cast<const char*>(file.data()), static_cast<std::streamsize>(file.size()));
  if (!os) throw std::runtime_error("short write on image file: " + path.string());
}

namespace {

void draw_line(Image& image, Point2 a, Point2 b, Rgb color) {
  int x0 = static_cast<int>(std::llround(a.x));
  int y0 = static_cast<int>(std::llround(a.y));
  const int x1 = static_cast<int>(std::llround(b.x));
  const int y1 = static_cast<int>(std::llround(b.y));

  const int dx = std::abs(x1 - x0);
  const int dy = -std::abs(y1 - y0);
  const int sx = x0 < x1 ? 1 : -1;
  const int sy = y0 < y1 ? 1 : -1;
  int err = dx + dy;
  while (true) {
    image.set(x0, y0, color);
    if (x0 == x1 && y0 == y1) break;
    const int e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

struct PartSpec {
  int first;
  int last;
  bool closed;
};

constexpr PartSpec kParts[] = {
    {0, 16, false},   // chin
    {17, 21, false},  // right brow
    {22, 26, false},  // left brow
    {27, 35, false},  // nose
    {36, 41, true},   // right eye
    {42, 47, true},   // left eye
    {48, 59, true},   // outer lips
    {60, 67, true},   // inner lips
};

}  // namespace

Image rasterize_frame(const KeypointFrame& frame, int width, int height,
                      const Palette& palette) {
  frame.validate();
  Image image(width, height);
  const Rgb colors[] = {palette.chin,      palette.right_brow, palette.left_brow,
                        palette.nose,      palette.right_eye,  palette.left_eye,
                        palette.outer_lips, palette.inner_lips};
  for (std::size_t part = 0; part < std::size(kParts); ++part) {
    const PartSpec& spec = kParts[part];
    for (int i = spec.first; i < spec.last; ++i) {
      draw_line(image, frame.points[i], frame.points[i + 1], colors[part]);
    }
    if (spec.closed) {
      draw_line(image, frame.points[spec.last], frame.points[spec.first], colors[part]);
    }
  }
  return image;
}

std::vector<std::filesystem::path> render_sequence(const KeypointSequence& seq,
                                                   const std::filesystem::path& out_dir,
                                                   int width, int height,
                                                   const Palette& palette, double fps) {
  seq.validate();
  (void)fps;  // frame pacing metadata; filenames are index-based
  std::filesystem::create_directories(out_dir);
  std::vector<std::filesystem::path> paths;
  paths.reserve(seq.frames.size());
  for (std::size_t t = 0; t < seq.frames.size(); ++t) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.png", t);
    const std::filesystem::path path = out_dir / name;
    try {
      write_png(path, rasterize_frame(seq.frames[t], width, height, palette));
    } catch (const std::exception& e) {
      throw std::runtime_error("render failed at frame " + std::to_string(t) + ": " + e.what());
    }
    paths.push_back(path);
  }
  return paths;
}

}  // namespace a2k
