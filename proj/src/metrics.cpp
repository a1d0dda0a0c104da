#include "a2k/metrics.hpp"

#include <cmath>

#include "a2k/errors.hpp"

namespace a2k {
namespace {

void check_comparable(const KeypointSequence& a, const KeypointSequence& b) {
  a.validate();
  b.validate();
  if (a.frames.size() != b.frames.size()) {
    throw ValidationError("sequence length mismatch: " + std::to_string(a.frames.size()) +
                          " vs " + std::to_string(b.frames.size()));
  }
  if (a.space() != b.space()) {
    throw ValidationError(std::string("coordinate space mismatch: ") +
                          coord_space_name(a.space()) + " vs " + coord_space_name(b.space()));
  }
}

}  // namespace

double average_l1(const KeypointSequence& a, const KeypointSequence& b) {
  check_comparable(a, b);
  double total = 0.0;
  for (std::size_t t = 0; t < a.frames.size(); ++t) {
    for (int i = 0; i < kNumKeypoints; ++i) {
      total += std::fabs(a.frames[t].points[i].x - b.frames[t].points[i].x);
      total += std::fabs(a.frames[t].points[i].y - b.frames[t].points[i].y);
    }
  }
  return total / (static_cast<double>(a.frames.size()) * kFrameDim);
}

double pck(const KeypointSequence& ground_truth, const KeypointSequence& predicted,
           double alpha) {
  check_comparable(ground_truth, predicted);
  if (!(alpha > 0.0)) throw ValidationError("pck alpha must be positive");
  const BoundingBox box = bounding_box(ground_truth);
  const double extent = std::max(box.h, box.w);
  if (extent <= 0.0) throw ValidationError("degenerate ground truth");
  const double tau = alpha * extent;

  std::size_t correct = 0;
  for (std::size_t t = 0; t < ground_truth.frames.size(); ++t) {
    for (int i = 0; i < kNumKeypoints; ++i) {
      const double dx = ground_truth.frames[t].points[i].x - predicted.frames[t].points[i].x;
      const double dy = ground_truth.frames[t].points[i].y - predicted.frames[t].points[i].y;
      if (std::sqrt(dx * dx + dy * dy) <= tau) ++correct;
    }
  }
  const double total = static_cast<double>(ground_truth.frames.size()) * kNumKeypoints;
  return 100.0 * static_cast<double>(correct) / total;
}

}  // namespace a2k
