#pragma once

#include "a2k/keypoints.hpp"

namespace a2k {

// Mean absolute coordinate error over all frames and points. Sequences must
// have the same length and live in the same coordinate space.
double average_l1(const KeypointSequence& a, const KeypointSequence& b);

// Percent of predicted keypoints whose Euclidean distance to ground truth is
// within tau = alpha * max(h, w), with the bounding box taken from the ground
// truth over the whole sequence. Distances exactly equal to tau count as
// correct. Returns a percentage in [0, 100].
double pck(const KeypointSequence& ground_truth, const KeypointSequence& predicted,
           double alpha = 0.02);

}  // namespace a2k
