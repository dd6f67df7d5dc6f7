#pragma once

#include <string>
#include <vector>

#include "physloop/common.hpp"

namespace physloop {

// Capsule between two keypoints; the human's collision proxy.
struct Bone {
  int a = 0;
  int b = 0;
  double radius = 0.03;
  bool operator==(const Bone&) const = default;
};

struct Skeleton {
  std::vector<std::string> names;
  std::vector<std::string> part_of;  // one part per keypoint
  std::vector<Bone> bones;

  std::size_t size() const { return names.size(); }
  int index(const std::string& name) const;  // throws InvalidArgument
  std::vector<int> part_members(const std::string& part) const;
  std::vector<std::string> parts() const;  // sorted, unique
  // Throws InvalidArgument on size mismatch, bad bone indices or radii <= 0.
  void validate() const;
  bool operator==(const Skeleton&) const = default;
};

// 16-keypoint stick skeleton partitioned into pelvis, legs, feet, torso,
// head, arms and hands.
Skeleton standard_skeleton();

using Keypoints = std::vector<Vec3>;

// Keypoints per frame plus the skeleton describing them.
struct BodyModel {
  Skeleton skeleton;
  std::vector<Keypoints> frames;

  std::size_t frame_count() const { return frames.size(); }
  // Throws DimensionMismatch when a frame has the wrong keypoint count.
  void validate() const;
};

struct MotionSequence {
  BodyModel body;
  double rate_hz = 30.0;
  // Contact keypoint indices per frame (may be empty for a frame).
  std::vector<std::vector<int>> contact_keypoints;
  int root = 0;

  std::size_t frame_count() const { return body.frames.size(); }
  double duration() const {
    return frame_count() > 1 ? static_cast<double>(frame_count() - 1) / rate_hz : 0.0;
  }
  std::vector<Vec3> root_trajectory() const;
  // Keypoints linearly interpolated at time t (clamped to the sequence).
  Keypoints at_time(double t) const;
  // Per-keypoint velocity of the piecewise-linear interpolation at time t;
  // zero past the last frame.
  Keypoints velocity_at(double t) const;
  void validate() const;
};

}  // namespace physloop
