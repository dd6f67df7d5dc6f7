#include "physloop/body.hpp"

#include <algorithm>
#include <set>

namespace physloop {

int Skeleton::index(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw InvalidArgument("unknown keypoint '" + name + "'");
  return static_cast<int>(it - names.begin());
}

std::vector<int> Skeleton::part_members(const std::string& part) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < part_of.size(); ++i) {
    if (part_of[i] == part) out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<std::string> Skeleton::parts() const {
  std::set<std::string> unique(part_of.begin(), part_of.end());
  return {unique.begin(), unique.end()};
}

void Skeleton::validate() const {
  if (part_of.size() != names.size()) {
    throw InvalidArgument("skeleton: every keypoint needs exactly one part");
  }
  const int n = static_cast<int>(names.size());
  for (const Bone& bone : bones) {
    if (bone.a < 0 || bone.a >= n || bone.b < 0 || bone.b >= n || bone.a == bone.b) {
      throw InvalidArgument("skeleton: bone references invalid keypoints");
    }
    if (!(bone.radius > 0.0)) throw InvalidArgument("skeleton: capsule radius must be positive");
  }
}

Skeleton standard_skeleton() {
  Skeleton s;
  s.names = {"pelvis", "l_hip",  "r_hip",      "l_knee",     "r_knee",  "l_ankle",
             "r_ankle", "spine", "neck",       "head",       "l_shoulder", "r_shoulder",
             "l_elbow", "r_elbow", "l_wrist",  "r_wrist"};
  s.part_of = {"pelvis", "pelvis", "pelvis", "legs",  "legs",  "feet",  "feet",  "torso",
               "torso",  "head",   "torso",  "torso", "arms",  "arms",  "hands", "hands"};
  auto bone = [&](const char* a, const char* b, double r) {
    s.bones.push_back({s.index(a), s.index(b), r});
  };
  bone("pelvis", "l_hip", 0.015);
  bone("pelvis", "r_hip", 0.015);
  bone("l_hip", "l_knee", 0.015);
  bone("r_hip", "r_knee", 0.015);
  bone("l_knee", "l_ankle", 0.02);
  bone("r_knee", "r_ankle", 0.02);
  bone("pelvis", "spine", 0.04);
  bone("spine", "neck", 0.04);
  bone("neck", "head", 0.05);
  bone("neck", "l_shoulder", 0.03);
  bone("neck", "r_shoulder", 0.03);
  bone("l_shoulder", "l_elbow", 0.02);
  bone("r_shoulder", "r_elbow", 0.02);
  bone("l_elbow", "l_wrist", 0.02);
  bone("r_elbow", "r_wrist", 0.02);
  return s;
}

void BodyModel::validate() const {
  skeleton.validate();
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].size() != skeleton.size()) {
      throw DimensionMismatch("frame " + std::to_string(f) + " has " +
                              std::to_string(frames[f].size()) + " keypoints, skeleton has " +
                              std::to_string(skeleton.size()));
    }
  }
}

std::vector<Vec3> MotionSequence::root_trajectory() const {
  std::vector<Vec3> out;
  out.reserve(frame_count());
  for (const Keypoints& k : body.frames) out.push_back(k[root]);
  return out;
}

Keypoints MotionSequence::at_time(double t) const {
  if (body.frames.empty()) return {};
  const double pos = std::clamp(t * rate_hz, 0.0, static_cast<double>(frame_count() - 1));
  const auto lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= frame_count()) return body.frames.back();
  const double a = pos - static_cast<double>(lo);
  Keypoints out(body.frames[lo].size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 - a) * body.frames[lo][i] + a * body.frames[lo + 1][i];
  }
  return out;
}

Keypoints MotionSequence::velocity_at(double t) const {
  const std::size_t k = body.frames.empty() ? 0 : body.frames.front().size();
  Keypoints out(k, Vec3::Zero());
  if (frame_count() < 2 || t < 0.0) return out;
  const double pos = t * rate_hz;
  if (pos >= static_cast<double>(frame_count() - 1)) return out;
  const auto lo = static_cast<std::size_t>(pos);
  for (std::size_t i = 0; i < k; ++i) out[i] = (body.frames[lo + 1][i] - body.frames[lo][i]) * rate_hz;
  return out;
}

void MotionSequence::validate() const {
  body.validate();
  if (!(rate_hz > 0.0)) throw InvalidArgument("motion rate must be positive");
  if (!contact_keypoints.empty() && contact_keypoints.size() != frame_count()) {
    throw DimensionMismatch("contact keypoint lists must match the frame count");
  }
  const int n = static_cast<int>(body.skeleton.size());
  for (const auto& list : contact_keypoints) {
    for (int idx : list) {
      if (idx < 0 || idx >= n) throw InvalidArgument("contact keypoint index out of range");
    }
  }
  if (root < 0 || root >= n) throw InvalidArgument("root keypoint index out of range");
}

}  // namespace physloop
