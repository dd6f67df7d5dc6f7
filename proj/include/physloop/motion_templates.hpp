#pragma once

#include <vector>

#include "physloop/body.hpp"

namespace physloop::templates {

// Gap between a contact keypoint and the surface it rests on, equal to the
// radius of the capsules meeting at that keypoint.
inline constexpr double kHipClearance = 0.015;
inline constexpr double kHandClearance = 0.02;
inline constexpr double kFootClearance = 0.02;

// Each pose is laid out around an anchor on the object it interacts with
// and then turned by `yaw` about the vertical through that anchor.

// Upright stance with feet at `feet` (z ignored, ankles at 0.08 m).
Keypoints standing_pose(const Vec3& feet, double yaw);

// Seated on a seat whose top center is `seat_top`; the chair front faces -y
// in the chair frame (before yaw). Hips rest `lift` above the seat surface.
Keypoints seated_pose(const Vec3& seat_top, double yaw, double seat_depth, double lift);

// Standing at a table edge with both wrists on the top surface.
// `edge` is the near edge midpoint on the top surface.
Keypoints leaning_pose(const Vec3& edge, double yaw, double lift);

// One foot on a low platform whose top center is `top`.
Keypoints stepping_pose(const Vec3& top, double yaw, double lift);

struct Keyframe {
  double time = 0.0;
  Keypoints pose;
  std::vector<int> contacts;  // contact keypoints while holding this pose
};

// Smoothstep blend between consecutive keyframes, sampled at `rate_hz`.
// Frames carry the contact set of the keyframe they approach once the blend
// passes `contact_from` (0..1).
MotionSequence keyframe_motion(const std::vector<Keyframe>& keys, double rate_hz = 30.0,
                               double contact_from = 0.6);

std::vector<int> hip_contacts();    // pelvis, l_hip, r_hip
std::vector<int> hand_contacts();   // l_wrist, r_wrist
std::vector<int> foot_contacts();   // r_ankle

// Stand in front of the seat, sit down over 0.5..1.3 s, stay until 2 s.
MotionSequence sit_motion(const Vec3& seat_top, double yaw, double seat_depth, double lift = kHipClearance);
// Walk up to a table edge and put both hands on it.
MotionSequence lean_motion(const Vec3& edge, double yaw, double lift = kHandClearance);
// Step up with the right foot onto a platform.
MotionSequence step_motion(const Vec3& top, double yaw, double lift = kFootClearance);

}  // namespace physloop::templates
