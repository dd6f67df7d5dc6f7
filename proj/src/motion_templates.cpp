#include "physloop/motion_templates.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace physloop::templates {

namespace {

enum Kp {
  kPelvis, kLHip, kRHip, kLKnee, kRKnee, kLAnkle, kRAnkle, kSpine,
  kNeck, kHead, kLShoulder, kRShoulder, kLElbow, kRElbow, kLWrist, kRWrist, kCount
};

// Offsets are (x, y) relative to the anchor plus an absolute z.
Keypoints place(const std::array<Vec3, kCount>& local, const Vec3& anchor, double yaw) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  Keypoints out(kCount);
  for (int i = 0; i < kCount; ++i) {
    const Vec3& p = local[i];
    out[i] = {anchor.x() + c * p.x() - s * p.y(), anchor.y() + s * p.x() + c * p.y(), p.z()};
  }
  return out;
}

// Facing -y, left side at +x.
std::array<Vec3, kCount> stance(double y) {
  std::array<Vec3, kCount> k;
  k[kPelvis] = {0.0, y, 0.95};
  k[kLHip] = {0.1, y, 0.92};
  k[kRHip] = {-0.1, y, 0.92};
  k[kLKnee] = {0.1, y - 0.02, 0.5};
  k[kRKnee] = {-0.1, y - 0.02, 0.5};
  k[kLAnkle] = {0.1, y, 0.08};
  k[kRAnkle] = {-0.1, y, 0.08};
  k[kSpine] = {0.0, y, 1.2};
  k[kNeck] = {0.0, y, 1.45};
  k[kHead] = {0.0, y, 1.65};
  k[kLShoulder] = {0.18, y, 1.42};
  k[kRShoulder] = {-0.18, y, 1.42};
  k[kLElbow] = {0.21, y, 1.15};
  k[kRElbow] = {-0.21, y, 1.15};
  k[kLWrist] = {0.22, y - 0.03, 0.9};
  k[kRWrist] = {-0.22, y - 0.03, 0.9};
  return k;
}

double smoothstep(double x) {
  x = std::clamp(x, 0.0, 1.0);
  return x * x * (3.0 - 2.0 * x);
}

}  // namespace

Keypoints standing_pose(const Vec3& feet, double yaw) { return place(stance(0.0), feet, yaw); }

Keypoints seated_pose(const Vec3& seat_top, double yaw, double seat_depth, double lift) {
  const double h = seat_top.z() + lift;
  const double y = 0.5 * seat_depth - 0.14;
  const double front = -0.5 * seat_depth;
  std::array<Vec3, kCount> k;
  k[kPelvis] = {0.0, y, h};
  k[kLHip] = {0.1, y, h};
  k[kRHip] = {-0.1, y, h};
  k[kLKnee] = {0.1, front - 0.05, h};
  k[kRKnee] = {-0.1, front - 0.05, h};
  k[kLAnkle] = {0.1, front - 0.08, 0.08};
  k[kRAnkle] = {-0.1, front - 0.08, 0.08};
  k[kSpine] = {0.0, y, h + 0.3};
  k[kNeck] = {0.0, y, h + 0.55};
  k[kHead] = {0.0, y - 0.02, h + 0.75};
  k[kLShoulder] = {0.18, y, h + 0.52};
  k[kRShoulder] = {-0.18, y, h + 0.52};
  k[kLElbow] = {0.2, y - 0.1, h + 0.3};
  k[kRElbow] = {-0.2, y - 0.1, h + 0.3};
  k[kLWrist] = {0.15, y - 0.3, h + 0.12};
  k[kRWrist] = {-0.15, y - 0.3, h + 0.12};
  return place(k, seat_top, yaw);
}

Keypoints leaning_pose(const Vec3& edge, double yaw, double lift) {
  // Built facing -y with the table on the -y side, then turned half a
  // revolution so the table lies toward +y of the anchor frame.
  const double top = edge.z() + lift;
  std::array<Vec3, kCount> k = stance(0.3);
  k[kPelvis] = {0.0, 0.3, 0.95};
  k[kSpine] = {0.0, 0.24, 1.2};
  k[kNeck] = {0.0, 0.14, 1.4};
  k[kHead] = {0.0, 0.08, 1.56};
  k[kLShoulder] = {0.18, 0.15, 1.37};
  k[kRShoulder] = {-0.18, 0.15, 1.37};
  k[kLWrist] = {0.2, -0.08, top};
  k[kRWrist] = {-0.2, -0.08, top};
  k[kLElbow] = {0.2, 0.04, 0.5 * (1.37 + top)};
  k[kRElbow] = {-0.2, 0.04, 0.5 * (1.37 + top)};
  return place(k, edge, yaw + M_PI);
}

Keypoints stepping_pose(const Vec3& top, double yaw, double lift) {
  const double h = top.z() + lift;
  std::array<Vec3, kCount> k = stance(0.25);
  k[kRAnkle] = {0.0, 0.0, h};
  k[kRKnee] = {0.0, 0.08, h + 0.42};
  k[kRHip] = {-0.05, 0.22, 0.92 + 0.5 * top.z()};
  k[kLHip] = {0.15, 0.22, 0.92 + 0.5 * top.z()};
  k[kPelvis] = {0.05, 0.22, 0.95 + 0.5 * top.z()};
  k[kLKnee] = {0.15, 0.3, 0.5};
  k[kLAnkle] = {0.15, 0.35, 0.08};
  for (Kp upper : {kSpine, kNeck, kHead, kLShoulder, kRShoulder, kLElbow, kRElbow, kLWrist, kRWrist}) {
    k[upper].y() -= 0.03;
    k[upper].z() += 0.5 * top.z();
  }
  return place(k, top, yaw + M_PI);
}

MotionSequence keyframe_motion(const std::vector<Keyframe>& keys, double rate_hz,
                               double contact_from) {
  if (keys.empty()) throw InvalidArgument("keyframe_motion needs at least one keyframe");
  if (!(rate_hz > 0.0)) throw InvalidArgument("keyframe_motion needs a positive rate");
  for (std::size_t i = 1; i < keys.size(); ++i) {
    if (!(keys[i].time > keys[i - 1].time)) {
      throw InvalidArgument("keyframe times must be strictly increasing");
    }
  }
  MotionSequence m;
  m.body.skeleton = standard_skeleton();
  m.rate_hz = rate_hz;
  const auto frames = static_cast<std::size_t>(std::llround(keys.back().time * rate_hz)) + 1;
  std::size_t seg = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    const double t = static_cast<double>(f) / rate_hz;
    while (seg + 1 < keys.size() && t > keys[seg + 1].time) ++seg;
    if (seg + 1 >= keys.size() || t <= keys[0].time) {
      const Keyframe& k = t <= keys[0].time ? keys[0] : keys.back();
      m.body.frames.push_back(k.pose);
      m.contact_keypoints.push_back(k.contacts);
      continue;
    }
    const Keyframe& a = keys[seg];
    const Keyframe& b = keys[seg + 1];
    const double u = (t - a.time) / (b.time - a.time);
    const double s = smoothstep(u);
    Keypoints pose(a.pose.size());
    for (std::size_t i = 0; i < pose.size(); ++i) pose[i] = (1.0 - s) * a.pose[i] + s * b.pose[i];
    m.body.frames.push_back(std::move(pose));
    m.contact_keypoints.push_back(u >= contact_from ? b.contacts : a.contacts);
  }
  m.validate();
  return m;
}

std::vector<int> hip_contacts() { return {kPelvis, kLHip, kRHip}; }
std::vector<int> hand_contacts() { return {kLWrist, kRWrist}; }
std::vector<int> foot_contacts() { return {kRAnkle}; }

MotionSequence sit_motion(const Vec3& seat_top, double yaw, double seat_depth, double lift) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double back = -0.5 * seat_depth - 0.4;
  const Vec3 feet{seat_top.x() - s * back, seat_top.y() + c * back, 0.0};
  const Keypoints stand = standing_pose(feet, yaw);
  const Keypoints sit = seated_pose(seat_top, yaw, seat_depth, lift);
  return keyframe_motion({{0.0, stand, {}}, {0.5, stand, {}}, {1.3, sit, hip_contacts()},
                          {2.0, sit, hip_contacts()}});
}

MotionSequence lean_motion(const Vec3& edge, double yaw, double lift) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double back = -0.7;
  const Vec3 feet{edge.x() - s * back, edge.y() + c * back, 0.0};
  const Keypoints stand = standing_pose(feet, yaw + M_PI);
  const Keypoints lean = leaning_pose(edge, yaw, lift);
  return keyframe_motion({{0.0, stand, {}}, {0.4, stand, {}}, {1.2, lean, hand_contacts()},
                          {2.0, lean, hand_contacts()}});
}

MotionSequence step_motion(const Vec3& top, double yaw, double lift) {
  const double c = std::cos(yaw), s = std::sin(yaw);
  const double back = -0.6;
  const Vec3 feet{top.x() - s * back, top.y() + c * back, 0.0};
  const Keypoints stand = standing_pose(feet, yaw + M_PI);
  const Keypoints step = stepping_pose(top, yaw, lift);
  return keyframe_motion({{0.0, stand, {}}, {0.4, stand, {}}, {1.2, step, foot_contacts()},
                          {2.0, step, foot_contacts()}});
}

}  // namespace physloop::templates
