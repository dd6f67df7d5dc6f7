#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace physloop {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

// Base class for every error the toolkit throws. `kind()` names the error
// category so CLI front ends can map it to an exit code.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)) {}
  const std::string& kind() const { return kind_; }

 private:
  std::string kind_;
};

#define PHYSLOOP_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                         \
   public:                                                            \
    explicit Name(const std::string& what) : Error(#Name, what) {}    \
  };

PHYSLOOP_DEFINE_ERROR(NonWatertightSource)
PHYSLOOP_DEFINE_ERROR(EmptyMesh)
PHYSLOOP_DEFINE_ERROR(EmptySelection)
PHYSLOOP_DEFINE_ERROR(DimensionMismatch)
PHYSLOOP_DEFINE_ERROR(DisconnectedGraph)
PHYSLOOP_DEFINE_ERROR(DegenerateFrame)
PHYSLOOP_DEFINE_ERROR(ParseError)
PHYSLOOP_DEFINE_ERROR(SchemaVersionMismatch)
PHYSLOOP_DEFINE_ERROR(MissingAsset)
PHYSLOOP_DEFINE_ERROR(InvalidArgument)

#undef PHYSLOOP_DEFINE_ERROR

// Rigid transform mapping local coordinates into the parent frame:
// p_parent = rotation * p_local + translation.
struct RigidTransform {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  Vec3 apply_inverse(const Vec3& p) const { return rotation.transpose() * (p - translation); }

  RigidTransform inverse() const {
    return {rotation.transpose(), -(rotation.transpose() * translation)};
  }
  RigidTransform operator*(const RigidTransform& rhs) const {
    return {rotation * rhs.rotation, rotation * rhs.translation + translation};
  }

  static RigidTransform from_yaw(double yaw, const Vec3& translation) {
    return {Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix(), translation};
  }
};

// Rotation matrix for an axis-angle vector.
inline Mat3 so3_exp(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-300) return Mat3::Identity();
  return Eigen::AngleAxisd(angle, omega / angle).toRotationMatrix();
}

// Angle of a rotation matrix in [0, pi].
inline double rotation_angle(const Mat3& r) {
  const double c = std::clamp((r.trace() - 1.0) * 0.5, -1.0, 1.0);
  return std::acos(c);
}

// Nearest orthonormal matrix (polar decomposition via quaternion round trip).
inline Mat3 orthonormalize(const Mat3& r) {
  Eigen::Quaterniond q(r);
  q.normalize();
  return q.toRotationMatrix();
}

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Stable 64-bit mix used to derive child seeds (splitmix64 finalizer).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a + 0x9E3779B97F4A7C15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace physloop
