#pragma once

#include <string>
#include <vector>

#include "physloop/body.hpp"
#include "physloop/geometry.hpp"

namespace physloop::scene {

inline constexpr double kContactThreshold = 0.02;  // m
inline constexpr double kPenetrationTolerance = 0.005;  // m, SP-3D

enum class ContactLabel { kContact, kNonContact };

struct ContactState {
  ContactLabel label = ContactLabel::kNonContact;
  std::string part;      // part of the closest keypoint
  int keypoint = -1;     // argmin keypoint
  double min_distance = 0.0;
};

// Keypoints and the object's SDF must share a frame. Ties at the threshold
// count as contact. Throws InvalidArgument for threshold <= 0 or an empty
// keypoint set.
ContactState detect_contact(const Skeleton& skeleton, const Keypoints& keypoints,
                            const geometry::Sdf& object, double threshold = kContactThreshold);

// Part whose keypoints have the smallest mean signed distance to the object.
std::string closest_part(const Skeleton& skeleton, const Keypoints& keypoints,
                         const geometry::Sdf& object);

// Mean distance from the part centroid to the object vertices plus the mean
// over object vertices of the distance to the nearest part keypoint.
// Throws EmptySelection.
double non_contact_loss(const std::vector<Vec3>& part, const std::vector<Vec3>& object_vertices);

// Mean penetration depth max(0, -sdf) over the part keypoints.
// Throws EmptySelection.
double contact_loss(const std::vector<Vec3>& part, const geometry::Sdf& object);

// Yaw about +z and a translation; objects stay upright.
struct ObjectPlacement {
  double yaw = 0.0;
  Vec3 translation = Vec3::Zero();

  RigidTransform transform() const { return RigidTransform::from_yaw(yaw, translation); }
};

struct PlacementState {
  std::vector<ObjectPlacement> objects;
  Vec3 human_offset = Vec3::Zero();  // added to every keypoint
};

struct PlacementOptions {
  double contact_threshold = kContactThreshold;
  int max_iters = 100;
  double initial_step = 0.05;  // m (or rad) along the normalized descent direction
  double min_step = 1e-5;
  double fd_step = 1e-3;
  double min_improvement = 1e-12;  // smaller decreases are treated as noise
  bool move_human = true;
  bool move_objects = true;
  // Objects keep their height so they cannot sink into the floor.
  bool lock_object_height = true;
};

struct PlacementResult {
  PlacementState state;
  std::vector<double> trace;  // total loss at the start and after each accepted step
  bool improved = false;
  int iterations = 0;
};

// Objects are given in their canonical frames; the placement maps them to
// the world. The total loss is the sum over objects of the per-frame mean
// of the active branch (contact or non-contact) on the closest part.
double placement_loss(const BodyModel& body, const std::vector<geometry::Sdf>& objects,
                      const PlacementState& state, double threshold = kContactThreshold);

PlacementResult align_placement(const BodyModel& body, const std::vector<geometry::Sdf>& objects,
                                const PlacementState& init, const PlacementOptions& opts = {});

// Percentage of (frame, keypoint) pairs deeper than `tolerance` inside any
// object. Objects are placed by `poses` (identity when empty).
double sp3d(const BodyModel& body, const std::vector<geometry::Sdf>& objects,
            const std::vector<RigidTransform>& poses = {}, double tolerance = kPenetrationTolerance,
            const Vec3& human_offset = Vec3::Zero());

}  // namespace physloop::scene
