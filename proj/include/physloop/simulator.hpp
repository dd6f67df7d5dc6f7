#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "physloop/body.hpp"
#include "physloop/geometry.hpp"

namespace physloop::sim {

class BlowUp : public Error {
 public:
  BlowUp(int body, const std::string& what) : Error("BlowUp", what), body_(body) {}
  int body() const { return body_; }

 private:
  int body_;
};

// Convex collision piece in the body's mesh frame, stored as a closed hull
// plus its outward face planes (normal . x <= offset inside).
struct ConvexPiece {
  geometry::Mesh hull;
  std::vector<Vec3> normals;
  std::vector<double> offsets;
  Vec3 center = Vec3::Zero();
  double radius = 0.0;  // bounding sphere about `center`

  explicit ConvexPiece(geometry::Mesh hull_mesh);
  // Signed distance from the hull; exact outside, max face-plane distance
  // inside. `normal` receives the outward direction at the nearest feature.
  double distance(const Vec3& p, Vec3* normal) const;
};

struct CollisionShape {
  std::vector<ConvexPiece> pieces;
};

enum class CollisionProxy { kHull, kComponents };

// Convex hull of the whole mesh, or the hull of each connected component.
CollisionShape make_shape(const geometry::Mesh& mesh, CollisionProxy proxy);
CollisionShape make_shape(const std::vector<geometry::Mesh>& pieces);

struct Body {
  std::string name;
  int mesh_id = 0;
  std::shared_ptr<const geometry::Mesh> mesh;
  std::shared_ptr<const CollisionShape> shape;
  RigidTransform pose;  // mesh frame -> world
  Vec3 linear_velocity = Vec3::Zero();   // of the center of mass
  Vec3 angular_velocity = Vec3::Zero();  // world frame
  double mass = 1.0;
  Vec3 com_local = Vec3::Zero();
  Mat3 inertia_local = Mat3::Identity();  // about the COM, mesh-frame axes
  double friction = 0.6;
  double restitution = 0.0;

  Vec3 com() const { return pose.apply(com_local); }
  Mat3 inverse_inertia_world() const;
};

// Builds a body with mass properties integrated from the mesh (or from its
// collision hulls when the mesh is not watertight). mass <= 0 means density
// 500 kg/m^3.
Body make_body(std::shared_ptr<const geometry::Mesh> mesh, const RigidTransform& pose,
               double mass = 0.0, CollisionProxy proxy = CollisionProxy::kComponents,
               std::shared_ptr<const CollisionShape> shape = nullptr);

// Kinematically driven capsule chain. Exerts impulses on objects but never
// receives them.
struct KinematicHuman {
  MotionSequence motion;
  double start_time = 0.0;
  double max_force = 1500.0;  // per contact, newtons

  double end_time() const { return start_time + motion.duration(); }
};

struct WarmStart {
  double normal = 0.0;
  double tangent1 = 0.0;
  double tangent2 = 0.0;
};

struct WorldState {
  std::vector<Body> bodies;
  std::optional<KinematicHuman> human;
  Vec3 gravity{0.0, 0.0, -9.81};
  double time = 0.0;
  // Accumulated impulses of the previous step, keyed by contact feature.
  std::map<std::tuple<int, int, int, int, int>, WarmStart> warm_start;
  // Whether any human capsule was within the contact threshold of an
  // object during the last step.
  bool human_contact = false;
  // Contact count of the last step (diagnostics).
  int contact_count = 0;

  double kinetic_energy() const;
  double potential_energy() const;
  void validate() const;  // throws InvalidArgument
};

struct StepParams {
  int iterations = 8;
  double contact_threshold = 0.02;  // human-object contact trace distance
  bool warm_start = true;
};

// Semi-implicit step: gravity, speculative contacts solved by projected
// Gauss-Seidel impulses with Coulomb friction, then position integration.
// Requires dt in (0, 1/60]. Throws BlowUp when a speed exceeds 1e3.
WorldState step(const WorldState& world, double dt, const StepParams& params = {});

struct SettleParams {
  double dt = 1.0 / 240.0;
  double max_time = 10.0;
  double rest_speed = 0.01;  // m/s
  double rest_spin = 0.05;   // rad/s
  double dwell = 0.5;        // s
  // Rest is never declared before this time, so near-balanced bodies get a
  // chance to start moving.
  double min_time = 2.0;     // s
  StepParams step;
};

struct Displacement {
  double translation = 0.0;  // m
  double rotation = 0.0;     // rad
};

struct SettleOutcome {
  bool stabilized = false;
  double settle_time = 0.0;
  std::vector<RigidTransform> final_poses;
  std::vector<Displacement> displacement;
  std::vector<bool> contact_trace;  // per step
  std::size_t dwell_steps = 0;      // steps in the final dwell window
  WorldState final_world;
};

using StepObserver = std::function<void(const WorldState&)>;

// Integrates until every body stays below the rest thresholds for the dwell
// window (after the human motion has ended), or max_time elapses.
SettleOutcome settle(const WorldState& world, const SettleParams& params = {},
                     const StepObserver& observer = {});

// The object alone on the ground settles with displacement below
// (2 cm, 0.1 rad). Throws NonWatertightSource.
bool gravity_stability(const geometry::Mesh& object, const RigidTransform& pose,
                       const SettleParams& params = {}, double friction = 0.6);
bool gravity_stability(const Body& body, const SettleParams& params = {});

inline constexpr double kGravityStableTranslation = 0.02;
inline constexpr double kGravityStableRotation = 0.1;

enum class OutcomeType { kType1 = 1, kType2 = 2, kType3 = 3, kType4 = 4 };

std::string to_string(OutcomeType type);

OutcomeType classify_outcome(const WorldState& initial, const SettleOutcome& outcome,
                             const SettleParams& params = {});

// 1 iff the settled scenario classifies as Type4. A BlowUp during settling
// yields 0.
int stability_label(const WorldState& scenario, const SettleParams& params = {});

}  // namespace physloop::sim
