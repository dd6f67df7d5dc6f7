#include "physloop/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace physloop::sim {

namespace {

constexpr double kDefaultDensity = 500.0;
constexpr double kMaxSpeed = 1e3;
constexpr double kSlop = 0.005;            // body-body and human contact creation distance
constexpr double kGroundMargin = 0.01;     // speculative ground contact distance
constexpr double kBounceThreshold = 0.5;   // m/s approach speed before restitution applies

enum ContactKind : int { kGround = 0, kPair = 1, kHuman = 2 };
constexpr int kGroundBody = -1;
constexpr int kHumanBody = -2;

struct Contact {
  std::tuple<int, int, int, int, int> key;
  int a = 0;           // dynamic body, pushed along +normal
  int b = kGroundBody;  // dynamic body, ground or human
  Vec3 point = Vec3::Zero();
  Vec3 normal = Vec3::UnitZ();
  Vec3 t1 = Vec3::UnitX();
  Vec3 t2 = Vec3::UnitY();
  double gap = 0.0;
  double friction = 0.6;
  double restitution = 0.0;
  Vec3 kinematic_velocity = Vec3::Zero();
  double max_impulse = std::numeric_limits<double>::infinity();
  Vec3 ra = Vec3::Zero();
  Vec3 rb = Vec3::Zero();
  double mass_n = 0.0;
  double mass_t1 = 0.0;
  double mass_t2 = 0.0;
  double bias = 0.0;
  double ln = 0.0;
  double lt1 = 0.0;
  double lt2 = 0.0;
};

struct BodyState {
  Vec3 com;
  Mat3 inv_inertia;
  double inv_mass;
};

void tangent_basis(const Vec3& n, Vec3* t1, Vec3* t2) {
  const Vec3 helper = std::abs(n.x()) < 0.9 ? Vec3::UnitX() : Vec3::UnitY();
  *t1 = n.cross(helper).normalized();
  *t2 = n.cross(*t1);
}

double point_segment_distance(const Vec3& p, const Vec3& a, const Vec3& b) {
  const Vec3 ab = b - a;
  const double len2 = ab.squaredNorm();
  const double s = len2 > 0 ? std::clamp((p - a).dot(ab) / len2, 0.0, 1.0) : 0.0;
  return (a + s * ab - p).norm();
}

}  // namespace

ConvexPiece::ConvexPiece(geometry::Mesh hull_mesh) : hull(std::move(hull_mesh)) {
  for (std::size_t f = 0; f < hull.faces.size(); ++f) {
    const Vec3 n = geometry::face_normal(hull, f);
    normals.push_back(n);
    offsets.push_back(n.dot(hull.vertices[hull.faces[f][0]]));
  }
  center = Vec3::Zero();
  for (const Vec3& v : hull.vertices) center += v;
  if (!hull.vertices.empty()) center /= static_cast<double>(hull.vertices.size());
  for (const Vec3& v : hull.vertices) radius = std::max(radius, (v - center).norm());
}

double ConvexPiece::distance(const Vec3& p, Vec3* normal) const {
  double best = -std::numeric_limits<double>::infinity();
  std::size_t best_face = 0;
  for (std::size_t f = 0; f < normals.size(); ++f) {
    const double d = normals[f].dot(p) - offsets[f];
    if (d > best) best = d, best_face = f;
  }
  if (best <= 0.0) {
    if (normal != nullptr) *normal = normals[best_face];
    return best;
  }
  double closest = std::numeric_limits<double>::infinity();
  Vec3 closest_point = p;
  for (const geometry::Face& f : hull.faces) {
    const Vec3 q = geometry::closest_point_on_triangle(p, hull.vertices[f[0]], hull.vertices[f[1]],
                                                       hull.vertices[f[2]]);
    const double d = (q - p).squaredNorm();
    if (d < closest) closest = d, closest_point = q;
  }
  const double dist = std::sqrt(closest);
  if (normal != nullptr) *normal = dist > 1e-12 ? Vec3((p - closest_point) / dist) : normals[best_face];
  return dist;
}

CollisionShape make_shape(const geometry::Mesh& mesh, CollisionProxy proxy) {
  CollisionShape shape;
  if (proxy == CollisionProxy::kHull) {
    shape.pieces.emplace_back(geometry::convex_hull(mesh.vertices, mesh.name + "/hull"));
    return shape;
  }
  for (const geometry::Mesh& comp : geometry::connected_components(mesh)) {
    shape.pieces.emplace_back(geometry::convex_hull(comp.vertices, comp.name + "/hull"));
  }
  return shape;
}

CollisionShape make_shape(const std::vector<geometry::Mesh>& pieces) {
  CollisionShape shape;
  for (const geometry::Mesh& piece : pieces) {
    shape.pieces.emplace_back(geometry::convex_hull(piece.vertices, piece.name + "/hull"));
  }
  return shape;
}

Mat3 Body::inverse_inertia_world() const {
  const Mat3& r = pose.rotation;
  return r * inertia_local.inverse() * r.transpose();
}

Body make_body(std::shared_ptr<const geometry::Mesh> mesh, const RigidTransform& pose, double mass,
               CollisionProxy proxy, std::shared_ptr<const CollisionShape> shape) {
  if (!mesh) throw InvalidArgument("make_body: null mesh");
  Body body;
  body.name = mesh->name;
  body.mesh = mesh;
  body.shape = shape ? std::move(shape) : std::make_shared<const CollisionShape>(make_shape(*mesh, proxy));
  body.pose = pose;
  geometry::MassProperties props;
  if (geometry::is_watertight(*mesh).watertight) {
    props = geometry::mass_properties(*mesh);
  } else {
    std::vector<geometry::Mesh> hulls;
    for (const ConvexPiece& p : body.shape->pieces) hulls.push_back(p.hull);
    props = geometry::mass_properties(geometry::merged(hulls, mesh->name));
  }
  body.mass = mass > 0.0 ? mass : kDefaultDensity * props.volume;
  body.com_local = props.center_of_mass;
  body.inertia_local = props.inertia * (body.mass / props.volume);
  return body;
}

double WorldState::kinetic_energy() const {
  double e = 0.0;
  for (const Body& b : bodies) {
    const Mat3 inertia = b.pose.rotation * b.inertia_local * b.pose.rotation.transpose();
    e += 0.5 * b.mass * b.linear_velocity.squaredNorm() +
         0.5 * b.angular_velocity.dot(inertia * b.angular_velocity);
  }
  return e;
}

double WorldState::potential_energy() const {
  double e = 0.0;
  for (const Body& b : bodies) e -= b.mass * gravity.dot(b.com());
  return e;
}

void WorldState::validate() const {
  for (const Body& b : bodies) {
    if (!(b.mass > 0.0)) throw InvalidArgument("body '" + b.name + "': mass must be positive");
    if (!(b.friction >= 0.0)) throw InvalidArgument("body '" + b.name + "': friction must be >= 0");
    if (!(b.restitution >= 0.0 && b.restitution <= 1.0)) {
      throw InvalidArgument("body '" + b.name + "': restitution must lie in [0, 1]");
    }
    const Mat3 err = b.pose.rotation.transpose() * b.pose.rotation - Mat3::Identity();
    if (err.cwiseAbs().maxCoeff() > 1e-8) {
      throw InvalidArgument("body '" + b.name + "': rotation is not orthonormal");
    }
    if (!b.shape || b.shape->pieces.empty()) {
      throw InvalidArgument("body '" + b.name + "': missing collision shape");
    }
  }
}

WorldState step(const WorldState& world, double dt, const StepParams& params) {
  if (!(dt > 0.0 && dt <= 1.0 / 60.0 + 1e-15)) {
    throw InvalidArgument("step: dt must lie in (0, 1/60]");
  }
  world.validate();
  WorldState next = world;
  const std::size_t n = next.bodies.size();
  std::vector<BodyState> state(n);
  for (std::size_t i = 0; i < n; ++i) {
    Body& b = next.bodies[i];
    b.linear_velocity += next.gravity * dt;
    state[i] = {b.com(), b.inverse_inertia_world(), 1.0 / b.mass};
  }

  auto point_velocity = [&](int body, const Vec3& p) -> Vec3 {
    const Body& b = next.bodies[body];
    return b.linear_velocity + b.angular_velocity.cross(p - state[body].com);
  };

  std::vector<Contact> contacts;

  // Ground plane z = 0.
  for (std::size_t i = 0; i < n; ++i) {
    const Body& b = next.bodies[i];
    for (std::size_t pi = 0; pi < b.shape->pieces.size(); ++pi) {
      const ConvexPiece& piece = b.shape->pieces[pi];
      const Vec3 center = b.pose.apply(piece.center);
      const double reach = kGroundMargin + piece.radius + (b.linear_velocity.norm() +
                           b.angular_velocity.norm() * piece.radius) * dt * 2.0;
      if (center.z() > reach) continue;
      for (std::size_t vi = 0; vi < piece.hull.vertices.size(); ++vi) {
        const Vec3 p = b.pose.apply(piece.hull.vertices[vi]);
        const double approach = std::max(0.0, -point_velocity(static_cast<int>(i), p).z());
        if (p.z() >= kGroundMargin + approach * dt * 2.0) continue;
        Contact c;
        c.key = {kGround, static_cast<int>(i), static_cast<int>(pi), static_cast<int>(vi), 0};
        c.a = static_cast<int>(i);
        c.b = kGroundBody;
        c.point = p;
        c.normal = Vec3::UnitZ();
        c.gap = p.z();
        c.friction = b.friction;
        c.restitution = b.restitution;
        contacts.push_back(c);
      }
    }
  }

  // Body-body: hull vertices of one body against the hull of the other.
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const Body& bi = next.bodies[i];
      const Body& bj = next.bodies[j];
      for (std::size_t pi = 0; pi < bi.shape->pieces.size(); ++pi) {
        const ConvexPiece& piece_i = bi.shape->pieces[pi];
        const Vec3 ci = bi.pose.apply(piece_i.center);
        for (std::size_t pj = 0; pj < bj.shape->pieces.size(); ++pj) {
          const ConvexPiece& piece_j = bj.shape->pieces[pj];
          const Vec3 cj = bj.pose.apply(piece_j.center);
          if ((ci - cj).norm() > piece_i.radius + piece_j.radius + kSlop) continue;
          for (std::size_t vi = 0; vi < piece_i.hull.vertices.size(); ++vi) {
            const Vec3 p = bi.pose.apply(piece_i.hull.vertices[vi]);
            Vec3 local_normal;
            const double d = piece_j.distance(bj.pose.apply_inverse(p), &local_normal);
            if (d >= kSlop) continue;
            Contact c;
            c.key = {kPair, static_cast<int>(i), static_cast<int>(pi), static_cast<int>(vi),
                     static_cast<int>(j * 4096 + pj)};
            c.a = static_cast<int>(i);
            c.b = static_cast<int>(j);
            c.point = p;
            c.normal = bj.pose.rotation * local_normal;
            c.gap = d;
            c.friction = std::sqrt(bi.friction * bj.friction);
            c.restitution = std::max(bi.restitution, bj.restitution);
            contacts.push_back(c);
          }
        }
      }
    }
  }

  // Kinematic human capsules against object hulls.
  next.human_contact = false;
  if (next.human) {
    const KinematicHuman& human = *next.human;
    const double t_end = next.time + dt - human.start_time;
    const Keypoints pose = human.motion.at_time(t_end);
    const Keypoints vel = human.motion.velocity_at(next.time - human.start_time);
    const auto& bones = human.motion.body.skeleton.bones;
    for (std::size_t bi = 0; bi < bones.size(); ++bi) {
      const Bone& bone = bones[bi];
      const Vec3& pa = pose[bone.a];
      const Vec3& pb = pose[bone.b];
      const double len = (pb - pa).norm();
      const int spheres = std::max(2, static_cast<int>(std::ceil(len / bone.radius)) + 1);
      for (std::size_t i = 0; i < n; ++i) {
        const Body& body = next.bodies[i];
        for (std::size_t pi = 0; pi < body.shape->pieces.size(); ++pi) {
          const ConvexPiece& piece = body.shape->pieces[pi];
          const Vec3 center = body.pose.apply(piece.center);
          if (point_segment_distance(center, pa, pb) >
              piece.radius + bone.radius + params.contact_threshold) {
            continue;
          }
          for (int s = 0; s < spheres; ++s) {
            const double u = static_cast<double>(s) / (spheres - 1);
            const Vec3 c = (1.0 - u) * pa + u * pb;
            Vec3 local_normal;
            const double to_hull = piece.distance(body.pose.apply_inverse(c), &local_normal);
            const double d = to_hull - bone.radius;
            if (d <= params.contact_threshold) next.human_contact = true;
            if (d >= kSlop) continue;
            const Vec3 outward = body.pose.rotation * local_normal;
            Contact ct;
            ct.key = {kHuman, static_cast<int>(i), static_cast<int>(pi), static_cast<int>(bi), s};
            ct.a = static_cast<int>(i);
            ct.b = kHumanBody;
            ct.point = c - outward * to_hull;
            ct.normal = -outward;
            ct.gap = d;
            ct.friction = body.friction;
            ct.kinematic_velocity = (1.0 - u) * vel[bone.a] + u * vel[bone.b];
            ct.max_impulse = human.max_force * dt;
            contacts.push_back(ct);
          }
        }
      }
    }
  }

  // Effective masses, biases and warm starting.
  auto apply_impulse = [&](int body, const Vec3& r, const Vec3& impulse) {
    if (body < 0) return;
    Body& b = next.bodies[body];
    b.linear_velocity += impulse * state[body].inv_mass;
    b.angular_velocity += state[body].inv_inertia * r.cross(impulse);
  };
  auto relative_velocity = [&](const Contact& c) -> Vec3 {
    Vec3 v = point_velocity(c.a, c.point);
    if (c.b >= 0) v -= point_velocity(c.b, c.point);
    if (c.b == kHumanBody) v -= c.kinematic_velocity;
    return v;
  };
  auto effective_mass = [&](const Contact& c, const Vec3& dir) {
    Vec3 rn = c.ra.cross(dir);
    double k = state[c.a].inv_mass + rn.dot(state[c.a].inv_inertia * rn);
    if (c.b >= 0) {
      rn = c.rb.cross(dir);
      k += state[c.b].inv_mass + rn.dot(state[c.b].inv_inertia * rn);
    }
    return k > 0 ? 1.0 / k : 0.0;
  };

  for (Contact& c : contacts) {
    tangent_basis(c.normal, &c.t1, &c.t2);
    c.ra = c.point - state[c.a].com;
    if (c.b >= 0) c.rb = c.point - state[c.b].com;
    c.mass_n = effective_mass(c, c.normal);
    c.mass_t1 = effective_mass(c, c.t1);
    c.mass_t2 = effective_mass(c, c.t2);
    c.bias = -std::max(c.gap, 0.0) / dt;
    const double vn = relative_velocity(c).dot(c.normal);
    if (c.restitution > 0.0 && c.gap <= 0.0 && vn < -kBounceThreshold) {
      c.bias = std::max(c.bias, -c.restitution * vn);
    }
    if (params.warm_start) {
      auto it = world.warm_start.find(c.key);
      if (it != world.warm_start.end()) {
        c.ln = std::min(it->second.normal, c.max_impulse);
        c.lt1 = it->second.tangent1;
        c.lt2 = it->second.tangent2;
        const double cap = c.friction * c.ln;
        const double lt = std::hypot(c.lt1, c.lt2);
        if (lt > cap && lt > 0) c.lt1 *= cap / lt, c.lt2 *= cap / lt;
        const Vec3 impulse = c.normal * c.ln + c.t1 * c.lt1 + c.t2 * c.lt2;
        apply_impulse(c.a, c.ra, impulse);
        apply_impulse(c.b, c.rb, -impulse);
      }
    }
  }

  for (int iter = 0; iter < params.iterations; ++iter) {
    for (Contact& c : contacts) {
      const double vn = relative_velocity(c).dot(c.normal);
      const double ln_new = std::clamp(c.ln - c.mass_n * (vn - c.bias), 0.0, c.max_impulse);
      const double dn = ln_new - c.ln;
      c.ln = ln_new;
      if (dn != 0.0) {
        apply_impulse(c.a, c.ra, c.normal * dn);
        apply_impulse(c.b, c.rb, -c.normal * dn);
      }
      const Vec3 v = relative_velocity(c);
      double lt1 = c.lt1 - c.mass_t1 * v.dot(c.t1);
      double lt2 = c.lt2 - c.mass_t2 * v.dot(c.t2);
      const double cap = c.friction * c.ln;
      const double lt = std::hypot(lt1, lt2);
      if (lt > cap) {
        const double scale = lt > 0 ? cap / lt : 0.0;
        lt1 *= scale;
        lt2 *= scale;
      }
      const Vec3 dt_impulse = c.t1 * (lt1 - c.lt1) + c.t2 * (lt2 - c.lt2);
      c.lt1 = lt1;
      c.lt2 = lt2;
      apply_impulse(c.a, c.ra, dt_impulse);
      apply_impulse(c.b, c.rb, -dt_impulse);
    }
  }

  next.warm_start.clear();
  for (const Contact& c : contacts) {
    if (c.ln > 0.0) next.warm_start[c.key] = {c.ln, c.lt1, c.lt2};
  }
  next.contact_count = static_cast<int>(contacts.size());

  std::vector<char> in_contact(n, 0);
  for (const Contact& c : contacts) {
    in_contact[c.a] = 1;
    if (c.b >= 0) in_contact[c.b] = 1;
  }

  for (std::size_t i = 0; i < n; ++i) {
    Body& b = next.bodies[i];
    const double v = b.linear_velocity.norm();
    const double w = b.angular_velocity.norm();
    if (!std::isfinite(v) || !std::isfinite(w) || v > kMaxSpeed || w > kMaxSpeed) {
      throw BlowUp(static_cast<int>(i), "body " + std::to_string(i) + " ('" + b.name +
                                            "') exceeded the speed limit at t=" +
                                            std::to_string(next.time));
    }
    // Contact-free bodies follow the exact ballistic arc; the rest use the
    // semi-implicit update the contact solve assumed.
    Vec3 com = state[i].com + b.linear_velocity * dt;
    if (!in_contact[i]) com -= 0.5 * next.gravity * dt * dt;
    b.pose.rotation = orthonormalize(so3_exp(b.angular_velocity * dt) * b.pose.rotation);
    b.pose.translation = com - b.pose.rotation * b.com_local;
  }

  // Passive contacts may only dissipate. The discrete update can gain a tiny
  // amount while a body rocks on its support, so take it back: first from the
  // kinetic energy of bodies in contact, then from the rise of those bodies.
  bool driven = false;
  for (const Contact& c : contacts) driven = driven || (c.b == kHumanBody && c.ln > 0.0);
  if (!driven) {
    const double excess = next.kinetic_energy() + next.potential_energy() -
                          world.kinetic_energy() - world.potential_energy();
    if (excess > 0.0) {
      double kinetic = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!in_contact[i]) continue;
        const Body& b = next.bodies[i];
        const Mat3 inertia = b.pose.rotation * b.inertia_local * b.pose.rotation.transpose();
        kinetic += 0.5 * b.mass * b.linear_velocity.squaredNorm() +
                   0.5 * b.angular_velocity.dot(inertia * b.angular_velocity);
      }
      const double scale = kinetic > excess ? std::sqrt((kinetic - excess) / kinetic) : 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (!in_contact[i]) continue;
        next.bodies[i].linear_velocity *= scale;
        next.bodies[i].angular_velocity *= scale;
      }
      const double remaining = excess - (kinetic - scale * scale * kinetic);
      double rise = 0.0;
      std::vector<double> lift(n, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        if (!in_contact[i]) continue;
        lift[i] = std::max(0.0, -next.bodies[i].mass * next.gravity.dot(next.bodies[i].com() - state[i].com));
        rise += lift[i];
      }
      if (remaining > 0.0 && rise > 0.0) {
        const double back = std::min(1.0, remaining / rise);
        for (std::size_t i = 0; i < n; ++i) {
          Body& b = next.bodies[i];
          if (lift[i] <= 0.0) continue;
          const Vec3 com = b.com();
          b.pose.translation += back * (state[i].com - com).dot(next.gravity.normalized()) *
                                next.gravity.normalized();
        }
      }
    }
  }
  next.time += dt;
  return next;
}

SettleOutcome settle(const WorldState& world, const SettleParams& params,
                     const StepObserver& observer) {
  if (params.max_time < params.dwell) throw InvalidArgument("settle: max_time must be >= dwell");
  if (!(params.dt > 0.0)) throw InvalidArgument("settle: dt must be positive");
  world.validate();
  SettleOutcome out;
  WorldState current = world;
  const double motion_end = current.human ? current.human->end_time() : 0.0;
  const auto dwell_steps = static_cast<std::size_t>(std::llround(params.dwell / params.dt));
  out.dwell_steps = dwell_steps;
  std::size_t rest_steps = 0;
  const double eps = 1e-9 * params.dt;
  while (current.time < params.max_time - eps) {
    current = step(current, params.dt, params.step);
    out.contact_trace.push_back(current.human_contact);
    if (observer) observer(current);
    bool at_rest = current.time >= motion_end - eps && current.time >= params.min_time - eps;
    for (const Body& b : current.bodies) {
      if (b.linear_velocity.norm() >= params.rest_speed ||
          b.angular_velocity.norm() >= params.rest_spin) {
        at_rest = false;
        break;
      }
    }
    rest_steps = at_rest ? rest_steps + 1 : 0;
    if (rest_steps >= dwell_steps) {
      out.stabilized = true;
      break;
    }
  }
  out.settle_time = current.time;
  for (std::size_t i = 0; i < current.bodies.size(); ++i) {
    const Body& now = current.bodies[i];
    const Body& before = world.bodies[i];
    out.final_poses.push_back(now.pose);
    out.displacement.push_back(
        {(now.com() - before.com()).norm(),
         rotation_angle(now.pose.rotation * before.pose.rotation.transpose())});
  }
  out.final_world = std::move(current);
  return out;
}

bool gravity_stability(const Body& body, const SettleParams& params) {
  WorldState alone;
  Body b = body;
  b.linear_velocity.setZero();
  b.angular_velocity.setZero();
  alone.bodies.push_back(std::move(b));
  const SettleOutcome outcome = settle(alone, params);
  return outcome.stabilized && outcome.displacement[0].translation < kGravityStableTranslation &&
         outcome.displacement[0].rotation < kGravityStableRotation;
}

bool gravity_stability(const geometry::Mesh& object, const RigidTransform& pose,
                       const SettleParams& params, double friction) {
  if (!geometry::is_watertight(object).watertight) {
    throw NonWatertightSource("mesh '" + object.name + "' is not watertight");
  }
  Body body = make_body(std::make_shared<const geometry::Mesh>(object), pose);
  body.friction = friction;
  return gravity_stability(body, params);
}

std::string to_string(OutcomeType type) {
  switch (type) {
    case OutcomeType::kType1: return "Type1";
    case OutcomeType::kType2: return "Type2";
    case OutcomeType::kType3: return "Type3";
    case OutcomeType::kType4: return "Type4";
  }
  return "Unknown";
}

OutcomeType classify_outcome(const WorldState& initial, const SettleOutcome& outcome,
                             const SettleParams& params) {
  for (const Body& body : initial.bodies) {
    if (!gravity_stability(body, params)) return OutcomeType::kType1;
  }
  if (!outcome.stabilized) return OutcomeType::kType2;
  const std::size_t window = std::min(outcome.dwell_steps, outcome.contact_trace.size());
  const bool contact = std::any_of(outcome.contact_trace.end() - static_cast<std::ptrdiff_t>(window),
                                   outcome.contact_trace.end(), [](bool c) { return c; });
  return contact ? OutcomeType::kType4 : OutcomeType::kType3;
}

int stability_label(const WorldState& scenario, const SettleParams& params) {
  if (!scenario.human || scenario.bodies.empty()) {
    throw InvalidArgument("stability_label needs a human and at least one object");
  }
  try {
    const SettleOutcome outcome = settle(scenario, params);
    return classify_outcome(scenario, outcome, params) == OutcomeType::kType4 ? 1 : 0;
  } catch (const BlowUp&) {
    return 0;
  }
}

}  // namespace physloop::sim
