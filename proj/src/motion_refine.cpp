#include "physloop/motion_refine.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include <Eigen/Geometry>
#include <Eigen/SVD>

namespace physloop::refine {

double scene_targeted_loss(const std::vector<Vec3>& contact_keypoints,
                           const std::vector<Vec3>& surface_samples) {
  if (contact_keypoints.empty()) throw EmptySelection("scene_targeted_loss: no contact keypoints");
  if (surface_samples.empty()) throw EmptySelection("scene_targeted_loss: no surface samples");
  double sum = 0.0;
  for (const Vec3& k : contact_keypoints) {
    double row = 0.0;
    for (const Vec3& s : surface_samples) row += (s - k).squaredNorm();
    sum += row;
  }
  return sum / (static_cast<double>(contact_keypoints.size()) * surface_samples.size());
}

std::vector<Vec3> local_samples(const std::vector<Vec3>& samples, const Vec3& center, double radius,
                                std::size_t fallback) {
  std::vector<Vec3> out;
  const double r2 = radius * radius;
  for (const Vec3& s : samples) {
    if ((s - center).squaredNorm() <= r2) out.push_back(s);
  }
  if (!out.empty() || samples.empty()) return out;
  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  const std::size_t n = std::min(fallback, samples.size());
  std::partial_sort(order.begin(), order.begin() + n, order.end(), [&](std::size_t a, std::size_t b) {
    const double da = (samples[a] - center).squaredNorm(), db = (samples[b] - center).squaredNorm();
    return da < db || (da == db && a < b);
  });
  for (std::size_t i = 0; i < n; ++i) out.push_back(samples[order[i]]);
  return out;
}

double center_point_loss(const std::vector<Vec3>& contact_keypoints, const Vec3& object_center) {
  if (contact_keypoints.empty()) throw EmptySelection("center_point_loss: no contact keypoints");
  Vec3 c = Vec3::Zero();
  for (const Vec3& k : contact_keypoints) c += k;
  c /= static_cast<double>(contact_keypoints.size());
  return (c - object_center).squaredNorm();
}

double center_point_loss(const std::vector<Vec3>& contact_keypoints, const geometry::Mesh& object) {
  return center_point_loss(contact_keypoints, geometry::center_of_mass(object));
}

std::string to_string(SceneLossMode mode) {
  return mode == SceneLossMode::kSurface ? "surface" : "center";
}

SceneLossMode scene_loss_mode_from_string(const std::string& name) {
  if (name == "surface") return SceneLossMode::kSurface;
  if (name == "center") return SceneLossMode::kCenter;
  throw ParseError("unknown scene loss mode '" + name + "' (expected surface or center)");
}

void RefineParams::validate() const {
  if (population < 1) throw InvalidArgument("population must be >= 1");
  if (!(elite_fraction > 0.0 && elite_fraction <= 1.0)) {
    throw InvalidArgument("elite fraction must lie in (0, 1]");
  }
  if (iterations < 0) throw InvalidArgument("iterations must be >= 0");
  if (!(sigma_root > 0.0 && sigma_limb > 0.0 && sigma_floor > 0.0)) {
    throw InvalidArgument("sampling sigmas must be positive");
  }
  if (w_track < 0.0 || w_scene < 0.0 || w_pen < 0.0) throw InvalidArgument("loss weights must be >= 0");
  if (knot_spacing < 1) throw InvalidArgument("knot spacing must be >= 1");
  if (!(local_radius > 0.0)) throw InvalidArgument("local radius must be positive");
  if (surface_samples < 1) throw InvalidArgument("surface_samples must be >= 1");
  if (!(rollout_dt > 0.0 && rollout_dt <= 1.0 / 60.0)) {
    throw InvalidArgument("rollout dt must lie in (0, 1/60]");
  }
}

namespace {

struct Region {
  int object = 0;
  std::vector<Vec3> samples;  // object frame
};

struct Prepared {
  std::vector<geometry::Sdf> sdfs;
  std::vector<Vec3> centers;  // object frame
  std::vector<Region> regions;
};

Prepared prepare(const RefineScene& scene, const RefineParams& params, std::uint64_t seed) {
  Prepared p;
  const auto& bodies = scene.world.bodies;
  if (bodies.empty()) throw InvalidArgument("refine scene has no objects");
  for (const sim::Body& b : bodies) {
    p.sdfs.emplace_back(b.mesh);
    p.centers.push_back(b.com_local);
  }
  std::vector<ContactRegion> regions = scene.regions;
  if (regions.empty()) {
    for (std::size_t i = 0; i < bodies.size(); ++i) regions.push_back({static_cast<int>(i), -1});
  }
  for (std::size_t r = 0; r < regions.size(); ++r) {
    const ContactRegion& cr = regions[r];
    if (cr.object < 0 || cr.object >= static_cast<int>(bodies.size())) {
      throw InvalidArgument("contact region names object " + std::to_string(cr.object));
    }
    const geometry::Mesh& mesh = *bodies[cr.object].mesh;
    geometry::Mesh part = mesh;
    if (cr.component >= 0) {
      const auto comps = geometry::connected_components(mesh);
      if (cr.component >= static_cast<int>(comps.size())) {
        throw InvalidArgument("contact region names component " + std::to_string(cr.component) +
                              " of an object with " + std::to_string(comps.size()));
      }
      part = comps[cr.component];
    }
    Region reg;
    reg.object = cr.object;
    reg.samples = geometry::sample_surface(part, params.surface_samples, mix_seed(seed, r)).points;
    p.regions.push_back(std::move(reg));
  }
  return p;
}

// Object poses at every frame time of the motion, from a rollout with the
// human driving the scene (or the static poses).
std::vector<std::vector<RigidTransform>> object_poses(const MotionSequence& motion,
                                                      const RefineScene& scene,
                                                      const RefineParams& params) {
  const std::size_t frames = motion.frame_count();
  std::vector<RigidTransform> initial;
  for (const sim::Body& b : scene.world.bodies) initial.push_back(b.pose);
  std::vector<std::vector<RigidTransform>> out(frames, initial);
  if (!params.simulate) return out;
  sim::WorldState world = scene.world;
  world.time = 0.0;
  world.warm_start.clear();
  sim::KinematicHuman human;
  human.motion = motion;
  world.human = std::move(human);
  const double eps = 1e-9;
  for (std::size_t f = 1; f < frames; ++f) {
    const double target = static_cast<double>(f) / motion.rate_hz;
    while (world.time < target - eps) {
      world = sim::step(world, std::min(params.rollout_dt, target - world.time));
    }
    for (std::size_t i = 0; i < world.bodies.size(); ++i) out[f][i] = world.bodies[i].pose;
  }
  return out;
}

ScoreTerms score_with(const MotionSequence& candidate, const MotionSequence& input,
                      const RefineScene& scene, const RefineParams& params, const Prepared& prep) {
  const std::size_t frames = candidate.frame_count();
  const std::size_t kps = candidate.body.skeleton.size();
  const auto poses = object_poses(candidate, scene, params);

  ScoreTerms s;
  double dev = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t k = 0; k < kps; ++k) dev += (candidate.body.frames[f][k] - input.body.frames[f][k]).norm();
  }
  dev /= static_cast<double>(frames * kps);
  s.track = dev * dev;

  double pen = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    for (const Vec3& p : candidate.body.frames[f]) {
      double deepest = 0.0;
      for (std::size_t o = 0; o < prep.sdfs.size(); ++o) {
        const Vec3 local = poses[f][o].apply_inverse(p);
        if (prep.sdfs[o].box().exterior_distance(local) > 0.0) continue;
        deepest = std::max(deepest, -prep.sdfs[o].signed_distance(local));
      }
      pen += deepest;
    }
  }
  s.penetration = pen / static_cast<double>(frames * kps);

  double scene_sum = 0.0;
  int scene_frames = 0;
  for (std::size_t f = 0; f < frames; ++f) {
    const auto& ids = candidate.contact_keypoints[f];
    if (ids.empty()) continue;
    std::vector<Vec3> contact;
    Vec3 centroid = Vec3::Zero();
    for (int id : ids) {
      contact.push_back(candidate.body.frames[f][id]);
      centroid += contact.back();
    }
    centroid /= static_cast<double>(contact.size());
    double best = std::numeric_limits<double>::infinity();
    for (const Region& r : prep.regions) {
      const RigidTransform& pose = poses[f][r.object];
      double v;
      if (params.mode == SceneLossMode::kCenter) {
        v = center_point_loss(contact, pose.apply(prep.centers[r.object]));
      } else {
        std::vector<Vec3> world_samples;
        world_samples.reserve(r.samples.size());
        for (const Vec3& q : r.samples) world_samples.push_back(pose.apply(q));
        v = scene_targeted_loss(contact, local_samples(world_samples, centroid, params.local_radius));
      }
      best = std::min(best, v);
    }
    scene_sum += best;
    ++scene_frames;
  }
  s.scene = scene_frames > 0 ? scene_sum / scene_frames : 0.0;
  s.total = params.w_track * s.track + params.w_scene * s.scene + params.w_pen * s.penetration;
  return s;
}

std::vector<int> contact_union(const MotionSequence& m) {
  std::vector<int> ids;
  for (const auto& f : m.contact_keypoints) ids.insert(ids.end(), f.begin(), f.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

// Offsets per knot: root xyz then contact-keypoint xyz.
MotionSequence apply_offsets(const MotionSequence& m, const Eigen::VectorXd& theta, int spacing,
                             const std::vector<int>& contact) {
  MotionSequence out = m;
  const int frames = static_cast<int>(m.frame_count());
  const int knots = static_cast<int>(theta.size() / 6);
  for (int f = 0; f < frames; ++f) {
    const int k0 = std::min(f / spacing, knots - 1);
    const int k1 = std::min(k0 + 1, knots - 1);
    const double u = k1 == k0 ? 0.0 : static_cast<double>(f - k0 * spacing) / spacing;
    const Eigen::VectorXd d = (1.0 - u) * theta.segment(6 * k0, 6) + u * theta.segment(6 * k1, 6);
    const Vec3 root = d.head<3>();
    const Vec3 limb = d.tail<3>();
    for (Vec3& p : out.body.frames[f]) p += root;
    for (int id : contact) out.body.frames[f][id] += limb;
  }
  return out;
}

}  // namespace

ScoreTerms score_motion(const MotionSequence& candidate, const MotionSequence& input,
                        const RefineScene& scene, const RefineParams& params, std::uint64_t seed) {
  params.validate();
  candidate.validate();
  input.validate();
  if (candidate.frame_count() != input.frame_count() ||
      candidate.body.skeleton.size() != input.body.skeleton.size()) {
    throw DimensionMismatch("candidate and input motions differ in shape");
  }
  return score_with(candidate, input, scene, params, prepare(scene, params, seed));
}

RefineResult refine_motion(const MotionSequence& motion, const RefineScene& scene,
                           const RefineParams& params, std::uint64_t seed) {
  params.validate();
  motion.validate();
  if (motion.frame_count() == 0) throw InvalidArgument("refine_motion needs at least one frame");
  const Prepared prep = prepare(scene, params, seed);
  const std::vector<int> contact = contact_union(motion);

  RefineResult out;
  out.motion = motion;
  out.input_score = score_with(motion, motion, scene, params, prep);
  out.best_score = out.input_score;

  const int frames = static_cast<int>(motion.frame_count());
  const int knots = (frames - 1 + params.knot_spacing - 1) / params.knot_spacing + 1;
  const int dim = 6 * knots;
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(dim);
  Eigen::VectorXd sigma(dim);
  for (int k = 0; k < knots; ++k) {
    sigma.segment(6 * k, 3).setConstant(params.sigma_root);
    sigma.segment(6 * k + 3, 3).setConstant(contact.empty() ? params.sigma_floor : params.sigma_limb);
  }
  const int elites = std::max(1, static_cast<int>(std::lround(params.elite_fraction * params.population)));

  std::mt19937_64 rng(mix_seed(seed, 0xCE11));
  std::normal_distribution<double> g(0.0, 1.0);
  for (int it = 0; it < params.iterations; ++it) {
    std::vector<std::pair<double, int>> scored;
    std::vector<Eigen::VectorXd> thetas;
    for (int c = 0; c < params.population; ++c) {
      Eigen::VectorXd theta(dim);
      for (int i = 0; i < dim; ++i) theta[i] = mean[i] + sigma[i] * g(rng);
      MotionSequence cand = apply_offsets(motion, theta, params.knot_spacing, contact);
      try {
        const ScoreTerms s = score_with(cand, motion, scene, params, prep);
        if (!std::isfinite(s.total)) continue;
        scored.emplace_back(s.total, static_cast<int>(thetas.size()));
        thetas.push_back(std::move(theta));
        if (s.total < out.best_score.total) {
          out.best_score = s;
          out.motion = std::move(cand);
        }
      } catch (const sim::BlowUp&) {
        ++out.blowups;
      }
    }
    out.score_trace.push_back(out.best_score.total);
    if (scored.empty()) continue;
    std::sort(scored.begin(), scored.end());
    const int n = std::min<int>(elites, static_cast<int>(scored.size()));
    Eigen::VectorXd m = Eigen::VectorXd::Zero(dim);
    for (int e = 0; e < n; ++e) m += thetas[scored[e].second];
    m /= n;
    Eigen::VectorXd var = Eigen::VectorXd::Zero(dim);
    for (int e = 0; e < n; ++e) var += (thetas[scored[e].second] - m).cwiseAbs2();
    var /= n;
    mean = m;
    sigma = var.cwiseSqrt().cwiseMax(params.sigma_floor);
  }
  return out;
}

namespace {

void check_pair(const MotionSequence& pred, const MotionSequence& ref) {
  if (pred.frame_count() != ref.frame_count()) {
    throw DimensionMismatch("motions have " + std::to_string(pred.frame_count()) + " and " +
                            std::to_string(ref.frame_count()) + " frames");
  }
  if (pred.frame_count() == 0) throw DimensionMismatch("motions have no frames");
  for (std::size_t f = 0; f < pred.frame_count(); ++f) {
    if (pred.body.frames[f].size() != ref.body.frames[f].size() || pred.body.frames[f].empty()) {
      throw DimensionMismatch("frame " + std::to_string(f) + " keypoint counts differ");
    }
  }
}

Eigen::Matrix3Xd as_matrix(const std::vector<Vec3>& pts) {
  Eigen::Matrix3Xd m(3, pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) m.col(static_cast<Eigen::Index>(i)) = pts[i];
  return m;
}

bool collinear(const Eigen::Matrix3Xd& m) {
  if (m.cols() < 3) return true;
  const Eigen::Matrix3Xd c = m.colwise() - m.rowwise().mean();
  const Eigen::Vector3d sv = Eigen::JacobiSVD<Eigen::Matrix3Xd>(c).singularValues();
  return !(sv[1] > 1e-9 * std::max(sv[0], 1e-300));
}

}  // namespace

Similarity procrustes(const std::vector<Vec3>& source, const std::vector<Vec3>& target) {
  if (source.size() != target.size()) throw DimensionMismatch("procrustes point counts differ");
  const Eigen::Matrix3Xd a = as_matrix(source), b = as_matrix(target);
  if (collinear(a) || collinear(b)) throw DegenerateFrame("keypoints are collinear");
  const Eigen::Matrix4d t = Eigen::umeyama(a, b, true);
  Similarity s;
  const Mat3 sr = t.topLeftCorner<3, 3>();
  s.scale = std::cbrt(sr.determinant());
  s.rotation = sr / s.scale;
  s.translation = t.topRightCorner<3, 1>();
  return s;
}

double w_mpjpe(const MotionSequence& pred, const MotionSequence& ref) {
  check_pair(pred, ref);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t f = 0; f < pred.frame_count(); ++f) {
    for (std::size_t k = 0; k < pred.body.frames[f].size(); ++k) {
      sum += (pred.body.frames[f][k] - ref.body.frames[f][k]).norm();
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

double pa_mpjpe(const MotionSequence& pred, const MotionSequence& ref) {
  check_pair(pred, ref);
  double sum = 0.0;
  std::size_t n = 0;
  for (std::size_t f = 0; f < pred.frame_count(); ++f) {
    const auto& p = pred.body.frames[f];
    const auto& q = ref.body.frames[f];
    const Similarity s = procrustes(p, q);
    for (std::size_t k = 0; k < p.size(); ++k) {
      sum += (s.scale * (s.rotation * p[k]) + s.translation - q[k]).norm();
      ++n;
    }
  }
  return sum / static_cast<double>(n);
}

}  // namespace physloop::refine
