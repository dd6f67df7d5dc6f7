#include "physloop/scene_align.hpp"

#include <cmath>
#include <limits>

namespace physloop::scene {

namespace {

Keypoints to_local(const Keypoints& world, const RigidTransform& pose, const Vec3& offset) {
  Keypoints local(world.size());
  for (std::size_t i = 0; i < world.size(); ++i) local[i] = pose.apply_inverse(world[i] + offset);
  return local;
}

std::vector<double> pack(const PlacementState& s) {
  std::vector<double> x;
  for (const ObjectPlacement& o : s.objects) {
    x.push_back(o.yaw);
    for (int k = 0; k < 3; ++k) x.push_back(o.translation[k]);
  }
  for (int k = 0; k < 3; ++k) x.push_back(s.human_offset[k]);
  return x;
}

PlacementState unpack(const std::vector<double>& x, std::size_t objects) {
  PlacementState s;
  std::size_t i = 0;
  for (std::size_t o = 0; o < objects; ++o) {
    ObjectPlacement p;
    p.yaw = x[i++];
    for (int k = 0; k < 3; ++k) p.translation[k] = x[i++];
    s.objects.push_back(p);
  }
  for (int k = 0; k < 3; ++k) s.human_offset[k] = x[i++];
  return s;
}

// Per-object branch decisions: [object][frame] -> contact?
using Branches = std::vector<std::vector<char>>;

double loss_with(const BodyModel& body, const std::vector<geometry::Sdf>& objects,
                 const PlacementState& state, double threshold, const Branches* fixed,
                 Branches* chosen) {
  if (chosen != nullptr) chosen->assign(objects.size(), std::vector<char>(body.frames.size(), 0));
  const std::vector<std::string> parts = body.skeleton.parts();
  double total = 0.0;
  for (std::size_t o = 0; o < objects.size(); ++o) {
    const RigidTransform pose = state.objects[o].transform();
    double sum = 0.0;
    for (std::size_t f = 0; f < body.frames.size(); ++f) {
      const Keypoints local = to_local(body.frames[f], pose, state.human_offset);
      std::vector<double> dist(local.size());
      double closest = std::numeric_limits<double>::infinity();
      for (std::size_t k = 0; k < local.size(); ++k) {
        dist[k] = objects[o].signed_distance(local[k]);
        closest = std::min(closest, dist[k]);
      }
      const bool contact = fixed != nullptr ? (*fixed)[o][f] != 0 : closest <= threshold;
      if (chosen != nullptr) (*chosen)[o][f] = contact;

      // H_p: part with the smallest mean signed distance.
      std::vector<int> members;
      double best_mean = std::numeric_limits<double>::infinity();
      for (const std::string& name : parts) {
        const std::vector<int> candidate = body.skeleton.part_members(name);
        double mean = 0.0;
        for (int m : candidate) mean += dist[m];
        mean /= static_cast<double>(candidate.size());
        if (mean < best_mean) best_mean = mean, members = candidate;
      }
      if (contact) {
        double pen = 0.0;
        for (int m : members) pen += std::max(0.0, -dist[m]);
        sum += pen / static_cast<double>(members.size());
      } else {
        std::vector<Vec3> part;
        for (int m : members) part.push_back(local[m]);
        sum += non_contact_loss(part, objects[o].mesh().vertices);
      }
    }
    total += sum / static_cast<double>(body.frames.size());
  }
  return total;
}

}  // namespace

ContactState detect_contact(const Skeleton& skeleton, const Keypoints& keypoints,
                            const geometry::Sdf& object, double threshold) {
  if (!(threshold > 0.0)) throw InvalidArgument("contact threshold must be positive");
  if (keypoints.empty()) throw InvalidArgument("detect_contact needs at least one keypoint");
  if (keypoints.size() != skeleton.size()) {
    throw DimensionMismatch("frame has " + std::to_string(keypoints.size()) +
                            " keypoints, skeleton has " + std::to_string(skeleton.size()));
  }
  ContactState out;
  out.min_distance = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < keypoints.size(); ++i) {
    const double d = object.signed_distance(keypoints[i]);
    if (d < out.min_distance) {
      out.min_distance = d;
      out.keypoint = static_cast<int>(i);
    }
  }
  out.part = skeleton.part_of[out.keypoint];
  out.label = out.min_distance <= threshold ? ContactLabel::kContact : ContactLabel::kNonContact;
  return out;
}

std::string closest_part(const Skeleton& skeleton, const Keypoints& keypoints,
                         const geometry::Sdf& object) {
  std::string best;
  double best_mean = std::numeric_limits<double>::infinity();
  for (const std::string& part : skeleton.parts()) {
    const std::vector<int> members = skeleton.part_members(part);
    double sum = 0.0;
    for (int m : members) sum += object.signed_distance(keypoints[m]);
    const double mean = sum / static_cast<double>(members.size());
    if (mean < best_mean) best_mean = mean, best = part;
  }
  return best;
}

double non_contact_loss(const std::vector<Vec3>& part, const std::vector<Vec3>& object_vertices) {
  if (part.empty()) throw EmptySelection("non_contact_loss: empty body part");
  if (object_vertices.empty()) throw EmptySelection("non_contact_loss: object has no vertices");
  Vec3 centroid = Vec3::Zero();
  for (const Vec3& p : part) centroid += p;
  centroid /= static_cast<double>(part.size());
  double to_centroid = 0.0;
  double to_nearest = 0.0;
  for (const Vec3& v : object_vertices) {
    to_centroid += (centroid - v).norm();
    double nearest = std::numeric_limits<double>::infinity();
    for (const Vec3& p : part) nearest = std::min(nearest, (v - p).norm());
    to_nearest += nearest;
  }
  const auto n = static_cast<double>(object_vertices.size());
  return to_centroid / n + to_nearest / n;
}

double contact_loss(const std::vector<Vec3>& part, const geometry::Sdf& object) {
  if (part.empty()) throw EmptySelection("contact_loss: empty body part");
  double sum = 0.0;
  for (const Vec3& p : part) sum += std::max(0.0, -object.signed_distance(p));
  return sum / static_cast<double>(part.size());
}

double placement_loss(const BodyModel& body, const std::vector<geometry::Sdf>& objects,
                      const PlacementState& state, double threshold) {
  if (state.objects.size() != objects.size()) {
    throw DimensionMismatch("placement has " + std::to_string(state.objects.size()) +
                            " objects, scene has " + std::to_string(objects.size()));
  }
  if (body.frames.empty()) throw EmptySelection("placement_loss: body has no frames");
  return loss_with(body, objects, state, threshold, nullptr, nullptr);
}

PlacementResult align_placement(const BodyModel& body, const std::vector<geometry::Sdf>& objects,
                                const PlacementState& init, const PlacementOptions& opts) {
  PlacementResult result;
  result.state = init;
  double current = placement_loss(body, objects, init, opts.contact_threshold);
  result.trace.push_back(current);

  std::vector<char> free(pack(init).size(), 0);
  for (std::size_t i = 0; i < free.size(); ++i) {
    const bool human = i >= 4 * objects.size();
    const bool height = !human && i % 4 == 3;
    free[i] = human ? opts.move_human : opts.move_objects && !(height && opts.lock_object_height);
  }

  double step = opts.initial_step;
  for (int iter = 0; iter < opts.max_iters && step >= opts.min_step; ++iter) {
    result.iterations = iter + 1;
    Branches branches;
    loss_with(body, objects, result.state, opts.contact_threshold, nullptr, &branches);
    const std::vector<double> x = pack(result.state);
    std::vector<double> grad(x.size(), 0.0);
    double norm = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (!free[i]) continue;
      std::vector<double> xp = x, xm = x;
      xp[i] += opts.fd_step;
      xm[i] -= opts.fd_step;
      const double fp = loss_with(body, objects, unpack(xp, objects.size()), opts.contact_threshold,
                                  &branches, nullptr);
      const double fm = loss_with(body, objects, unpack(xm, objects.size()), opts.contact_threshold,
                                  &branches, nullptr);
      grad[i] = (fp - fm) / (2.0 * opts.fd_step);
      norm += grad[i] * grad[i];
    }
    norm = std::sqrt(norm);
    if (norm == 0.0) break;

    bool accepted = false;
    while (step >= opts.min_step) {
      std::vector<double> trial = x;
      for (std::size_t i = 0; i < x.size(); ++i) trial[i] -= step * grad[i] / norm;
      const PlacementState candidate = unpack(trial, objects.size());
      const double value = placement_loss(body, objects, candidate, opts.contact_threshold);
      if (value < current - opts.min_improvement) {
        result.state = candidate;
        current = value;
        result.trace.push_back(current);
        step *= 1.5;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;
  }
  result.improved = result.trace.back() < result.trace.front();
  if (!result.improved) result.state = init;
  return result;
}

double sp3d(const BodyModel& body, const std::vector<geometry::Sdf>& objects,
            const std::vector<RigidTransform>& poses, double tolerance, const Vec3& human_offset) {
  if (body.frames.empty()) throw EmptySelection("sp3d: body has no frames");
  if (!poses.empty() && poses.size() != objects.size()) {
    throw DimensionMismatch("sp3d: one pose per object required");
  }
  std::size_t total = 0;
  std::size_t inside = 0;
  for (const Keypoints& frame : body.frames) {
    for (const Vec3& k : frame) {
      ++total;
      for (std::size_t o = 0; o < objects.size(); ++o) {
        const Vec3 p = poses.empty() ? Vec3(k + human_offset) : poses[o].apply_inverse(k + human_offset);
        if (objects[o].signed_distance(p) < -tolerance) {
          ++inside;
          break;
        }
      }
    }
  }
  return total == 0 ? 0.0 : 100.0 * static_cast<double>(inside) / static_cast<double>(total);
}

}  // namespace physloop::scene
