#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "physloop/body.hpp"
#include "physloop/geometry.hpp"
#include "physloop/simulator.hpp"

namespace physloop::refine {

// Double mean of squared distances between contact keypoints and surface
// samples (m^2). Throws EmptySelection.
double scene_targeted_loss(const std::vector<Vec3>& contact_keypoints,
                           const std::vector<Vec3>& surface_samples);

// Samples within `radius` of `center`; the `fallback` nearest ones when none
// are that close.
std::vector<Vec3> local_samples(const std::vector<Vec3>& samples, const Vec3& center,
                                double radius = 0.3, std::size_t fallback = 8);

// Squared distance between the contact keypoint centroid and a point.
// Throws EmptySelection.
double center_point_loss(const std::vector<Vec3>& contact_keypoints, const Vec3& object_center);
// Against the object's volume centroid.
double center_point_loss(const std::vector<Vec3>& contact_keypoints, const geometry::Mesh& object);

// Part of an object that contacts should land on: a connected component of
// its mesh, or the whole mesh when component < 0.
struct ContactRegion {
  int object = 0;
  int component = -1;
};

struct RefineScene {
  sim::WorldState world;  // objects only; a human is ignored
  std::vector<ContactRegion> regions;  // empty: every object as a whole
};

enum class SceneLossMode { kSurface, kCenter };

std::string to_string(SceneLossMode mode);
SceneLossMode scene_loss_mode_from_string(const std::string& name);  // throws ParseError

struct RefineParams {
  int population = 64;
  double elite_fraction = 0.1;
  int iterations = 30;
  double sigma_root = 0.02;   // m
  double sigma_limb = 0.03;   // m, contact keypoint offsets
  double sigma_floor = 1e-3;  // m
  double w_track = 1.0;
  double w_scene = 10.0;
  double w_pen = 100.0;
  int knot_spacing = 5;  // frames
  SceneLossMode mode = SceneLossMode::kSurface;
  double local_radius = 0.3;
  int surface_samples = 1500;
  bool simulate = true;  // score against rolled-out object poses
  double rollout_dt = 1.0 / 120.0;

  void validate() const;  // throws InvalidArgument
};

struct ScoreTerms {
  double track = 0.0;
  double scene = 0.0;
  double penetration = 0.0;
  double total = 0.0;
};

struct RefineResult {
  MotionSequence motion;
  std::vector<double> score_trace;  // best score after each iteration
  ScoreTerms input_score;
  ScoreTerms best_score;
  int blowups = 0;
};

// Scores `candidate` against the reference motion `input` in the scene.
ScoreTerms score_motion(const MotionSequence& candidate, const MotionSequence& input,
                        const RefineScene& scene, const RefineParams& params,
                        std::uint64_t seed = 0);

// Cross-entropy search over root and contact-keypoint offsets given at knots
// every `knot_spacing` frames and interpolated linearly in between. The best
// candidate seen, the input included, is returned.
RefineResult refine_motion(const MotionSequence& motion, const RefineScene& scene,
                           const RefineParams& params, std::uint64_t seed);

// Mean per-frame per-keypoint world error. Throws DimensionMismatch.
double w_mpjpe(const MotionSequence& pred, const MotionSequence& ref);

// Per-frame similarity Procrustes of pred onto ref, then the mean error.
// Throws DimensionMismatch, DegenerateFrame (collinear keypoints).
double pa_mpjpe(const MotionSequence& pred, const MotionSequence& ref);

// Similarity transform (s, R, t) minimizing sum |s R p + t - q|^2.
struct Similarity {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};
Similarity procrustes(const std::vector<Vec3>& source, const std::vector<Vec3>& target);

}  // namespace physloop::refine
