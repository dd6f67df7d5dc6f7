#include <gtest/gtest.h>

#include <random>

#include <Eigen/SVD>

#include "physloop/dsro.hpp"
#include "physloop/motion_refine.hpp"
#include "physloop/motion_templates.hpp"

using namespace physloop;
using namespace physloop::refine;

namespace {

std::vector<Vec3> random_points(std::mt19937_64& rng, int n, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) out.emplace_back(u(rng), u(rng), u(rng));
  return out;
}

MotionSequence random_motion(std::mt19937_64& rng, int frames) {
  MotionSequence m;
  m.body.skeleton = standard_skeleton();
  for (int f = 0; f < frames; ++f) {
    m.body.frames.push_back(random_points(rng, static_cast<int>(m.body.skeleton.size())));
    m.contact_keypoints.push_back({});
  }
  return m;
}

Mat3 random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  return so3_exp(Vec3(g(rng), g(rng), g(rng)));
}

// Kabsch with scale: rotation from the SVD of the cross covariance, sign
// fixed by the determinant, scale from the trace ratio.
double oracle_pa_frame(const std::vector<Vec3>& p, const std::vector<Vec3>& q) {
  const std::size_t n = p.size();
  Vec3 mp = Vec3::Zero(), mq = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    mp += p[i];
    mq += q[i];
  }
  mp /= n;
  mq /= n;
  Mat3 h = Mat3::Zero();
  double var = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    h += (p[i] - mp) * (q[i] - mq).transpose();
    var += (p[i] - mp).squaredNorm();
  }
  Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixV() * svd.matrixU().transpose()).determinant() < 0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixV() * d * svd.matrixU().transpose();
  const double s = (svd.singularValues().asDiagonal() * d).trace() / var;
  double err = 0.0;
  for (std::size_t i = 0; i < n; ++i) err += (s * r * (p[i] - mp) + mq - q[i]).norm();
  return err / n;
}

}  // namespace

TEST(SceneTargetedLoss, CoincidentIsZero) {
  EXPECT_EQ(scene_targeted_loss({Vec3(1, 2, 3)}, {Vec3(1, 2, 3)}), 0.0);
}

TEST(SceneTargetedLoss, SinglePairIsSquaredDistance) {
  EXPECT_NEAR(scene_targeted_loss({Vec3(0, 0, 0)}, {Vec3(0.3, 0.4, 0)}), 0.25, 1e-15);
}

TEST(SceneTargetedLoss, TwoByThreeMatchesEnumeration) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    const auto k = random_points(rng, 2);
    const auto s = random_points(rng, 3);
    const double expected = ((k[0] - s[0]).squaredNorm() + (k[0] - s[1]).squaredNorm() +
                             (k[0] - s[2]).squaredNorm() + (k[1] - s[0]).squaredNorm() +
                             (k[1] - s[1]).squaredNorm() + (k[1] - s[2]).squaredNorm()) /
                            6.0;
    EXPECT_NEAR(scene_targeted_loss(k, s), expected, 1e-12);
  }
}

TEST(SceneTargetedLoss, BoundedByNearestAndFarthestPair) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const auto k = random_points(rng, 1 + trial % 4);
    const auto s = random_points(rng, 1 + trial % 7);
    double lo = 1e300, hi = 0.0;
    for (const Vec3& a : k) {
      for (const Vec3& b : s) {
        lo = std::min(lo, (a - b).squaredNorm());
        hi = std::max(hi, (a - b).squaredNorm());
      }
    }
    const double v = scene_targeted_loss(k, s);
    EXPECT_GE(v, lo - 1e-15);
    EXPECT_LE(v, hi + 1e-15);
  }
}

TEST(SceneTargetedLoss, RigidInvariance) {
  std::mt19937_64 rng(5);
  auto k = random_points(rng, 3);
  auto s = random_points(rng, 20);
  const double before = scene_targeted_loss(k, s);
  const RigidTransform t{random_rotation(rng), Vec3(1.0, -2.0, 0.5)};
  for (Vec3& p : k) p = t.apply(p);
  for (Vec3& p : s) p = t.apply(p);
  EXPECT_NEAR(scene_targeted_loss(k, s), before, 1e-8);
}

TEST(SceneTargetedLoss, EmptyInputsThrow) {
  EXPECT_THROW(scene_targeted_loss({}, {Vec3::Zero()}), EmptySelection);
  EXPECT_THROW(scene_targeted_loss({Vec3::Zero()}, {}), EmptySelection);
}

TEST(LocalSamples, RadiusAndFallback) {
  std::vector<Vec3> s;
  for (int i = 0; i < 20; ++i) s.emplace_back(0.1 * i, 0, 0);
  EXPECT_EQ(local_samples(s, Vec3::Zero(), 0.35).size(), 4u);
  const auto far = local_samples(s, Vec3(10, 0, 0), 0.3, 8);
  ASSERT_EQ(far.size(), 8u);
  for (const Vec3& p : far) EXPECT_GE(p.x(), 1.15);
}

TEST(CenterPointLoss, ZeroOffsetAndRandom) {
  EXPECT_EQ(center_point_loss({Vec3(1, 0, 0), Vec3(-1, 0, 0)}, Vec3::Zero()), 0.0);
  EXPECT_NEAR(center_point_loss({Vec3(0, 0, 0.2)}, Vec3::Zero()), 0.04, 1e-15);
  std::mt19937_64 rng(6);
  for (int trial = 0; trial < 100; ++trial) {
    const auto k = random_points(rng, 1 + trial % 5);
    const Vec3 c = random_points(rng, 1)[0];
    double cx = 0, cy = 0, cz = 0;
    for (const Vec3& p : k) {
      cx += p.x();
      cy += p.y();
      cz += p.z();
    }
    cx /= k.size();
    cy /= k.size();
    cz /= k.size();
    const double expected = (cx - c.x()) * (cx - c.x()) + (cy - c.y()) * (cy - c.y()) +
                            (cz - c.z()) * (cz - c.z());
    EXPECT_NEAR(center_point_loss(k, c), expected, 1e-12);
  }
  EXPECT_THROW(center_point_loss(std::vector<Vec3>{}, Vec3::Zero()), EmptySelection);
}

TEST(CenterPointLoss, MeshCentroid) {
  const auto box = geometry::make_box(Vec3(1, 2, 3), Vec3(0.5, 0.2, 0.1));
  EXPECT_NEAR(center_point_loss({Vec3(1, 2, 3)}, box), 0.0, 1e-20);
  EXPECT_NEAR(center_point_loss({Vec3(1, 2, 3.3)}, box), 0.09, 1e-12);
}

TEST(Mpjpe, WorldErrorOracles) {
  std::mt19937_64 rng(7);
  const MotionSequence a = random_motion(rng, 4);
  EXPECT_EQ(w_mpjpe(a, a), 0.0);
  MotionSequence shifted = a;
  for (auto& f : shifted.body.frames) {
    for (Vec3& p : f) p += Vec3(0.1, 0, 0);
  }
  EXPECT_NEAR(w_mpjpe(shifted, a), 0.1, 1e-12);
  for (int trial = 0; trial < 100; ++trial) {
    const MotionSequence p = random_motion(rng, 3), q = random_motion(rng, 3);
    double sum = 0.0;
    int n = 0;
    for (int f = 0; f < 3; ++f) {
      for (int k = 0; k < 16; ++k) {
        const Vec3 d = p.body.frames[f][k] - q.body.frames[f][k];
        sum += std::sqrt(d.x() * d.x() + d.y() * d.y() + d.z() * d.z());
        ++n;
      }
    }
    EXPECT_NEAR(w_mpjpe(p, q), sum / n, 1e-12);
  }
  EXPECT_THROW(w_mpjpe(random_motion(rng, 2), random_motion(rng, 3)), DimensionMismatch);
}

TEST(Mpjpe, ProcrustesRemovesSimilarity) {
  std::mt19937_64 rng(8);
  const MotionSequence ref = random_motion(rng, 5);
  EXPECT_NEAR(pa_mpjpe(ref, ref), 0.0, 1e-9);
  MotionSequence pred = ref;
  for (auto& f : pred.body.frames) {
    const Mat3 r = random_rotation(rng);
    const double s = 0.5 + std::uniform_real_distribution<double>(0, 2)(rng);
    const Vec3 t = random_points(rng, 1, 3.0)[0];
    for (Vec3& p : f) p = s * (r * p) + t;
  }
  EXPECT_NEAR(pa_mpjpe(pred, ref), 0.0, 1e-9);
}

TEST(Mpjpe, DisplacedKeypointMatchesSvdOracle) {
  std::mt19937_64 rng(9);
  const MotionSequence ref = random_motion(rng, 1);
  MotionSequence pred = ref;
  const double d = 0.2;
  pred.body.frames[0][5] += Vec3(0, 0, d);
  const double expected = oracle_pa_frame(pred.body.frames[0], ref.body.frames[0]);
  EXPECT_NEAR(pa_mpjpe(pred, ref), expected, 1e-12);
  EXPECT_NEAR(w_mpjpe(pred, ref), d / 16.0, 1e-15);
  // The least-squares fit spreads a single outlier over every keypoint, so
  // the mean error after alignment exceeds the unaligned one here.
  EXPECT_GT(pa_mpjpe(pred, ref), w_mpjpe(pred, ref));
}

TEST(Mpjpe, RandomPairsMatchOracleAndNeverExceedWorldError) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 0.05);
  for (int trial = 0; trial < 100; ++trial) {
    const MotionSequence ref = random_motion(rng, 2);
    MotionSequence pred = trial % 2 == 0 ? random_motion(rng, 2) : ref;
    if (trial % 2 == 1) {
      for (auto& f : pred.body.frames) {
        for (Vec3& p : f) p += Vec3(g(rng), g(rng), g(rng)) + Vec3(0.3, 0, 0);
      }
    }
    const double expected = 0.5 * (oracle_pa_frame(pred.body.frames[0], ref.body.frames[0]) +
                                   oracle_pa_frame(pred.body.frames[1], ref.body.frames[1]));
    EXPECT_NEAR(pa_mpjpe(pred, ref), expected, 1e-12);
    EXPECT_LE(pa_mpjpe(pred, ref), w_mpjpe(pred, ref) + 1e-9);
  }
}

TEST(Mpjpe, CollinearFrameThrows) {
  MotionSequence m;
  m.body.skeleton = standard_skeleton();
  Keypoints line;
  for (int k = 0; k < 16; ++k) line.emplace_back(0.1 * k, 0.2 * k, 0.0);
  m.body.frames = {line};
  m.contact_keypoints = {{}};
  EXPECT_THROW(pa_mpjpe(m, m), DegenerateFrame);
}

TEST(RefineParams, Validation) {
  RefineParams p;
  EXPECT_NO_THROW(p.validate());
  p.elite_fraction = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = {};
  p.elite_fraction = 1.5;
  EXPECT_THROW(p.validate(), InvalidArgument);
  p = {};
  p.sigma_root = 0.0;
  EXPECT_THROW(p.validate(), InvalidArgument);
}

namespace {

struct SitScene {
  RefineScene scene;
  MotionSequence motion;
  geometry::Sdf seat;
};

SitScene hovering_sit(double hover) {
  const auto x = dsro::canonical_shape(dsro::Family::kChair);
  const auto dims = dsro::decode_dims(x, dsro::Family::kChair);
  auto mesh = std::make_shared<const geometry::Mesh>(dsro::decode_shape(x, dsro::Family::kChair));
  RefineScene scene;
  scene.world.bodies.push_back(sim::make_body(mesh, RigidTransform{}));
  scene.regions = {{0, 0}};
  const auto seat = geometry::connected_components(*mesh)[0];
  auto motion = templates::sit_motion(Vec3(0, 0, dims.height), 0.0, dims.depth,
                                      templates::kHipClearance + hover);
  return {scene, motion, geometry::Sdf(seat)};
}

double mean_contact_distance(const MotionSequence& m, const geometry::Sdf& seat) {
  double sum = 0.0;
  const auto& ids = m.contact_keypoints.back();
  for (int id : ids) sum += seat.unsigned_distance(m.body.frames.back()[id]);
  return sum / ids.size();
}

}  // namespace

TEST(RefineMotion, SceneOptimalInputIsKept) {
  SitScene s = hovering_sit(0.3);
  for (auto& c : s.motion.contact_keypoints) c.clear();
  RefineParams p;
  p.population = 8;
  p.iterations = 3;
  const RefineResult r = refine_motion(s.motion, s.scene, p, 1);
  EXPECT_EQ(r.input_score.scene, 0.0);
  EXPECT_EQ(r.input_score.penetration, 0.0);
  EXPECT_NEAR(r.best_score.total, r.input_score.total, 1e-6);
  EXPECT_LE(w_mpjpe(r.motion, s.motion), p.sigma_floor);
}

TEST(RefineMotion, HoveringSitIsPulledOntoTheSeat) {
  SitScene s = hovering_sit(0.05);
  EXPECT_GT(mean_contact_distance(s.motion, s.seat), 0.05);
  RefineParams p;
  p.population = 16;
  p.iterations = 8;
  const RefineResult r = refine_motion(s.motion, s.scene, p, 2);
  EXPECT_LT(mean_contact_distance(r.motion, s.seat), 0.01);
  ASSERT_EQ(r.score_trace.size(), 8u);
  for (std::size_t i = 1; i < r.score_trace.size(); ++i) {
    EXPECT_LE(r.score_trace[i], r.score_trace[i - 1]);
  }
  EXPECT_LE(r.best_score.total, r.input_score.total);
}

TEST(RefineMotion, Deterministic) {
  SitScene s = hovering_sit(0.05);
  RefineParams p;
  p.population = 6;
  p.iterations = 2;
  const RefineResult a = refine_motion(s.motion, s.scene, p, 9);
  const RefineResult b = refine_motion(s.motion, s.scene, p, 9);
  EXPECT_EQ(a.motion.body.frames, b.motion.body.frames);
  EXPECT_EQ(a.score_trace, b.score_trace);
}
