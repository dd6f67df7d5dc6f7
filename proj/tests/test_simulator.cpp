#include <gtest/gtest.h>

#include "physloop/simulator.hpp"
#include "taxonomy.hpp"

using namespace physloop;
using namespace physloop::sim;

namespace {

Body box(const Vec3& half, const RigidTransform& pose, double mass = 10.0) {
  return taxonomy::box_body(half, pose, mass);
}

}  // namespace

TEST(Simulator, BallisticDropMatchesClosedForm) {
  WorldState w;
  w.bodies.push_back(box({0.1, 0.1, 0.1}, RigidTransform::from_yaw(0.0, {0, 0, 2.0})));
  w.bodies[0].linear_velocity = {0.3, 0.0, 0.5};
  const double z0 = w.bodies[0].com().z();
  const double dt = 1.0 / 240.0;
  // Contact could begin once the bottom is within reach; stop well before.
  for (int i = 1; i <= 120; ++i) {
    w = step(w, dt);
    const double t = i * dt;
    const double expected_z = z0 + 0.5 * t - 0.5 * 9.81 * t * t;
    const double fall = std::abs(expected_z - z0);
    EXPECT_NEAR(w.bodies[0].com().z(), expected_z, std::max(0.01 * fall, 1e-12)) << "t=" << t;
    EXPECT_NEAR(w.bodies[0].com().x(), 0.3 * t, 1e-12);
    EXPECT_NEAR(w.bodies[0].linear_velocity.z(), 0.5 - 9.81 * t, 1e-9);
  }
}

TEST(Simulator, EnergyNeverIncreases) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const WorldState w = taxonomy::random_drop(seed);
    double previous = w.kinetic_energy() + w.potential_energy();
    int steps = 0;
    SettleParams params;
    params.max_time = 3.0;
    settle(w, params, [&](const WorldState& s) {
      const double e = s.kinetic_energy() + s.potential_energy();
      EXPECT_LE(e, previous + 1e-9 * (1.0 + std::abs(previous))) << "seed " << seed << " step " << steps;
      previous = e;
      ++steps;
    });
    EXPECT_GT(steps, 0);
  }
}

TEST(Simulator, IdenticalRunsAreBitwiseIdentical) {
  for (std::uint64_t seed : {3u, 4u, 17u}) {
    WorldState w = taxonomy::random_drop(seed);
    w = taxonomy::with_human(w, templates::sit_motion({0.0, 0.0, 0.3}, 0.2, 0.4));
    std::vector<RigidTransform> a, b;
    settle(w, {}, [&](const WorldState& s) { a.push_back(s.bodies[0].pose); });
    settle(w, {}, [&](const WorldState& s) { b.push_back(s.bodies[0].pose); });
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
      ASSERT_EQ(a[i].rotation, b[i].rotation) << i;
      ASSERT_EQ(a[i].translation, b[i].translation) << i;
    }
  }
}

TEST(Simulator, RestingBoxStaysPut) {
  WorldState w;
  w.bodies.push_back(box({0.3, 0.2, 0.1}, RigidTransform::from_yaw(0.5, {0.1, 0.2, 0.0})));
  const SettleOutcome out = settle(w);
  EXPECT_TRUE(out.stabilized);
  EXPECT_LT(out.displacement[0].translation, 1e-3);
  EXPECT_LT(out.displacement[0].rotation, 1e-3);
  EXPECT_GE(out.settle_time, SettleParams{}.min_time);
}

TEST(Simulator, SlidingBoxDeceleratesAtMuG) {
  WorldState w;
  w.bodies.push_back(box({0.2, 0.2, 0.05}, RigidTransform()));
  w.bodies[0].friction = 0.5;
  w.bodies[0].linear_velocity = {2.0, 0.0, 0.0};
  const double dt = 1.0 / 240.0;
  for (int i = 0; i < 48; ++i) w = step(w, dt);
  // v(t) = v0 - mu g t while sliding.
  EXPECT_NEAR(w.bodies[0].linear_velocity.x(), 2.0 - 0.5 * 9.81 * 48 * dt, 0.02);
  for (int i = 0; i < 240; ++i) w = step(w, dt);
  EXPECT_LT(w.bodies[0].linear_velocity.norm(), 1e-3);
  // Stopping distance v0^2 / (2 mu g).
  EXPECT_NEAR(w.bodies[0].com().x(), 4.0 / (2 * 0.5 * 9.81), 0.01);
}

TEST(Simulator, HumanPushesWithoutBeingPushed) {
  WorldState w;
  w.bodies.push_back(box({0.15, 0.15, 0.15}, RigidTransform(), 5.0));
  // Walk straight through the box.
  const Keypoints from = templates::standing_pose({-0.8, 0, 0}, -M_PI / 2);
  const Keypoints to = templates::standing_pose({0.8, 0, 0}, -M_PI / 2);
  w = taxonomy::with_human(w, templates::keyframe_motion({{0.0, from, {}}, {2.0, to, {}}}));
  const MotionSequence before = w.human->motion;
  const SettleOutcome out = settle(w);
  EXPECT_GT(out.displacement[0].translation, 0.1);
  EXPECT_EQ(out.final_world.human->motion.body.frames, before.body.frames);
}

TEST(Simulator, RejectsBadInput) {
  WorldState w;
  w.bodies.push_back(box({0.1, 0.1, 0.1}, RigidTransform()));
  EXPECT_THROW(step(w, 0.1), InvalidArgument);
  EXPECT_THROW(step(w, 0.0), InvalidArgument);
  w.bodies[0].mass = -1.0;
  EXPECT_THROW(step(w, 1.0 / 240.0), InvalidArgument);
  w.bodies[0].mass = 1.0;
  w.bodies[0].linear_velocity = {5e3, 0.0, 0.0};
  EXPECT_THROW(step(w, 1.0 / 240.0), BlowUp);
}

TEST(Simulator, GravityStabilityOfShapes) {
  EXPECT_TRUE(gravity_stability(geometry::make_box(Vec3(0, 0, 0.2), Vec3::Constant(0.2)), RigidTransform()));
  dsro::ShapeParam x = dsro::canonical_shape(dsro::Family::kChair);
  EXPECT_TRUE(gravity_stability(dsro::decode_shape(x, dsro::Family::kChair), RigidTransform()));
  x[dsro::kLegBackRight] = -1.0;
  EXPECT_FALSE(gravity_stability(dsro::decode_shape(x, dsro::Family::kChair), RigidTransform()));
  x = dsro::canonical_shape(dsro::Family::kChair);
  x[dsro::kLegFrontLeft] = -1.0;
  EXPECT_TRUE(gravity_stability(dsro::decode_shape(x, dsro::Family::kChair), RigidTransform()));
  EXPECT_THROW(gravity_stability(geometry::make_unit_square(), RigidTransform()), NonWatertightSource);
}

TEST(Simulator, TaxonomyAtDefaultStep) {
  for (const taxonomy::Case& c : taxonomy::cases()) {
    SettleParams params;
    params.max_time = c.max_time;
    const SettleOutcome out = settle(c.world, params);
    EXPECT_EQ(classify_outcome(c.world, out, params), c.expected) << c.name;
  }
}

TEST(Simulator, StabilityLabel) {
  const auto cases = taxonomy::cases();
  for (const taxonomy::Case& c : cases) {
    if (!c.world.human) continue;
    SettleParams params;
    params.max_time = c.max_time;
    EXPECT_EQ(stability_label(c.world, params), c.expected == OutcomeType::kType4 ? 1 : 0) << c.name;
  }
  EXPECT_THROW(stability_label(WorldState{}), InvalidArgument);
}
