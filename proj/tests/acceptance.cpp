// Acceptance runner: one PASS/FAIL line per criterion. Exit status 1 when any
// criterion fails.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "physloop/bench.hpp"
#include "physloop/dsro.hpp"
#include "physloop/io.hpp"
#include "physloop/motion_refine.hpp"
#include "physloop/pointmap_align.hpp"
#include "physloop/scene_align.hpp"
#include "physloop/simulator.hpp"
#include "taxonomy.hpp"

namespace fs = std::filesystem;
using namespace physloop;

namespace {

struct Verdict {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      detail << " [failed: " << what << "]";
    }
  }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::vector<Vec3> random_points(std::mt19937_64& rng, int n, double spread = 1.0) {
  std::normal_distribution<double> g(0.0, spread);
  std::vector<Vec3> out;
  for (int i = 0; i < n; ++i) out.emplace_back(g(rng), g(rng), g(rng));
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

double box_sdf(const Vec3& p, const Vec3& center, const Vec3& half) {
  const Vec3 q = (p - center).cwiseAbs() - half;
  return q.cwiseMax(0.0).norm() + std::min(q.maxCoeff(), 0.0);
}

// Kabsch with scale, independent of the library's Procrustes.
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

std::vector<dsro::Condition> chair_conditions() {
  std::vector<dsro::Condition> out;
  for (double h : {0.42, 0.45, 0.48}) {
    for (bool occluded : {false, true}) out.push_back({dsro::Family::kChair, h, occluded});
  }
  return out;
}

// ------------------------------------------------------------------ C1

void solver_recovery(Verdict& v) {
  double worst_error = 0.0, worst_truth = 0.0, slowest = 0.0;
  int instances = 0;
  for (int views = 3; views <= 6; ++views) {
    for (pm::Topology topo : {pm::Topology::kRing, pm::Topology::kComplete}) {
      for (std::uint64_t seed : {1u, 2u}) {
        const pm::SynthGraph s = pm::synth_graph(views, 16, 16, 0.0, 100 * views + seed, topo);
        worst_truth = std::max(worst_truth, pm::alignment_residual(s.truth, s.graph));
        const auto t0 = Clock::now();
        const pm::AlignResult r = pm::global_align(s.graph);
        slowest = std::max(slowest, seconds_since(t0));
        worst_error = std::max(worst_error, pm::aligned_depth_error(r.state, s.truth));
        ++instances;
      }
    }
  }
  v.detail << instances << " graphs, max depth error " << worst_error << ", max residual at truth "
           << worst_truth << ", slowest " << slowest << " s";
  v.require(worst_error <= 1e-3, "depth error <= 0.1%");
  v.require(worst_truth < 1e-10, "residual at truth < 1e-10");
  v.require(slowest < 10.0, "runtime < 10 s per instance");
}

// ------------------------------------------------------------------ C2

double relative_gap(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-6});
}

void gradient_checks(Verdict& v) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> g(0.0, 1.0);
  const double h = 1e-5;

  double worst_pm = 0.0;
  int pm_probes = 0;
  for (int trial = 0; trial < 4; ++trial) {
    const pm::SynthGraph s = pm::synth_graph(3 + trial % 3, 4, 5, 0.05, 40 + trial);
    pm::AlignmentState state = s.truth;
    for (std::size_t k = 1; k < state.poses.size(); ++k) {
      state.poses[k].rotation = so3_exp(0.05 * Vec3(g(rng), g(rng), g(rng))) * state.poses[k].rotation;
      state.poses[k].translation += 0.05 * Vec3(g(rng), g(rng), g(rng));
    }
    for (auto& d : state.depths) {
      for (double& z : d) z *= 1.0 + 0.05 * g(rng);
    }
    const pm::AlignmentGradient grad = pm::alignment_gradient(state, s.graph);
    auto blank = [&] {
      pm::AlignmentGradient d;
      d.depths.assign(state.depths.size(), std::vector<double>(state.depths[0].size(), 0.0));
      d.rotations.assign(state.poses.size(), Vec3::Zero());
      d.translations.assign(state.poses.size(), Vec3::Zero());
      d.log_scales.assign(state.scales.size(), 0.0);
      return d;
    };
    auto fd = [&](const pm::AlignmentGradient& dir) {
      return (pm::alignment_residual(pm::retract(state, dir, h), s.graph) -
              pm::alignment_residual(pm::retract(state, dir, -h), s.graph)) / (2.0 * h);
    };
    std::uniform_int_distribution<int> view(0, static_cast<int>(state.poses.size()) - 1);
    std::uniform_int_distribution<int> axis(0, 2);
    std::uniform_int_distribution<std::size_t> pixel(0, state.depths[0].size() - 1);
    std::uniform_int_distribution<std::size_t> edge(0, state.scales.size() - 1);
    for (int probe = 0; probe < 8; ++probe) {
      pm::AlignmentGradient dir = blank();
      double analytic = 0.0;
      const int vi = view(rng), k = axis(rng);
      switch (probe % 4) {
        case 0: {
          const std::size_t p = pixel(rng);
          dir.depths[vi][p] = 1.0;
          analytic = grad.depths[vi][p];
          break;
        }
        case 1:
          dir.rotations[vi][k] = 1.0;
          analytic = grad.rotations[vi][k];
          break;
        case 2:
          dir.translations[vi][k] = 1.0;
          analytic = grad.translations[vi][k];
          break;
        default: {
          const std::size_t e = edge(rng);
          dir.log_scales[e] = 1.0;
          analytic = grad.log_scales[e];
        }
      }
      worst_pm = std::max(worst_pm, relative_gap(analytic, fd(dir)));
      ++pm_probes;
    }
  }

  const dsro::NoiseSchedule schedule = dsro::linear_schedule();
  const dsro::Denoiser model(dsro::kShapeDim, {16, 16}, 3);
  dsro::Batch batch;
  const dsro::FamilyModel family;
  const auto conds = chair_conditions();
  for (int i = 0; i < 8; ++i) {
    batch.x0.push_back(family.sample(conds[i % conds.size()], rng));
    batch.conditions.push_back(conds[i % conds.size()]);
    batch.labels.push_back(i % 2);
  }
  const dsro::LossResult r = dsro::dsro_loss(batch, model, schedule, 5, true);
  std::uniform_int_distribution<Eigen::Index> param(0, model.params().size() - 1);
  double worst_dsro = 0.0;
  int dsro_probes = 0;
  for (int probe = 0; probe < 25; ++probe) {
    const Eigen::Index i = param(rng);
    dsro::Denoiser plus = model, minus = model;
    plus.params()[i] += h;
    minus.params()[i] -= h;
    const double fd = (dsro::dsro_loss(batch, plus, schedule, 5).loss -
                       dsro::dsro_loss(batch, minus, schedule, 5).loss) / (2.0 * h);
    worst_dsro = std::max(worst_dsro, relative_gap(r.grad[i], fd));
    ++dsro_probes;
  }
  v.detail << "alignment residual " << pm_probes << " probes, worst " << worst_pm << "; dsro loss "
           << dsro_probes << " probes, worst " << worst_dsro;
  v.require(worst_pm <= 1e-3 && pm_probes >= 20, "alignment gradient");
  v.require(worst_dsro <= 1e-3 && dsro_probes >= 20, "dsro gradient");
}

// ------------------------------------------------------------------ C3

void loss_oracles(Verdict& v) {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<int> count(1, 6);
  double nc = 0.0, c = 0.0, st = 0.0, w = 0.0, pa = 0.0;

  const Vec3 center(0.1, -0.2, 0.3), half(0.4, 0.3, 0.2);
  const geometry::Sdf box(geometry::make_box(center, half));

  for (int trial = 0; trial < 100; ++trial) {
    const auto part = random_points(rng, count(rng));
    const auto verts = random_points(rng, count(rng), 2.0);
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : part) centroid += p;
    centroid /= static_cast<double>(part.size());
    double first = 0.0, second = 0.0;
    for (const Vec3& o : verts) {
      first += (centroid - o).norm();
      double nearest = 1e300;
      for (const Vec3& p : part) nearest = std::min(nearest, (o - p).norm());
      second += nearest;
    }
    const double oracle_nc = (first + second) / verts.size();
    nc = std::max(nc, std::abs(scene::non_contact_loss(part, verts) - oracle_nc));

    const auto probe = random_points(rng, count(rng), 0.4);
    double pen = 0.0;
    for (const Vec3& p : probe) pen += std::max(0.0, -box_sdf(p + center, center, half));
    std::vector<Vec3> shifted;
    for (const Vec3& p : probe) shifted.push_back(p + center);
    c = std::max(c, std::abs(scene::contact_loss(shifted, box) - pen / probe.size()));

    const auto keys = random_points(rng, count(rng));
    const auto samples = random_points(rng, count(rng));
    double sum = 0.0;
    for (const Vec3& k : keys) {
      for (const Vec3& s : samples) sum += (k - s).squaredNorm();
    }
    st = std::max(st, std::abs(refine::scene_targeted_loss(keys, samples) - sum / (keys.size() * samples.size())));

    const MotionSequence a = random_motion(rng, 2), b = random_motion(rng, 2);
    double err = 0.0, pa_err = 0.0;
    for (int f = 0; f < 2; ++f) {
      for (std::size_t k = 0; k < a.body.frames[f].size(); ++k) err += (a.body.frames[f][k] - b.body.frames[f][k]).norm();
      pa_err += oracle_pa_frame(a.body.frames[f], b.body.frames[f]);
    }
    w = std::max(w, std::abs(refine::w_mpjpe(a, b) - err / (2.0 * a.body.frames[0].size())));
    pa = std::max(pa, std::abs(refine::pa_mpjpe(a, b) - pa_err / 2.0));
  }
  v.detail << "max deviation over 100 instances: non-contact " << nc << ", contact " << c
           << ", scene-targeted " << st << ", w-mpjpe " << w << ", pa-mpjpe " << pa;
  for (double d : {nc, c, st, w, pa}) v.require(d <= 1e-12, "oracle within 1e-12");
}

// ------------------------------------------------------------------ C4

void simulator_physics(Verdict& v) {
  sim::WorldState drop;
  drop.bodies.push_back(taxonomy::box_body({0.1, 0.1, 0.1}, RigidTransform::from_yaw(0.0, {0, 0, 2.0})));
  drop.bodies[0].linear_velocity = {0.3, 0.0, 0.5};
  const double z0 = drop.bodies[0].com().z();
  const double dt = 1.0 / 240.0;
  double worst_ballistic = 0.0;
  for (int i = 1; i <= 120; ++i) {
    drop = sim::step(drop, dt);
    const double t = i * dt;
    const double expected = z0 + 0.5 * t - 0.5 * 9.81 * t * t;
    const double fall = std::abs(expected - z0);
    if (fall > 0.0) worst_ballistic = std::max(worst_ballistic, std::abs(drop.bodies[0].com().z() - expected) / fall);
  }

  double worst_gain = 0.0;
  int runs = 0;
  long steps = 0;
  bool deterministic = true;
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const sim::WorldState w = taxonomy::random_drop(seed);
    sim::SettleParams params;
    params.max_time = 3.0;
    double previous = w.kinetic_energy() + w.potential_energy();
    std::vector<RigidTransform> first, second;
    sim::settle(w, params, [&](const sim::WorldState& s) {
      const double e = s.kinetic_energy() + s.potential_energy();
      worst_gain = std::max(worst_gain, (e - previous) / (1.0 + std::abs(previous)));
      previous = e;
      first.push_back(s.bodies[0].pose);
      ++steps;
    });
    sim::settle(w, params, [&](const sim::WorldState& s) { second.push_back(s.bodies[0].pose); });
    if (first.size() != second.size()) deterministic = false;
    for (std::size_t i = 0; deterministic && i < first.size(); ++i) {
      deterministic = first[i].rotation == second[i].rotation && first[i].translation == second[i].translation;
    }
    ++runs;
  }
  v.detail << "ballistic relative error " << worst_ballistic << "; " << runs << " settle runs, " << steps
           << " steps, max relative energy gain " << worst_gain << "; repeat runs bitwise identical: "
           << (deterministic ? "yes" : "no");
  v.require(worst_ballistic <= 0.01, "ballistic within 1%");
  v.require(worst_gain <= 1e-9, "energy never increases");
  v.require(deterministic, "bitwise determinism");
}

// ------------------------------------------------------------------ C5

void outcome_taxonomy(Verdict& v) {
  int coarse_ok = 0, fine_ok = 0, total = 0;
  for (const taxonomy::Case& c : taxonomy::cases()) {
    sim::SettleParams coarse;
    coarse.max_time = c.max_time;
    sim::SettleParams fine = coarse;
    fine.dt = 1e-4;
    const sim::OutcomeType a = sim::classify_outcome(c.world, sim::settle(c.world, coarse), coarse);
    const sim::OutcomeType b = sim::classify_outcome(c.world, sim::settle(c.world, fine), fine);
    coarse_ok += a == c.expected;
    fine_ok += b == c.expected;
    if (a != c.expected || b != c.expected) {
      v.detail << "'" << c.name << "' expected " << sim::to_string(c.expected) << " got "
               << sim::to_string(a) << "/" << sim::to_string(b) << "; ";
    }
    ++total;
  }
  v.detail << coarse_ok << "/" << total << " at dt 1/240, " << fine_ok << "/" << total << " at dt 1e-4";
  v.require(total == 12 && coarse_ok == total && fine_ok == total, "all 12 cases classified as designed");
}

// ------------------------------------------------------------------ C6

void alignment_efficacy(Verdict& v) {
  bench::GenerateOptions gen;
  gen.perturbation = bench::Perturbation::kPenetrate;
  double before = 0.0, after = 0.0;
  int halved = 0, monotone = 0;
  const int n = 50;
  for (int i = 0; i < n; ++i) {
    const bench::Scenario s = bench::generate_scenario(bench::Difficulty::kEasy, 6000 + i, gen);
    std::vector<geometry::Sdf> sdfs;
    for (const geometry::Mesh& m : bench::object_meshes(s)) sdfs.emplace_back(m);
    scene::PlacementState init;
    std::vector<RigidTransform> poses;
    for (const bench::ObjectSpec& o : s.objects) {
      init.objects.push_back(o.placement);
      poses.push_back(o.placement.transform());
    }
    const scene::PlacementResult r = scene::align_placement(s.motion.body, sdfs, init);
    std::vector<RigidTransform> aligned;
    for (const scene::ObjectPlacement& p : r.state.objects) aligned.push_back(p.transform());
    const double b = scene::sp3d(s.motion.body, sdfs, poses);
    const double a = scene::sp3d(s.motion.body, sdfs, aligned, scene::kPenetrationTolerance, r.state.human_offset);
    before += b;
    after += a;
    halved += a <= 0.5 * b;
    bool ok = true;
    for (std::size_t k = 1; k < r.trace.size(); ++k) ok = ok && r.trace[k] <= r.trace[k - 1];
    monotone += ok;
  }
  before /= n;
  after /= n;
  v.detail << n << " scenarios, mean SP-3D " << before << "% -> " << after << "%, halved individually in "
           << halved << "/" << n << ", non-increasing traces " << monotone << "/" << n;
  v.require(after <= 0.5 * before, "mean SP-3D at most half");
  v.require(monotone == n, "loss traces non-increasing");
}

// ------------------------------------------------------------------ C7

void refinement_efficacy(Verdict& v) {
  const auto t0 = Clock::now();
  bench::GenerateOptions gen;
  gen.perturbation = bench::Perturbation::kHover;
  gen.tall_back = true;
  const int n = 30;
  int base = 0, surface = 0, center = 0;
  for (int i = 0; i < n; ++i) {
    const bench::Scenario s = bench::generate_scenario(bench::Difficulty::kEasy, 7000 + i, gen);
    bench::BenchConfig config;
    config.align = false;
    config.refine_params.population = 16;
    config.refine_params.iterations = 8;
    config.refine = false;
    base += bench::run_scenario(s, 0, config).outcome == 4;
    config.refine = true;
    config.refine_mode = refine::SceneLossMode::kSurface;
    surface += bench::run_scenario(s, 0, config).outcome == 4;
    config.refine_mode = refine::SceneLossMode::kCenter;
    center += bench::run_scenario(s, 0, config).outcome == 4;
  }
  const double elapsed = seconds_since(t0);
  const double gain = 100.0 * (surface - base) / n;
  v.detail << n << " hovering sits, Type4 none " << base << ", surface " << surface << ", center " << center
           << " (+" << gain << " points), " << elapsed << " s";
  v.require(gain >= 25.0, "surface mode +25 points");
  v.require(surface > center, "surface beats center");
  v.require(elapsed < 300.0, "runtime < 5 min");
}

// ------------------------------------------------------------------ C8

void dsro_efficacy(Verdict& v) {
  const auto t0 = Clock::now();
  const auto conds = chair_conditions();
  const dsro::NoiseSchedule schedule = dsro::linear_schedule();
  dsro::Denoiser model(dsro::kShapeDim, {64, 64}, 8);
  dsro::pretrain(model, conds, dsro::FamilyModel{}, schedule, {2000, 128, 2e-3, 81});
  const double baseline = dsro::stability_rate(model, conds, schedule, 200, 82);
  dsro::TrainOptions opts;
  opts.steps = 20;
  opts.eval_every = 10;
  opts.seed = 83;
  const dsro::TrainResult first = dsro::train_dsro(model, conds, schedule, opts);
  const dsro::TrainResult second = dsro::train_dsro(model, conds, schedule, opts);
  const double trained = dsro::stability_rate(first.model, conds, schedule, 200, 82);
  const bool same = dsro::trace_csv(first.trace) == dsro::trace_csv(second.trace) && first.model == second.model;
  const double elapsed = seconds_since(t0);
  v.detail << "gravity stability over 200 fresh samples " << 100.0 * baseline << "% -> " << 100.0 * trained
           << "% after " << opts.steps << " steps (" << first.simulator_calls
           << " labels), trace reproducible: " << (same ? "yes" : "no") << ", " << elapsed << " s";
  v.require(trained - baseline >= 0.20, "+20 points");
  v.require(same, "bit-for-bit trace");
  v.require(elapsed < 900.0, "runtime < 15 min");
}

// ------------------------------------------------------------------ C9

void metric_identities(Verdict& v) {
  std::mt19937_64 rng(9);
  std::normal_distribution<double> g(0.0, 1.0);
  double worst_similar = 0.0;
  int violations = 0;
  for (int trial = 0; trial < 100; ++trial) {
    const MotionSequence ref = random_motion(rng, 3);
    MotionSequence copy = ref;
    for (auto& f : copy.body.frames) {
      const Mat3 r = so3_exp(Vec3(g(rng), g(rng), g(rng)));
      const double s = 0.5 + std::abs(g(rng));
      const Vec3 t(g(rng), g(rng), g(rng));
      for (Vec3& p : f) p = s * (r * p) + t;
    }
    worst_similar = std::max(worst_similar, refine::pa_mpjpe(copy, ref));
    const MotionSequence other = random_motion(rng, 3);
    if (refine::pa_mpjpe(other, ref) > refine::w_mpjpe(other, ref)) ++violations;
  }

  bench::BenchConfig config;
  config.tiers = {bench::Difficulty::kEasy, bench::Difficulty::kMedium};
  config.per_tier = 2;
  config.repeats = 2;
  config.seed = 9;
  config.refine = false;
  const bench::BenchResult result = bench::run_benchmark(bench::benchmark_scenarios(config), config);
  const std::vector<bench::RunRow> rows = bench::parse_rows_csv(bench::rows_csv(result.rows));
  const bool recomputed = bench::aggregate(rows, config.repeats, config.exclude_type1) == result.report;
  v.detail << "max pa-mpjpe of similar copies " << worst_similar << ", pa > w on " << violations
           << "/100 random pairs, report recomputed from CSV: " << (recomputed ? "exact" : "differs");
  v.require(worst_similar <= 1e-9, "pa-mpjpe zero for similarity copies");
  v.require(violations == 0, "pa-mpjpe <= w-mpjpe");
  v.require(recomputed, "report recomputable from CSV");
}

// ------------------------------------------------------------------ C10

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + PHYSLOOP_CLI + "\" " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

void round_trips(Verdict& v) {
  bool scene_ok = true, motion_ok = true;
  for (bench::Difficulty d : {bench::Difficulty::kEasy, bench::Difficulty::kMedium, bench::Difficulty::kHard}) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
      const bench::Scenario s = bench::generate_scenario(d, seed);
      const std::string text = io::scene_json(s);
      scene_ok = scene_ok && io::scene_json(io::parse_scene(text)) == text;
      const std::string m = io::motion_json(s.motion);
      motion_ok = motion_ok && io::motion_json(io::parse_motion(m)) == m;
    }
  }

  const fs::path root = fs::temp_directory_path() / "physloop_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);
  io::write_text(root / "bench.json",
                 "{\"tiers\": \"easy,medium\", \"per-tier\": 1, \"repeats\": 2, \"population\": 8, "
                 "\"iterations\": 2}\n");
  const std::string common = "--seed 5 --config \"" + (root / "bench.json").string() + "\"";
  const int a = run_cli(common + " --out-dir \"" + (root / "a").string() + "\" bench");
  const int b = run_cli(common + " --out-dir \"" + (root / "b").string() + "\" bench");
  bool cli_ok = a == 0 && b == 0;
  bool report_ok = false;
  if (cli_ok) {
    const std::string ra = io::read_text(root / "a" / "bench_report.json");
    const std::string rb = io::read_text(root / "b" / "bench_report.json");
    cli_ok = ra == rb && io::read_text(root / "a" / "bench_runs.csv") == io::read_text(root / "b" / "bench_runs.csv");
    report_ok = io::report_json(io::parse_report(ra)) == ra;
  }
  fs::remove_all(root);
  v.detail << "scene JSON " << (scene_ok ? "byte-exact" : "differs") << ", motion JSON "
           << (motion_ok ? "byte-exact" : "differs") << ", report JSON " << (report_ok ? "byte-exact" : "differs")
           << ", two CLI bench runs (exit " << a << ", " << b << ") " << (cli_ok ? "identical" : "differ");
  v.require(scene_ok && motion_ok && report_ok, "JSON round trips");
  v.require(cli_ok, "identical CLI reports");
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<void(Verdict&)>>> criteria = {
      {"solver recovers noise-free graphs", solver_recovery},
      {"gradient checks", gradient_checks},
      {"loss oracles", loss_oracles},
      {"simulator physics", simulator_physics},
      {"outcome taxonomy", outcome_taxonomy},
      {"alignment efficacy", alignment_efficacy},
      {"scene-targeted refinement efficacy", refinement_efficacy},
      {"dsro efficacy", dsro_efficacy},
      {"metric identities", metric_identities},
      {"round trips and determinism", round_trips},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      criteria[i].second(v);
    } catch (const std::exception& e) {
      v.pass = false;
      v.detail << " [exception: " << e.what() << "]";
    }
    failures += !v.pass;
    std::printf("%s %zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.str().c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
