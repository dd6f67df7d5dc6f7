// physloop command line front end.
//
// Exit codes: 0 success, 2 bad arguments or config, 3 the run itself failed.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "physloop/bench.hpp"
#include "physloop/dsro.hpp"
#include "physloop/io.hpp"
#include "physloop/motion_refine.hpp"
#include "physloop/pointmap_align.hpp"
#include "physloop/scene_align.hpp"
#include "physloop/simulator.hpp"

namespace fs = std::filesystem;
using namespace physloop;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runs a validation step; any toolkit error becomes a config error.
template <class Fn>
void validated(Fn&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
}

struct Globals {
  std::uint64_t seed = 0;
  std::string out_dir = ".";
  std::string config;
};

fs::path out_path(const Globals& g, const std::string& name) { return fs::path(g.out_dir) / name; }

void write_out(const Globals& g, const std::string& name, const std::string& text) {
  io::write_text(out_path(g, name), text);
  std::cout << "wrote " << out_path(g, name).string() << "\n";
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string num17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------- pmalign

struct PmalignArgs {
  int views = 4;
  double noise = 0.0;
  int height = 16;
  int width = 16;
  std::string topology = "ring";
  int max_iters = 500;
  std::string graph;
};

int run_pmalign(const Globals& g, const PmalignArgs& a) {
  pm::AlignOptions opts;
  opts.max_iters = a.max_iters;
  validated([&] {
    if (a.graph.empty() && (a.views < 2 || a.height < 1 || a.width < 1 || a.noise < 0.0)) {
      throw InvalidArgument("pmalign needs views >= 2, positive image size and noise >= 0");
    }
    if (a.max_iters < 0) throw InvalidArgument("max-iters must be >= 0");
  });

  pm::PairGraph graph;
  std::optional<pm::AlignmentState> truth;
  if (!a.graph.empty()) {
    graph = io::parse_graph(io::read_text(a.graph));
  } else {
    auto synth = pm::synth_graph(a.views, a.height, a.width, a.noise, g.seed,
                                 a.topology == "complete" ? pm::Topology::kComplete : pm::Topology::kRing);
    graph = std::move(synth.graph);
    truth = std::move(synth.truth);
    write_out(g, "pmalign_graph.json", io::graph_json(graph));
  }
  const pm::AlignResult r = pm::global_align(graph, opts);

  std::ostringstream csv;
  csv << "iteration,residual\n";
  for (std::size_t i = 0; i < r.trace.size(); ++i) csv << i << ',' << num17(r.trace[i]) << '\n';
  write_out(g, "pmalign_trace.csv", csv.str());
  write_out(g, "pmalign_state.json", io::state_json(r.state));

  std::cout << "residual " << fmt(r.trace.front()) << " -> " << fmt(r.trace.back()) << " after "
            << r.iterations << " iterations" << (r.converged ? " (converged)" : "") << "\n";
  if (truth) std::cout << "max relative depth error " << fmt(pm::aligned_depth_error(r.state, *truth)) << "\n";
  return 0;
}

// ------------------------------------------------------------------ align

struct AlignArgs {
  std::string scene;
  int max_iters = 100;
  bool fixed_human = false;
  bool fixed_objects = false;
};

std::vector<RigidTransform> poses_of(const std::vector<scene::ObjectPlacement>& placements) {
  std::vector<RigidTransform> out;
  for (const auto& p : placements) out.push_back(p.transform());
  return out;
}

int run_align(const Globals& g, const AlignArgs& a) {
  scene::PlacementOptions opts;
  opts.max_iters = a.max_iters;
  opts.move_human = !a.fixed_human;
  opts.move_objects = !a.fixed_objects;
  validated([&] {
    if (a.max_iters < 0) throw InvalidArgument("max-iters must be >= 0");
  });

  bench::Scenario s = io::load_scene(a.scene);
  const auto meshes = bench::object_meshes(s);
  std::vector<geometry::Sdf> sdfs(meshes.begin(), meshes.end());
  scene::PlacementState init;
  for (const auto& o : s.objects) init.objects.push_back(o.placement);

  const double before = scene::sp3d(s.motion.body, sdfs, poses_of(init.objects));
  const scene::PlacementResult r = scene::align_placement(s.motion.body, sdfs, init, opts);
  const double after = scene::sp3d(s.motion.body, sdfs, poses_of(r.state.objects), scene::kPenetrationTolerance,
                                   r.state.human_offset);

  std::ostringstream csv;
  csv << "step,loss\n";
  for (std::size_t i = 0; i < r.trace.size(); ++i) csv << i << ',' << num17(r.trace[i]) << '\n';
  write_out(g, "align_trace.csv", csv.str());
  write_out(g, "align_placement.json", io::placement_json(r.state));

  for (std::size_t i = 0; i < s.objects.size(); ++i) s.objects[i].placement = r.state.objects[i];
  for (Keypoints& f : s.motion.body.frames) {
    for (Vec3& p : f) p += r.state.human_offset;
  }
  write_out(g, "align_scene.json", io::scene_json(s));
  std::cout << "SP-3D " << fmt(before) << "% -> " << fmt(after) << "%, loss " << fmt(r.trace.front()) << " -> "
            << fmt(r.trace.back()) << "\n";
  return 0;
}

// --------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string scene;
  std::string motion;
  bool trajectory = false;
  double jitter = 0.0;
  double max_time = 10.0;
  double dt = 1.0 / 240.0;
};

int run_simulate(const Globals& g, const SimulateArgs& a) {
  sim::SettleParams params;
  params.max_time = a.max_time;
  params.dt = a.dt;
  validated([&] {
    if (!(a.dt > 0.0) || !(a.max_time > 0.0) || a.jitter < 0.0) {
      throw InvalidArgument("simulate needs dt > 0, max-time > 0 and jitter >= 0");
    }
  });

  bench::Scenario s = io::load_scene(a.scene);
  if (!a.motion.empty()) s.motion = io::load_motion(a.motion);
  std::mt19937_64 rng(g.seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& o : s.objects) {
    o.placement.translation += a.jitter * Vec3(u(rng), u(rng), 0.0);
    o.placement.yaw += a.jitter * u(rng);
  }
  sim::WorldState world = bench::build_world(s, bench::object_meshes(s));
  sim::KinematicHuman human;
  human.motion = s.motion;
  world.human = std::move(human);

  std::ostringstream traj;
  traj << "time,body,x,y,z,qw,qx,qy,qz\n";
  sim::StepObserver observer;
  if (a.trajectory) {
    observer = [&](const sim::WorldState& w) {
      for (const sim::Body& b : w.bodies) {
        const Eigen::Quaterniond q(b.pose.rotation);
        traj << num17(w.time) << ',' << b.name << ',' << num17(b.pose.translation.x()) << ','
             << num17(b.pose.translation.y()) << ',' << num17(b.pose.translation.z()) << ',' << num17(q.w())
             << ',' << num17(q.x()) << ',' << num17(q.y()) << ',' << num17(q.z()) << '\n';
      }
    };
  }
  const sim::SettleOutcome outcome = sim::settle(world, params, observer);
  const sim::OutcomeType type = sim::classify_outcome(world, outcome, params);
  write_out(g, "simulate_outcome.json", io::outcome_json(outcome, type));
  if (a.trajectory) write_out(g, "simulate_trajectory.csv", traj.str());
  std::cout << sim::to_string(type) << (outcome.stabilized ? ", settled at t=" + fmt(outcome.settle_time) + " s"
                                                           : ", did not settle")
            << "\n";
  return 0;
}

// ----------------------------------------------------------------- refine

struct RefineArgs {
  std::string scene;
  std::string motion;
  std::string mode = "surface";
  int population = 64;
  int iterations = 30;
  double elite = 0.1;
  bool no_simulate = false;
};

int run_refine(const Globals& g, const RefineArgs& a) {
  refine::RefineParams params;
  params.mode = refine::scene_loss_mode_from_string(a.mode);
  params.population = a.population;
  params.iterations = a.iterations;
  params.elite_fraction = a.elite;
  params.simulate = !a.no_simulate;
  validated([&] { params.validate(); });

  bench::Scenario s = io::load_scene(a.scene);
  const MotionSequence input = a.motion.empty() ? s.motion : io::load_motion(a.motion);
  const sim::WorldState world = bench::build_world(s, bench::object_meshes(s));
  const refine::RefineResult r = refine::refine_motion(input, {world, s.contact_regions}, params, g.seed);

  std::ostringstream csv;
  csv << "iteration,best_score\n";
  for (std::size_t i = 0; i < r.score_trace.size(); ++i) csv << i << ',' << num17(r.score_trace[i]) << '\n';
  write_out(g, "refine_trace.csv", csv.str());
  write_out(g, "refine_motion.json", io::motion_json(r.motion));
  std::cout << "score " << fmt(r.input_score.total) << " -> " << fmt(r.best_score.total) << " (scene "
            << fmt(r.input_score.scene) << " -> " << fmt(r.best_score.scene) << ")";
  if (r.blowups > 0) std::cout << ", " << r.blowups << " candidates blew up";
  std::cout << "\n";
  return 0;
}

// ------------------------------------------------------------- dsro-train

struct DsroArgs {
  std::string family = "chair";
  std::vector<int> hidden{64, 64};
  int pretrain_steps = 2000;
  int steps = 40;
  int batch = 64;
  double lr = 5e-4;
  int eval_every = 10;
  int eval_samples = 64;
  int samples = 200;
  std::string labels = "full";
  std::string init;
};

std::vector<dsro::Condition> family_conditions(dsro::Family family) {
  std::vector<dsro::Condition> out;
  const std::vector<double> heights =
      family == dsro::Family::kChair ? std::vector<double>{0.42, 0.45, 0.48} : std::vector<double>{0.7, 0.75, 0.8};
  for (double h : heights) {
    for (bool occluded : {false, true}) out.push_back({family, h, occluded});
  }
  return out;
}

int run_dsro(const Globals& g, const DsroArgs& a) {
  dsro::TrainOptions opts;
  opts.steps = a.steps;
  opts.batch = a.batch;
  opts.lr = a.lr;
  opts.eval_every = a.eval_every;
  opts.eval_samples = a.eval_samples;
  opts.seed = g.seed;
  opts.label_mode = a.labels == "gravity" ? dsro::LabelMode::kGravityOnly : dsro::LabelMode::kFull;
  validated([&] {
    if (a.steps < 0 || a.batch < 1 || !(a.lr > 0.0) || a.eval_every < 1 || a.eval_samples < 1 ||
        a.samples < 0 || a.pretrain_steps < 0) {
      throw InvalidArgument("dsro-train needs steps >= 0, batch >= 1, lr > 0 and positive eval sizes");
    }
    for (int h : a.hidden) {
      if (h < 1) throw InvalidArgument("hidden layer sizes must be >= 1");
    }
  });

  const dsro::Family family = dsro::family_from_string(a.family);
  const auto conds = family_conditions(family);
  const dsro::NoiseSchedule schedule = dsro::linear_schedule();
  dsro::Denoiser model;
  if (!a.init.empty()) {
    model = dsro::load_denoiser(a.init);
  } else {
    model = dsro::Denoiser(dsro::kShapeDim, a.hidden, g.seed);
    dsro::pretrain(model, conds, dsro::FamilyModel{}, schedule,
                   {a.pretrain_steps, 128, 2e-3, mix_seed(g.seed, 1)});
    dsro::save_denoiser(model, out_path(g, "dsro_pretrained.pldn"));
  }
  const std::uint64_t eval_seed = mix_seed(g.seed, 2);
  if (a.samples > 0) {
    std::cout << "baseline stability " << fmt(dsro::stability_rate(model, conds, schedule, a.samples, eval_seed))
              << "\n";
  }
  const dsro::TrainResult r = dsro::train_dsro(model, conds, schedule, opts);
  write_out(g, "dsro_trace.csv", dsro::trace_csv(r.trace));
  dsro::save_denoiser(r.model, out_path(g, "dsro_model.pldn"));
  std::cout << "wrote " << out_path(g, "dsro_model.pldn").string() << "\n";
  if (a.samples > 0) {
    std::cout << "trained stability " << fmt(dsro::stability_rate(r.model, conds, schedule, a.samples, eval_seed))
              << " (" << r.simulator_calls << " simulator calls, " << r.cache_hits << " cache hits)\n";
  }
  return 0;
}

// -------------------------------------------------------------- gen/bench

struct GenArgs {
  std::string perturb = "none";
  double hover = 0.05;
  double shape_noise = 0.5;
  double leg_dropout = 0.0;
  bool tall_back = false;
};

bench::GenerateOptions generate_options(const GenArgs& a) {
  bench::GenerateOptions o;
  o.perturbation = bench::perturbation_from_string(a.perturb);
  o.hover = a.hover;
  o.shape_noise = a.shape_noise;
  o.leg_dropout = a.leg_dropout;
  o.tall_back = a.tall_back;
  if (o.hover < 0.0 || o.shape_noise < 0.0 || o.leg_dropout < 0.0 || o.leg_dropout > 1.0) {
    throw InvalidArgument("need hover >= 0, shape-noise >= 0 and leg-dropout in [0, 1]");
  }
  return o;
}

void add_generate_flags(CLI::App* sub, GenArgs& a) {
  sub->add_option("--perturb", a.perturb, "none, hover or penetrate")
      ->check(CLI::IsMember({"none", "hover", "penetrate"}));
  sub->add_option("--hover", a.hover, "hip lift for hover scenes (m)");
  sub->add_option("--shape-noise", a.shape_noise, "std of the standardized furniture shape");
  sub->add_option("--leg-dropout", a.leg_dropout, "chance that a rear chair leg is missing");
  sub->add_flag("--tall-back", a.tall_back, "chairs get a tall backrest");
}

struct GenTierArgs {
  std::string tier = "easy";
  int count = 1;
};

int run_gen(const Globals& g, const GenTierArgs& t, const GenArgs& a) {
  bench::GenerateOptions opts;
  validated([&] {
    opts = generate_options(a);
    if (t.count < 1) throw InvalidArgument("count must be >= 1");
  });
  const bench::Difficulty d = bench::difficulty_from_string(t.tier);
  for (int i = 0; i < t.count; ++i) {
    const bench::Scenario s = bench::generate_scenario(d, mix_seed(g.seed, static_cast<std::uint64_t>(i)), opts);
    write_out(g, s.id + ".json", io::scene_json(s));
  }
  return 0;
}

struct BenchArgs {
  std::vector<std::string> tiers{"easy", "medium", "hard"};
  int per_tier = 4;
  int repeats = 15;
  bool no_align = false;
  bool no_refine = false;
  std::string mode = "surface";
  int population = 64;
  int iterations = 30;
  double jitter = 0.002;
  bool exclude_type1 = false;
  std::vector<std::string> scenes;
};

int run_bench(const Globals& g, const BenchArgs& b, const GenArgs& a) {
  bench::BenchConfig config;
  validated([&] {
    config.tiers.clear();
    for (const auto& t : b.tiers) config.tiers.push_back(bench::difficulty_from_string(t));
    config.per_tier = b.per_tier;
    config.repeats = b.repeats;
    config.seed = g.seed;
    config.align = !b.no_align;
    config.refine = !b.no_refine;
    config.refine_mode = refine::scene_loss_mode_from_string(b.mode);
    config.refine_params.population = b.population;
    config.refine_params.iterations = b.iterations;
    config.jitter = b.jitter;
    config.exclude_type1 = b.exclude_type1;
    config.generate = generate_options(a);
    config.validate();
  });

  std::vector<bench::Scenario> scenarios;
  if (b.scenes.empty()) {
    scenarios = bench::benchmark_scenarios(config);
  } else {
    for (const auto& path : b.scenes) scenarios.push_back(io::load_scene(path));
  }
  const bench::BenchResult r = bench::run_benchmark(scenarios, config);
  write_out(g, "bench_runs.csv", bench::rows_csv(r.rows));
  write_out(g, "bench_report.json", io::report_json(r.report));
  for (const auto& [name, t] : r.report.tiers) {
    std::cout << name << ": " << t.runs << " runs, Stability-HSI " << fmt(t.stability_hsi) << "%, gravity "
              << fmt(t.stability_gravity) << "%, SP-3D " << fmt(t.sp3d) << "%, W-MPJPE " << fmt(t.w_mpjpe_post)
              << " m, types " << t.outcomes[0] << "/" << t.outcomes[1] << "/" << t.outcomes[2] << "/"
              << t.outcomes[3] << "\n";
  }
  return 0;
}

// ----------------------------------------------------------------- config

std::vector<std::string> config_values(const nlohmann::json& v, const std::string& key) {
  if (v.is_string()) return {v.get<std::string>()};
  if (v.is_boolean()) return {v.get<bool>() ? "true" : "false"};
  if (v.is_number()) return {v.dump()};
  if (v.is_array()) {
    std::vector<std::string> out;
    for (const auto& e : v) {
      if (e.is_array() || e.is_object()) throw ConfigError("config key \"" + key + "\": nested arrays not allowed");
      const auto inner = config_values(e, key);
      out.insert(out.end(), inner.begin(), inner.end());
    }
    return out;
  }
  throw ConfigError("config key \"" + key + "\": unsupported value");
}

// Flat JSON object keyed by long option names (without dashes) of the
// global app or the chosen subcommand. Returns extra arguments for options
// that were not given on the command line.
std::pair<std::vector<std::string>, std::vector<std::string>> config_arguments(const std::string& path,
                                                                               CLI::App& app, CLI::App& sub) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(io::read_text(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  } catch (const Error& e) {
    throw ConfigError(e.what());
  }
  if (!j.is_object()) throw ConfigError(path + ": expected a JSON object");
  std::vector<std::string> global_args, sub_args;
  for (auto it = j.begin(); it != j.end(); ++it) {
    const std::string name = "--" + it.key();
    if (it.key() == "config") throw ConfigError(path + ": \"config\" cannot be set from a config file");
    CLI::Option* opt = sub.get_option_no_throw(name);
    bool global = false;
    if (opt == nullptr) {
      opt = app.get_option_no_throw(name);
      global = true;
    }
    if (opt == nullptr) {
      throw ConfigError(path + ": unknown key \"" + it.key() + "\" for '" + sub.get_name() + "'");
    }
    if (opt->count() > 0) continue;  // command line wins
    auto& args = global ? global_args : sub_args;
    for (const auto& v : config_values(it.value(), it.key())) args.push_back(name + "=" + v);
  }
  return {global_args, sub_args};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"physloop: physics-in-the-loop human-scene interaction toolkit"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "master seed")->capture_default_str();
  app.add_option("--out-dir", g.out_dir, "directory for output files")->capture_default_str();
  app.add_option("--config", g.config, "JSON file with option values");

  PmalignArgs pa;
  auto* pmalign = app.add_subcommand("pmalign", "global alignment of pairwise point maps");
  pmalign->add_option("--views", pa.views, "synthetic views")->capture_default_str();
  pmalign->add_option("--noise", pa.noise, "point-map noise std (m)")->capture_default_str();
  pmalign->add_option("--height", pa.height, "point-map rows")->capture_default_str();
  pmalign->add_option("--width", pa.width, "point-map columns")->capture_default_str();
  pmalign->add_option("--topology", pa.topology, "ring or complete")->check(CLI::IsMember({"ring", "complete"}));
  pmalign->add_option("--max-iters", pa.max_iters, "optimizer iterations")->capture_default_str();
  pmalign->add_option("--graph", pa.graph, "pair graph JSON instead of a synthetic one");

  AlignArgs aa;
  auto* align = app.add_subcommand("align", "align object placements to the human motion");
  align->add_option("--scene", aa.scene, "scene JSON")->required();
  align->add_option("--max-iters", aa.max_iters, "line-search iterations")->capture_default_str();
  align->add_flag("--fixed-human", aa.fixed_human, "do not translate the human");
  align->add_flag("--fixed-objects", aa.fixed_objects, "do not move the objects");

  SimulateArgs sa;
  auto* simulate = app.add_subcommand("simulate", "settle a scene with its motion and classify the outcome");
  simulate->add_option("--scene", sa.scene, "scene JSON")->required();
  simulate->add_option("--motion", sa.motion, "motion JSON replacing the scene's motion");
  simulate->add_flag("--trajectory", sa.trajectory, "also write a per-step pose CSV");
  simulate->add_option("--jitter", sa.jitter, "seeded placement jitter (m)")->capture_default_str();
  simulate->add_option("--max-time", sa.max_time, "simulated seconds")->capture_default_str();
  simulate->add_option("--dt", sa.dt, "time step (s)")->capture_default_str();

  RefineArgs ra;
  auto* refine_cmd = app.add_subcommand("refine", "simulation-in-the-loop motion refinement");
  refine_cmd->add_option("--scene", ra.scene, "scene JSON")->required();
  refine_cmd->add_option("--motion", ra.motion, "motion JSON (default: the scene's motion)");
  refine_cmd->add_option("--mode", ra.mode, "surface or center")->check(CLI::IsMember({"surface", "center"}));
  refine_cmd->add_option("--population", ra.population, "CEM population")->capture_default_str();
  refine_cmd->add_option("--iterations", ra.iterations, "CEM iterations")->capture_default_str();
  refine_cmd->add_option("--elite", ra.elite, "elite fraction")->capture_default_str();
  refine_cmd->add_flag("--no-simulate", ra.no_simulate, "score against static object poses");

  DsroArgs da;
  auto* dsro_cmd = app.add_subcommand("dsro-train", "pretrain a shape denoiser and fine-tune it with DSRO");
  dsro_cmd->add_option("--family", da.family, "chair or table")->check(CLI::IsMember({"chair", "table"}));
  dsro_cmd->add_option("--hidden", da.hidden, "hidden layer sizes")->delimiter(',');
  dsro_cmd->add_option("--pretrain-steps", da.pretrain_steps, "denoising pretraining steps")->capture_default_str();
  dsro_cmd->add_option("--steps", da.steps, "DSRO steps")->capture_default_str();
  dsro_cmd->add_option("--batch", da.batch, "DSRO batch size")->capture_default_str();
  dsro_cmd->add_option("--lr", da.lr, "DSRO learning rate")->capture_default_str();
  dsro_cmd->add_option("--eval-every", da.eval_every, "trace interval (steps)")->capture_default_str();
  dsro_cmd->add_option("--eval-samples", da.eval_samples, "samples per trace row")->capture_default_str();
  dsro_cmd->add_option("--samples", da.samples, "samples for the before/after rates, 0 to skip")
      ->capture_default_str();
  dsro_cmd->add_option("--labels", da.labels, "full or gravity")->check(CLI::IsMember({"full", "gravity"}));
  dsro_cmd->add_option("--init", da.init, "start from this PLDN record instead of pretraining");

  GenTierArgs ga;
  GenArgs gen_opts;
  auto* gen = app.add_subcommand("gen", "write procedural scenes");
  gen->add_option("--tier", ga.tier, "easy, medium or hard")->check(CLI::IsMember({"easy", "medium", "hard"}));
  gen->add_option("--count", ga.count, "number of scenes")->capture_default_str();
  add_generate_flags(gen, gen_opts);

  BenchArgs ba;
  GenArgs bench_gen;
  auto* bench_cmd = app.add_subcommand("bench", "run the seeded benchmark");
  bench_cmd->add_option("--tiers", ba.tiers, "tiers to generate")
      ->delimiter(',')
      ->check(CLI::IsMember({"easy", "medium", "hard"}));
  bench_cmd->add_option("--per-tier", ba.per_tier, "scenes per tier")->capture_default_str();
  bench_cmd->add_option("--repeats", ba.repeats, "seeded runs per scene")->capture_default_str();
  bench_cmd->add_flag("--no-align", ba.no_align, "skip placement alignment");
  bench_cmd->add_flag("--no-refine", ba.no_refine, "skip motion refinement");
  bench_cmd->add_option("--mode", ba.mode, "surface or center")->check(CLI::IsMember({"surface", "center"}));
  bench_cmd->add_option("--population", ba.population, "CEM population")->capture_default_str();
  bench_cmd->add_option("--iterations", ba.iterations, "CEM iterations")->capture_default_str();
  bench_cmd->add_option("--jitter", ba.jitter, "per-run placement jitter (m)")->capture_default_str();
  bench_cmd->add_flag("--exclude-type1", ba.exclude_type1, "drop Type1 runs from the Stability-HSI pool");
  bench_cmd->add_option("--scenes", ba.scenes, "scene JSON files instead of generated scenes");
  add_generate_flags(bench_cmd, bench_gen);

  std::vector<std::string> args;
  for (int i = argc - 1; i > 0; --i) args.emplace_back(argv[i]);  // CLI11 wants them reversed
  try {
    app.parse(std::vector<std::string>(args));
    if (!g.config.empty()) {
      CLI::App* sub = app.get_subcommands().front();
      auto [global_args, sub_args] = config_arguments(g.config, app, *sub);
      if (!global_args.empty() || !sub_args.empty()) {
        // Re-parse with the config values appended.
        // Global values go first, subcommand values last so the
        // subcommand picks them up.
        std::vector<std::string> merged = global_args;
        merged.insert(merged.end(), args.rbegin(), args.rend());
        merged.insert(merged.end(), sub_args.begin(), sub_args.end());
        app.clear();
        app.parse(std::vector<std::string>(merged.rbegin(), merged.rend()));
      }
    }
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  }

  try {
    fs::create_directories(g.out_dir);
    if (*pmalign) return run_pmalign(g, pa);
    if (*align) return run_align(g, aa);
    if (*simulate) return run_simulate(g, sa);
    if (*refine_cmd) return run_refine(g, ra);
    if (*dsro_cmd) return run_dsro(g, da);
    if (*gen) return run_gen(g, ga, gen_opts);
    if (*bench_cmd) return run_bench(g, ba, bench_gen);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRun;
  }
  return kExitRun;
}
