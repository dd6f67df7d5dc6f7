#include "physloop/bench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>

#include "physloop/motion_templates.hpp"

namespace physloop::bench {

std::string to_string(Difficulty d) {
  switch (d) {
    case Difficulty::kEasy: return "easy";
    case Difficulty::kMedium: return "medium";
    case Difficulty::kHard: return "hard";
  }
  return "easy";
}

Difficulty difficulty_from_string(const std::string& name) {
  if (name == "easy") return Difficulty::kEasy;
  if (name == "medium") return Difficulty::kMedium;
  if (name == "hard") return Difficulty::kHard;
  throw ParseError("unknown difficulty '" + name + "' (expected easy, medium or hard)");
}

std::string to_string(Perturbation p) {
  switch (p) {
    case Perturbation::kNone: return "none";
    case Perturbation::kHover: return "hover";
    case Perturbation::kPenetrate: return "penetrate";
  }
  return "none";
}

Perturbation perturbation_from_string(const std::string& name) {
  if (name == "none") return Perturbation::kNone;
  if (name == "hover") return Perturbation::kHover;
  if (name == "penetrate") return Perturbation::kPenetrate;
  throw ParseError("unknown perturbation '" + name + "' (expected none, hover or penetrate)");
}

namespace {

dsro::ShapeParam noisy_shape(dsro::Family family, double noise, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  dsro::ShapeParam x = dsro::canonical_shape(family);
  for (int i = 0; i < dsro::kLegFrontLeft; ++i) x[i] = noise * g(rng);
  return x;
}

ObjectSpec shape_object(std::string name, dsro::Family family, dsro::ShapeParam x,
                        const RigidTransform& pose) {
  ObjectSpec o;
  o.name = std::move(name);
  o.family = family;
  o.shape = std::move(x);
  o.placement.yaw = std::atan2(pose.rotation(1, 0), pose.rotation(0, 0));
  o.placement.translation = pose.translation;
  return o;
}

}  // namespace

Scenario generate_scenario(Difficulty difficulty, std::uint64_t seed, const GenerateOptions& opts) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<std::uint64_t>(difficulty)));
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::normal_distribution<double> g(0.0, 1.0);

  Scenario s;
  s.difficulty = difficulty;
  s.seed = seed;
  char id[64];
  std::snprintf(id, sizeof id, "%s-%016llx", to_string(difficulty).c_str(),
                static_cast<unsigned long long>(seed));
  s.id = id;

  const double yaw = M_PI * u(rng);
  const RigidTransform chair_pose = RigidTransform::from_yaw(yaw, Vec3(0.5 * u(rng), 0.5 * u(rng), 0.0));
  dsro::ShapeParam chair = noisy_shape(dsro::Family::kChair, opts.shape_noise, rng);
  if (opts.tall_back) chair[dsro::kBackHeight] = 1.0 + 0.5 * g(rng);
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) < opts.leg_dropout) {
    chair[rng() % 2 == 0 ? dsro::kLegBackLeft : dsro::kLegBackRight] = -1.0;
  }
  s.objects.push_back(shape_object("chair", dsro::Family::kChair, chair, chair_pose));
  if (difficulty != Difficulty::kEasy) {
    const RigidTransform side = RigidTransform::from_yaw(0.0, Vec3(1.3, 0.3, 0.0));
    s.objects.push_back(shape_object("table", dsro::Family::kTable,
                                     noisy_shape(dsro::Family::kTable, opts.shape_noise, rng),
                                     chair_pose * side));
  }
  if (difficulty == Difficulty::kHard) {
    const RigidTransform side = RigidTransform::from_yaw(0.5 * u(rng), Vec3(-1.2, 0.2, 0.0));
    s.objects.push_back(shape_object("stool", dsro::Family::kChair,
                                     noisy_shape(dsro::Family::kChair, opts.shape_noise, rng),
                                     chair_pose * side));
  }
  s.contact_regions = {{0, 0}};  // the chair's seat slab

  const dsro::ShapeDims dims = dsro::decode_dims(chair, dsro::Family::kChair);
  const Vec3 seat_top = chair_pose.apply(Vec3(0.0, 0.0, dsro::top_height(dims)));
  s.reference = templates::sit_motion(seat_top, yaw, dims.depth);
  switch (opts.perturbation) {
    case Perturbation::kNone:
      s.motion = s.reference;
      break;
    case Perturbation::kHover:
      s.motion = templates::sit_motion(seat_top, yaw, dims.depth, templates::kHipClearance + opts.hover);
      break;
    case Perturbation::kPenetrate:
      // Depth error: the seated hips sink to the middle of the seat slab.
      s.motion = templates::sit_motion(seat_top, yaw, dims.depth, -0.5 * dims.thickness);
      break;
  }
  return s;
}

std::vector<geometry::Mesh> object_meshes(const Scenario& s) {
  std::vector<geometry::Mesh> out;
  for (const ObjectSpec& o : s.objects) {
    if (o.mesh_path.empty()) {
      out.push_back(dsro::decode_shape(o.shape, o.family));
    } else {
      std::filesystem::path p(o.mesh_path);
      if (p.is_relative()) p = s.base_dir / p;
      if (!std::filesystem::exists(p)) throw MissingAsset("mesh file not found: " + p.string());
      out.push_back(geometry::read_obj(p));
    }
  }
  return out;
}

sim::WorldState build_world(const Scenario& s, const std::vector<geometry::Mesh>& meshes) {
  if (meshes.size() != s.objects.size()) throw DimensionMismatch("one mesh per object expected");
  sim::WorldState w;
  for (std::size_t i = 0; i < meshes.size(); ++i) {
    auto mesh = std::make_shared<const geometry::Mesh>(meshes[i]);
    sim::Body b = sim::make_body(mesh, s.objects[i].placement.transform(), s.objects[i].mass);
    b.name = s.objects[i].name;
    b.mesh_id = static_cast<int>(i);
    w.bodies.push_back(std::move(b));
  }
  return w;
}

void BenchConfig::validate() const {
  if (tiers.empty()) throw InvalidArgument("bench needs at least one tier");
  if (per_tier < 1) throw InvalidArgument("bench needs n >= 1 scenarios per tier");
  if (repeats < 1) throw InvalidArgument("bench needs repeats >= 1");
  if (jitter < 0.0) throw InvalidArgument("jitter must be >= 0");
  refine_params.validate();
}

std::uint64_t run_seed(const std::string& scenario_id, int repeat) {
  std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
  for (unsigned char c : scenario_id) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return mix_seed(h, static_cast<std::uint64_t>(repeat));
}

namespace {

MotionSequence shifted(const MotionSequence& m, const Vec3& offset) {
  MotionSequence out = m;
  for (Keypoints& f : out.body.frames) {
    for (Vec3& p : f) p += offset;
  }
  return out;
}

std::vector<RigidTransform> poses_of(const std::vector<scene::ObjectPlacement>& placements) {
  std::vector<RigidTransform> out;
  for (const auto& p : placements) out.push_back(p.transform());
  return out;
}

}  // namespace

RunRow run_scenario(const Scenario& s, int repeat, const BenchConfig& config) {
  RunRow row;
  row.scenario = s.id;
  row.tier = s.difficulty;
  row.repeat = repeat;
  row.seed = run_seed(s.id, repeat);
  try {
    const std::vector<geometry::Mesh> meshes = object_meshes(s);
    Scenario placed = s;
    std::mt19937_64 rng(row.seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (ObjectSpec& o : placed.objects) {
      o.placement.translation += config.jitter * Vec3(u(rng), u(rng), 0.0);
      o.placement.yaw += config.jitter * u(rng);
    }

    row.gravity_stable = true;
    for (std::size_t i = 0; i < meshes.size(); ++i) {
      const bool ok = sim::gravity_stability(meshes[i], placed.objects[i].placement.transform(), config.settle);
      row.gravity_stable = row.gravity_stable && ok;
    }

    std::vector<geometry::Sdf> sdfs;
    for (const geometry::Mesh& m : meshes) sdfs.emplace_back(m);
    std::vector<scene::ObjectPlacement> placements;
    for (const ObjectSpec& o : placed.objects) placements.push_back(o.placement);
    row.sp3d_before = scene::sp3d(s.motion.body, sdfs, poses_of(placements));
    MotionSequence motion = s.motion;
    if (config.align) {
      scene::PlacementState init;
      init.objects = placements;
      const scene::PlacementResult r = scene::align_placement(s.motion.body, sdfs, init, config.align_params);
      for (std::size_t i = 0; i < placed.objects.size(); ++i) placed.objects[i].placement = r.state.objects[i];
      placements = r.state.objects;
      motion = shifted(s.motion, r.state.human_offset);
    }
    row.sp3d_after = scene::sp3d(motion.body, sdfs, poses_of(placements));

    sim::WorldState world = build_world(placed, meshes);
    if (config.refine) {
      refine::RefineParams params = config.refine_params;
      params.mode = config.refine_mode;
      const refine::RefineResult r =
          refine::refine_motion(motion, {world, s.contact_regions}, params, row.seed);
      motion = r.motion;
    }
    row.w_mpjpe_pre = refine::w_mpjpe(s.motion, s.reference);
    row.pa_mpjpe_pre = refine::pa_mpjpe(s.motion, s.reference);
    row.w_mpjpe_post = refine::w_mpjpe(motion, s.reference);
    row.pa_mpjpe_post = refine::pa_mpjpe(motion, s.reference);

    sim::KinematicHuman human;
    human.motion = motion;
    world.human = std::move(human);
    const sim::SettleOutcome outcome = sim::settle(world, config.settle);
    row.outcome = static_cast<int>(sim::classify_outcome(world, outcome, config.settle));
  } catch (const std::exception& e) {
    row.outcome = 2;
    row.note = e.what();
    std::replace(row.note.begin(), row.note.end(), '\n', ' ');
  }
  return row;
}

BenchReport aggregate(std::vector<RunRow> rows, int repeats, bool exclude_type1) {
  std::sort(rows.begin(), rows.end(), [](const RunRow& a, const RunRow& b) {
    return a.scenario != b.scenario ? a.scenario < b.scenario : a.repeat < b.repeat;
  });
  BenchReport report;
  report.repeats = repeats;
  report.exclude_type1 = exclude_type1;
  std::map<std::string, std::vector<const RunRow*>> by_tier;
  for (const RunRow& r : rows) {
    report.seeds.push_back(r.seed);
    by_tier[to_string(r.tier)].push_back(&r);
  }
  for (const auto& [name, tier_rows] : by_tier) {
    TierReport t;
    int gravity = 0;
    double sp3d = 0.0, wpre = 0.0, wpost = 0.0, papre = 0.0, papost = 0.0;
    for (const RunRow* r : tier_rows) {
      ++t.runs;
      if (r->outcome >= 1 && r->outcome <= 4) ++t.outcomes[r->outcome - 1];
      if (r->gravity_stable) ++gravity;
      sp3d += r->sp3d_after;
      wpre += r->w_mpjpe_pre;
      wpost += r->w_mpjpe_post;
      papre += r->pa_mpjpe_pre;
      papost += r->pa_mpjpe_post;
    }
    const int pool = exclude_type1 ? t.runs - t.outcomes[0] : t.runs;
    t.stability_hsi = pool > 0 ? 100.0 * t.outcomes[3] / pool : 0.0;
    t.stability_gravity = 100.0 * gravity / t.runs;
    t.sp3d = sp3d / t.runs;
    t.w_mpjpe_pre = wpre / t.runs;
    t.w_mpjpe_post = wpost / t.runs;
    t.pa_mpjpe_pre = papre / t.runs;
    t.pa_mpjpe_post = papost / t.runs;
    report.tiers[name] = t;
  }
  return report;
}

std::vector<Scenario> benchmark_scenarios(const BenchConfig& config) {
  std::vector<Scenario> out;
  for (Difficulty d : config.tiers) {
    for (int i = 0; i < config.per_tier; ++i) {
      out.push_back(generate_scenario(d, mix_seed(config.seed, static_cast<std::uint64_t>(i)), config.generate));
    }
  }
  return out;
}

BenchResult run_benchmark(const std::vector<Scenario>& scenarios, const BenchConfig& config) {
  config.validate();
  if (scenarios.empty()) throw InvalidArgument("bench needs at least one scenario");
  std::vector<const Scenario*> order;
  for (const Scenario& s : scenarios) order.push_back(&s);
  std::sort(order.begin(), order.end(), [](const Scenario* a, const Scenario* b) { return a->id < b->id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->id == order[i - 1]->id) throw InvalidArgument("duplicate scenario id " + order[i]->id);
  }
  BenchResult result;
  for (const Scenario* s : order) {
    for (int r = 0; r < config.repeats; ++r) result.rows.push_back(run_scenario(*s, r, config));
  }
  result.report = aggregate(result.rows, config.repeats, config.exclude_type1);
  return result;
}

namespace {

const char* kCsvHeader =
    "scenario,tier,repeat,seed,outcome,gravity_stable,sp3d_before,sp3d_after,w_mpjpe_pre,"
    "w_mpjpe_post,pa_mpjpe_pre,pa_mpjpe_post,note";

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string quote(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

std::vector<std::string> split_record(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        fields.back() += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) throw ParseError("runs CSV line " + std::to_string(line_no) + ": unterminated quote");
  return fields;
}

double parse_double(const std::string& s, std::size_t line_no) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || *end != '\0') {
    throw ParseError("runs CSV line " + std::to_string(line_no) + ": bad number '" + s + "'");
  }
  return v;
}

}  // namespace

std::string rows_csv(const std::vector<RunRow>& rows) {
  std::ostringstream os;
  os << kCsvHeader << '\n';
  for (const RunRow& r : rows) {
    os << quote(r.scenario) << ',' << to_string(r.tier) << ',' << r.repeat << ',' << r.seed << ','
       << r.outcome << ',' << (r.gravity_stable ? 1 : 0) << ',' << num(r.sp3d_before) << ','
       << num(r.sp3d_after) << ',' << num(r.w_mpjpe_pre) << ',' << num(r.w_mpjpe_post) << ','
       << num(r.pa_mpjpe_pre) << ',' << num(r.pa_mpjpe_post) << ',' << quote(r.note) << '\n';
  }
  return os.str();
}

std::vector<RunRow> parse_rows_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != kCsvHeader) throw ParseError("runs CSV: unexpected header");
  std::vector<RunRow> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = split_record(line, line_no);
    if (f.size() != 13) {
      throw ParseError("runs CSV line " + std::to_string(line_no) + ": expected 13 fields, got " +
                       std::to_string(f.size()));
    }
    RunRow r;
    r.scenario = f[0];
    r.tier = difficulty_from_string(f[1]);
    r.repeat = static_cast<int>(parse_double(f[2], line_no));
    char* end = nullptr;
    r.seed = std::strtoull(f[3].c_str(), &end, 10);
    if (f[3].empty() || *end != '\0') {
      throw ParseError("runs CSV line " + std::to_string(line_no) + ": bad seed '" + f[3] + "'");
    }
    r.outcome = static_cast<int>(parse_double(f[4], line_no));
    r.gravity_stable = f[5] == "1";
    r.sp3d_before = parse_double(f[6], line_no);
    r.sp3d_after = parse_double(f[7], line_no);
    r.w_mpjpe_pre = parse_double(f[8], line_no);
    r.w_mpjpe_post = parse_double(f[9], line_no);
    r.pa_mpjpe_pre = parse_double(f[10], line_no);
    r.pa_mpjpe_post = parse_double(f[11], line_no);
    r.note = f[12];
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace physloop::bench
