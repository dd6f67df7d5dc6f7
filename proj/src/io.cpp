#include "physloop/io.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace physloop::io {

using json = nlohmann::json;

namespace {

// Strict view of a parsed value. keys() rejects unknown keys up front,
// finish() checks that every key was read, and type errors name the path.
class Node {
 public:
  Node(const json& j, std::string path) : j_(&j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }

  Node operator[](const std::string& key) {
    expect_object();
    auto it = j_->find(key);
    if (it == j_->end()) fail("missing key \"" + key + "\"");
    used_.insert(key);
    return Node(*it, path_ + "." + key);
  }

  Node& keys(std::initializer_list<const char*> allowed) {
    expect_object();
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; })) {
        throw ParseError("unknown key \"" + it.key() + "\" at " + path_ + "." + it.key());
      }
    }
    return *this;
  }

  void finish() const {
    expect_object();
    for (auto it = j_->begin(); it != j_->end(); ++it) {
      if (!used_.count(it.key())) {
        throw ParseError("unknown key \"" + it.key() + "\" at " + path_ + "." + it.key());
      }
    }
  }

  std::vector<Node> items() const {
    if (!j_->is_array()) fail("expected an array");
    std::vector<Node> out;
    for (std::size_t i = 0; i < j_->size(); ++i) {
      out.emplace_back((*j_)[i], path_ + "[" + std::to_string(i) + "]");
    }
    return out;
  }

  double number() const {
    if (!j_->is_number()) fail("expected a number");
    return j_->get<double>();
  }
  int integer() const {
    if (!j_->is_number_integer()) fail("expected an integer");
    const auto v = j_->get<std::int64_t>();
    if (v < std::numeric_limits<int>::min() || v > std::numeric_limits<int>::max()) fail("integer out of range");
    return static_cast<int>(v);
  }
  std::uint64_t unsigned64() const {
    if (!j_->is_number_unsigned()) fail("expected a non-negative integer");
    return j_->get<std::uint64_t>();
  }
  bool boolean() const {
    if (!j_->is_boolean()) fail("expected true or false");
    return j_->get<bool>();
  }
  std::string string() const {
    if (!j_->is_string()) fail("expected a string");
    return j_->get<std::string>();
  }

  Vec3 vec3() const {
    const auto v = items();
    if (v.size() != 3) fail("expected 3 numbers");
    return {v[0].number(), v[1].number(), v[2].number()};
  }

  std::vector<double> numbers() const {
    std::vector<double> out;
    for (const Node& n : items()) out.push_back(n.number());
    return out;
  }

  std::vector<int> integers() const {
    std::vector<int> out;
    for (const Node& n : items()) out.push_back(n.integer());
    return out;
  }

  std::vector<std::string> strings() const {
    std::vector<std::string> out;
    for (const Node& n : items()) out.push_back(n.string());
    return out;
  }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(path_ + ": " + what); }

 private:
  void expect_object() const {
    if (!j_->is_object()) fail("expected an object");
  }

  const json* j_;
  std::string path_;
  std::set<std::string> used_;
};

json parse_text(const std::string& text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("invalid JSON: ") + e.what());
  }
}

// Parses the document and checks its schema version.
json parse_document(const std::string& text) {
  json j = parse_text(text);
  Node root(j, "$");
  const Node schema = root["schema"];
  const int version = schema.integer();
  if (version != kSchemaVersion) {
    throw SchemaVersionMismatch("document schema " + std::to_string(version) + ", this build reads " +
                                std::to_string(kSchemaVersion));
  }
  return j;
}

std::string dump(const json& j) {
  return j.dump(2) + "\n";
}

json finite(double v, const char* what) {
  if (!std::isfinite(v)) throw InvalidArgument(std::string("cannot serialize non-finite ") + what);
  return v;
}

json vec3(const Vec3& v) {
  return json::array({finite(v.x(), "coordinate"), finite(v.y(), "coordinate"), finite(v.z(), "coordinate")});
}

json numbers(const std::vector<double>& v, const char* what) {
  json a = json::array();
  for (double x : v) a.push_back(finite(x, what));
  return a;
}

json transform(const RigidTransform& t) {
  json r = json::array();
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) r.push_back(finite(t.rotation(i, k), "rotation"));
  }
  return {{"rotation", r}, {"translation", vec3(t.translation)}};
}

RigidTransform transform(Node n) {
  n.keys({"rotation", "translation"});
  RigidTransform t;
  const auto r = n["rotation"].numbers();
  if (r.size() != 9) n.fail("rotation needs 9 numbers (row-major)");
  for (int i = 0; i < 3; ++i) {
    for (int k = 0; k < 3; ++k) t.rotation(i, k) = r[3 * i + k];
  }
  t.translation = n["translation"].vec3();
  n.finish();
  return t;
}

// Motion fields without the schema key.
json motion_body(const MotionSequence& m) {
  json bones = json::array();
  for (const Bone& b : m.body.skeleton.bones) {
    bones.push_back({{"a", b.a}, {"b", b.b}, {"radius", finite(b.radius, "bone radius")}});
  }
  json frames = json::array();
  for (const Keypoints& f : m.body.frames) {
    json frame = json::array();
    for (const Vec3& p : f) frame.push_back(vec3(p));
    frames.push_back(std::move(frame));
  }
  return {{"rate_hz", finite(m.rate_hz, "rate")},
          {"root", m.root},
          {"skeleton",
           {{"names", m.body.skeleton.names}, {"part_of", m.body.skeleton.part_of}, {"bones", bones}}},
          {"frames", frames},
          {"contacts", m.contact_keypoints}};
}

MotionSequence motion_body(Node& n) {
  MotionSequence m;
  m.rate_hz = n["rate_hz"].number();
  m.root = n["root"].integer();
  Node sk = n["skeleton"];
  sk.keys({"names", "part_of", "bones"});
  m.body.skeleton.names = sk["names"].strings();
  m.body.skeleton.part_of = sk["part_of"].strings();
  for (Node b : sk["bones"].items()) {
    b.keys({"a", "b", "radius"});
    Bone bone;
    bone.a = b["a"].integer();
    bone.b = b["b"].integer();
    bone.radius = b["radius"].number();
    b.finish();
    m.body.skeleton.bones.push_back(bone);
  }
  sk.finish();
  for (const Node& f : n["frames"].items()) {
    Keypoints frame;
    for (const Node& p : f.items()) frame.push_back(p.vec3());
    m.body.frames.push_back(std::move(frame));
  }
  for (const Node& c : n["contacts"].items()) m.contact_keypoints.push_back(c.integers());
  try {
    m.validate();
  } catch (const Error& e) {
    n.fail(e.what());
  }
  return m;
}

json placement(const scene::ObjectPlacement& p) {
  return {{"yaw", finite(p.yaw, "yaw")}, {"translation", vec3(p.translation)}};
}

scene::ObjectPlacement placement(Node n) {
  n.keys({"yaw", "translation"});
  scene::ObjectPlacement p;
  p.yaw = n["yaw"].number();
  p.translation = n["translation"].vec3();
  n.finish();
  return p;
}

template <class Fn>
auto guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const json::exception& e) {
    throw ParseError(std::string("malformed document: ") + e.what());
  }
}

}  // namespace

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw MissingAsset("cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InvalidArgument("cannot write " + path.string());
  out << text;
  if (!out) throw InvalidArgument("write failed for " + path.string());
}

std::string scene_json(const bench::Scenario& s) {
  json objects = json::array();
  for (const bench::ObjectSpec& o : s.objects) {
    std::vector<double> shape(o.shape.data(), o.shape.data() + o.shape.size());
    objects.push_back({{"name", o.name},
                       {"family", dsro::to_string(o.family)},
                       {"shape", numbers(shape, "shape entry")},
                       {"mesh_path", o.mesh_path},
                       {"placement", placement(o.placement)},
                       {"mass", finite(o.mass, "mass")}});
  }
  json regions = json::array();
  for (const refine::ContactRegion& r : s.contact_regions) {
    regions.push_back({{"object", r.object}, {"component", r.component}});
  }
  const json j = {{"schema", kSchemaVersion},
                  {"id", s.id},
                  {"difficulty", bench::to_string(s.difficulty)},
                  {"seed", s.seed},
                  {"objects", objects},
                  {"motion", motion_body(s.motion)},
                  {"reference", motion_body(s.reference)},
                  {"contact_regions", regions}};
  return dump(j);
}

bench::Scenario parse_scene(const std::string& text, const std::filesystem::path& base_dir) {
  const json j = parse_document(text);
  return guarded([&] {
    Node root(j, "$");
    root.keys({"schema", "id", "difficulty", "seed", "objects", "motion", "reference", "contact_regions"});
    root["schema"];
    bench::Scenario s;
    s.base_dir = base_dir;
    s.id = root["id"].string();
    try {
      s.difficulty = bench::difficulty_from_string(root["difficulty"].string());
    } catch (const ParseError& e) {
      throw ParseError("$.difficulty: " + std::string(e.what()));
    }
    s.seed = root["seed"].unsigned64();
    for (Node o : root["objects"].items()) {
      o.keys({"name", "family", "shape", "mesh_path", "placement", "mass"});
      bench::ObjectSpec spec;
      spec.name = o["name"].string();
      const Node fam = o["family"];
      try {
        spec.family = dsro::family_from_string(fam.string());
      } catch (const Error& e) {
        fam.fail(e.what());
      }
      const std::vector<double> shape = o["shape"].numbers();
      spec.shape = Eigen::Map<const Eigen::VectorXd>(shape.data(), static_cast<Eigen::Index>(shape.size()));
      spec.mesh_path = o["mesh_path"].string();
      if (spec.mesh_path.empty() && spec.shape.size() != dsro::kShapeDim) {
        o.fail("shape needs " + std::to_string(dsro::kShapeDim) + " entries when mesh_path is empty");
      }
      spec.placement = placement(o["placement"]);
      spec.mass = o["mass"].number();
      o.finish();
      s.objects.push_back(std::move(spec));
    }
    Node motion = root["motion"];
    motion.keys({"rate_hz", "root", "skeleton", "frames", "contacts"});
    s.motion = motion_body(motion);
    motion.finish();
    Node reference = root["reference"];
    reference.keys({"rate_hz", "root", "skeleton", "frames", "contacts"});
    s.reference = motion_body(reference);
    reference.finish();
    for (Node r : root["contact_regions"].items()) {
      r.keys({"object", "component"});
      refine::ContactRegion region;
      region.object = r["object"].integer();
      region.component = r["component"].integer();
      if (region.object < 0 || region.object >= static_cast<int>(s.objects.size())) {
        r.fail("object index out of range");
      }
      r.finish();
      s.contact_regions.push_back(region);
    }
    root.finish();
    return s;
  });
}

bench::Scenario load_scene(const std::filesystem::path& path) {
  bench::Scenario s = parse_scene(read_text(path), path.parent_path());
  for (const bench::ObjectSpec& o : s.objects) {
    if (o.mesh_path.empty()) continue;
    std::filesystem::path p(o.mesh_path);
    if (p.is_relative()) p = s.base_dir / p;
    if (!std::filesystem::exists(p)) throw MissingAsset("mesh file not found: " + p.string());
  }
  return s;
}

void save_scene(const bench::Scenario& s, const std::filesystem::path& path) {
  write_text(path, scene_json(s));
}

std::string motion_json(const MotionSequence& m) {
  json j = motion_body(m);
  j["schema"] = kSchemaVersion;
  return dump(j);
}

MotionSequence parse_motion(const std::string& text) {
  const json j = parse_document(text);
  return guarded([&] {
    Node root(j, "$");
    root.keys({"schema", "rate_hz", "root", "skeleton", "frames", "contacts"});
    root["schema"];
    MotionSequence m = motion_body(root);
    root.finish();
    return m;
  });
}

MotionSequence load_motion(const std::filesystem::path& path) { return parse_motion(read_text(path)); }

void save_motion(const MotionSequence& m, const std::filesystem::path& path) {
  write_text(path, motion_json(m));
}

std::string report_json(const bench::BenchReport& r) {
  json tiers = json::object();
  for (const auto& [name, t] : r.tiers) {
    tiers[name] = {{"runs", t.runs},
                   {"outcomes", t.outcomes},
                   {"stability_hsi", finite(t.stability_hsi, "percentage")},
                   {"stability_gravity", finite(t.stability_gravity, "percentage")},
                   {"sp3d", finite(t.sp3d, "percentage")},
                   {"w_mpjpe_pre", finite(t.w_mpjpe_pre, "error")},
                   {"w_mpjpe_post", finite(t.w_mpjpe_post, "error")},
                   {"pa_mpjpe_pre", finite(t.pa_mpjpe_pre, "error")},
                   {"pa_mpjpe_post", finite(t.pa_mpjpe_post, "error")}};
  }
  const json j = {{"schema", kSchemaVersion},
                  {"toolkit_version", r.toolkit_version},
                  {"repeats", r.repeats},
                  {"exclude_type1", r.exclude_type1},
                  {"seeds", r.seeds},
                  {"tiers", tiers}};
  return dump(j);
}

bench::BenchReport parse_report(const std::string& text) {
  const json j = parse_document(text);
  return guarded([&] {
    Node root(j, "$");
    root.keys({"schema", "toolkit_version", "repeats", "exclude_type1", "seeds", "tiers"});
    root["schema"];
    bench::BenchReport r;
    r.toolkit_version = root["toolkit_version"].string();
    r.repeats = root["repeats"].integer();
    r.exclude_type1 = root["exclude_type1"].boolean();
    for (const Node& s : root["seeds"].items()) r.seeds.push_back(s.unsigned64());
    const json& tiers = j.at("tiers");
    Node tiers_node = root["tiers"];
    if (!tiers.is_object()) tiers_node.fail("expected an object");
    for (auto it = tiers.begin(); it != tiers.end(); ++it) {
      Node t = tiers_node[it.key()];
      t.keys({"runs", "outcomes", "stability_hsi", "stability_gravity", "sp3d", "w_mpjpe_pre", "w_mpjpe_post",
              "pa_mpjpe_pre", "pa_mpjpe_post"});
      bench::TierReport tr;
      tr.runs = t["runs"].integer();
      const auto outcomes = t["outcomes"].integers();
      if (outcomes.size() != 4) t.fail("outcomes needs 4 counts");
      std::copy(outcomes.begin(), outcomes.end(), tr.outcomes.begin());
      tr.stability_hsi = t["stability_hsi"].number();
      tr.stability_gravity = t["stability_gravity"].number();
      tr.sp3d = t["sp3d"].number();
      tr.w_mpjpe_pre = t["w_mpjpe_pre"].number();
      tr.w_mpjpe_post = t["w_mpjpe_post"].number();
      tr.pa_mpjpe_pre = t["pa_mpjpe_pre"].number();
      tr.pa_mpjpe_post = t["pa_mpjpe_post"].number();
      t.finish();
      r.tiers[it.key()] = tr;
    }
    root.finish();
    return r;
  });
}

namespace {

json pointmap(const pm::PointMap& p) {
  json pts = json::array();
  for (const Vec3& v : p.points) pts.push_back(vec3(v));
  return {{"points", pts}, {"confidences", numbers(p.confidences, "confidence")}};
}

pm::PointMap pointmap(Node n, int height, int width) {
  n.keys({"points", "confidences"});
  pm::PointMap p;
  p.height = height;
  p.width = width;
  for (const Node& v : n["points"].items()) p.points.push_back(v.vec3());
  p.confidences = n["confidences"].numbers();
  n.finish();
  try {
    p.validate();
  } catch (const Error& e) {
    n.fail(e.what());
  }
  return p;
}

}  // namespace

std::string graph_json(const pm::PairGraph& g) {
  json intr = json::array();
  for (const pm::Intrinsics& k : g.intrinsics) {
    intr.push_back({{"focal", finite(k.focal, "focal")}, {"cx", finite(k.cx, "cx")}, {"cy", finite(k.cy, "cy")}});
  }
  json edges = json::array();
  for (const pm::PairEdge& e : g.edges) {
    edges.push_back({{"m", e.m}, {"n", e.n}, {"first", pointmap(e.first)}, {"second", pointmap(e.second)}});
  }
  const json j = {{"schema", kSchemaVersion},
                  {"height", g.height},
                  {"width", g.width},
                  {"intrinsics", intr},
                  {"edges", edges}};
  return dump(j);
}

pm::PairGraph parse_graph(const std::string& text) {
  const json j = parse_document(text);
  return guarded([&] {
    Node root(j, "$");
    root.keys({"schema", "height", "width", "intrinsics", "edges"});
    root["schema"];
    pm::PairGraph g;
    g.height = root["height"].integer();
    g.width = root["width"].integer();
    for (Node k : root["intrinsics"].items()) {
      k.keys({"focal", "cx", "cy"});
      pm::Intrinsics in;
      in.focal = k["focal"].number();
      in.cx = k["cx"].number();
      in.cy = k["cy"].number();
      k.finish();
      g.intrinsics.push_back(in);
    }
    for (Node e : root["edges"].items()) {
      e.keys({"m", "n", "first", "second"});
      pm::PairEdge edge;
      edge.m = e["m"].integer();
      edge.n = e["n"].integer();
      edge.first = pointmap(e["first"], g.height, g.width);
      edge.second = pointmap(e["second"], g.height, g.width);
      e.finish();
      g.edges.push_back(std::move(edge));
    }
    root.finish();
    try {
      g.validate();
    } catch (const Error& e) {
      root.fail(e.what());
    }
    return g;
  });
}

std::string state_json(const pm::AlignmentState& s) {
  json depths = json::array();
  for (const auto& d : s.depths) depths.push_back(numbers(d, "depth"));
  json poses = json::array();
  for (const RigidTransform& p : s.poses) poses.push_back(transform(p));
  const json j = {{"schema", kSchemaVersion},
                  {"depths", depths},
                  {"poses", poses},
                  {"scales", numbers(s.scales, "scale")}};
  return dump(j);
}

pm::AlignmentState parse_state(const std::string& text) {
  const json j = parse_document(text);
  return guarded([&] {
    Node root(j, "$");
    root.keys({"schema", "depths", "poses", "scales"});
    root["schema"];
    pm::AlignmentState s;
    for (const Node& d : root["depths"].items()) s.depths.push_back(d.numbers());
    for (const Node& p : root["poses"].items()) s.poses.push_back(transform(p));
    s.scales = root["scales"].numbers();
    root.finish();
    return s;
  });
}

std::string placement_json(const scene::PlacementState& s) {
  json objects = json::array();
  for (const auto& p : s.objects) objects.push_back(placement(p));
  const json j = {{"schema", kSchemaVersion}, {"objects", objects}, {"human_offset", vec3(s.human_offset)}};
  return dump(j);
}

scene::PlacementState parse_placement(const std::string& text) {
  const json j = parse_document(text);
  return guarded([&] {
    Node root(j, "$");
    root.keys({"schema", "objects", "human_offset"});
    root["schema"];
    scene::PlacementState s;
    for (const Node& p : root["objects"].items()) s.objects.push_back(placement(p));
    s.human_offset = root["human_offset"].vec3();
    root.finish();
    return s;
  });
}

std::string outcome_json(const sim::SettleOutcome& o, sim::OutcomeType type) {
  json poses = json::array();
  for (const RigidTransform& p : o.final_poses) poses.push_back(transform(p));
  json disp = json::array();
  for (const sim::Displacement& d : o.displacement) {
    disp.push_back({{"translation", finite(d.translation, "displacement")},
                    {"rotation", finite(d.rotation, "displacement")}});
  }
  const json j = {{"schema", kSchemaVersion},
                  {"outcome", sim::to_string(type)},
                  {"stabilized", o.stabilized},
                  {"settle_time", finite(o.settle_time, "time")},
                  {"final_poses", poses},
                  {"displacement", disp}};
  return dump(j);
}

}  // namespace physloop::io
