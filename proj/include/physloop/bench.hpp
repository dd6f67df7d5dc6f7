#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "physloop/body.hpp"
#include "physloop/dsro.hpp"
#include "physloop/motion_refine.hpp"
#include "physloop/scene_align.hpp"
#include "physloop/simulator.hpp"

namespace physloop::bench {

inline constexpr const char* kToolkitVersion = "0.1.0";

enum class Difficulty { kEasy, kMedium, kHard };

std::string to_string(Difficulty d);
Difficulty difficulty_from_string(const std::string& name);  // throws ParseError

// An object is either a decoded parametric shape or an OBJ file. Its pose
// maps the canonical frame to the world (objects stay upright).
struct ObjectSpec {
  std::string name;
  dsro::Family family = dsro::Family::kChair;
  dsro::ShapeParam shape;          // used when mesh_path is empty
  std::string mesh_path;           // resolved against the scene file's directory
  scene::ObjectPlacement placement;
  double mass = 0.0;               // <= 0: density 500 kg/m^3
};

enum class Perturbation { kNone, kHover, kPenetrate };

std::string to_string(Perturbation p);
Perturbation perturbation_from_string(const std::string& name);

struct Scenario {
  std::string id;
  Difficulty difficulty = Difficulty::kEasy;
  std::uint64_t seed = 0;
  std::vector<ObjectSpec> objects;
  MotionSequence motion;     // observed input to the pipeline
  MotionSequence reference;  // clean motion for the MPJPE metrics
  std::vector<refine::ContactRegion> contact_regions;
  // Directory OBJ paths are resolved against; not serialized.
  std::filesystem::path base_dir;
};

struct GenerateOptions {
  Perturbation perturbation = Perturbation::kNone;
  double hover = 0.05;        // m, for kHover
  double shape_noise = 0.5;   // std of the standardized shape entries
  double leg_dropout = 0.0;   // chance that one rear leg of the main object is removed
  bool tall_back = false;     // backrest well above the hips
};

// Easy: one chair. Medium: chair and table. Hard: chair, table and stool.
// The human sits on the chair in every tier.
Scenario generate_scenario(Difficulty difficulty, std::uint64_t seed, const GenerateOptions& opts = {});

// Meshes in canonical frames (decoded or loaded). Throws MissingAsset.
std::vector<geometry::Mesh> object_meshes(const Scenario& s);

// World with every object placed, no human.
sim::WorldState build_world(const Scenario& s, const std::vector<geometry::Mesh>& meshes);

struct BenchConfig {
  std::vector<Difficulty> tiers{Difficulty::kEasy, Difficulty::kMedium, Difficulty::kHard};
  int per_tier = 4;
  int repeats = 15;
  std::uint64_t seed = 0;
  bool align = true;
  bool refine = true;
  refine::SceneLossMode refine_mode = refine::SceneLossMode::kSurface;
  GenerateOptions generate;
  refine::RefineParams refine_params;
  scene::PlacementOptions align_params;
  sim::SettleParams settle;
  double jitter = 0.002;  // m, per-repeat object placement jitter
  // Stability-HSI counts Type1 runs in the denominator unless set.
  bool exclude_type1 = false;

  void validate() const;  // throws InvalidArgument
};

struct RunRow {
  std::string scenario;
  Difficulty tier = Difficulty::kEasy;
  int repeat = 0;
  std::uint64_t seed = 0;
  int outcome = 0;  // 1..4
  bool gravity_stable = false;
  double sp3d_before = 0.0;
  double sp3d_after = 0.0;
  double w_mpjpe_pre = 0.0;
  double w_mpjpe_post = 0.0;
  double pa_mpjpe_pre = 0.0;
  double pa_mpjpe_post = 0.0;
  std::string note;
};

struct TierReport {
  int runs = 0;
  std::array<int, 4> outcomes{};  // Type1..Type4 counts
  double stability_hsi = 0.0;      // %
  double stability_gravity = 0.0;  // %
  double sp3d = 0.0;               // %, mean over runs after alignment
  double w_mpjpe_pre = 0.0, w_mpjpe_post = 0.0;
  double pa_mpjpe_pre = 0.0, pa_mpjpe_post = 0.0;
  bool operator==(const TierReport&) const = default;
};

struct BenchReport {
  std::string toolkit_version = kToolkitVersion;
  int repeats = 0;
  bool exclude_type1 = false;
  std::vector<std::uint64_t> seeds;  // per-run seeds in row order
  std::map<std::string, TierReport> tiers;
  bool operator==(const BenchReport&) const = default;
};

// One scenario run: optional align, optional refine, settle, classify.
// Failures become Type2 rows with a note.
RunRow run_scenario(const Scenario& s, int repeat, const BenchConfig& config);

// Seed of a run, from the scenario id and the repeat index.
std::uint64_t run_seed(const std::string& scenario_id, int repeat);

// Deterministic fold over rows ordered by (scenario id, repeat).
BenchReport aggregate(std::vector<RunRow> rows, int repeats, bool exclude_type1);

struct BenchResult {
  BenchReport report;
  std::vector<RunRow> rows;  // ordered by (scenario id, repeat)
};

BenchResult run_benchmark(const std::vector<Scenario>& scenarios, const BenchConfig& config);
// Generates config.per_tier scenarios per tier from config.seed.
std::vector<Scenario> benchmark_scenarios(const BenchConfig& config);

std::string rows_csv(const std::vector<RunRow>& rows);
std::vector<RunRow> parse_rows_csv(const std::string& text);  // throws ParseError

}  // namespace physloop::bench
