#pragma once

#include <filesystem>
#include <string>

#include "physloop/bench.hpp"
#include "physloop/pointmap_align.hpp"
#include "physloop/scene_align.hpp"
#include "physloop/simulator.hpp"

// JSON container for every toolkit record. Documents carry a top-level
// "schema" version; parsing is strict: unknown or missing keys raise
// ParseError with a JSON path such as "$.objects[0].placement.yaw".
// Output is canonical (sorted keys, shortest round-trip doubles, two-space
// indent, trailing newline), so save(load(text)) == text for canonical text.
namespace physloop::io {

inline constexpr int kSchemaVersion = 1;

// Whole-file helpers. read_text throws MissingAsset naming the path.
std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

std::string scene_json(const bench::Scenario& s);
// base_dir is stored in the result for resolving mesh paths; not checked here.
bench::Scenario parse_scene(const std::string& text, const std::filesystem::path& base_dir = {});
// Also checks that every referenced mesh file exists (MissingAsset).
bench::Scenario load_scene(const std::filesystem::path& path);
void save_scene(const bench::Scenario& s, const std::filesystem::path& path);

std::string motion_json(const MotionSequence& m);
MotionSequence parse_motion(const std::string& text);
MotionSequence load_motion(const std::filesystem::path& path);
void save_motion(const MotionSequence& m, const std::filesystem::path& path);

std::string report_json(const bench::BenchReport& r);
bench::BenchReport parse_report(const std::string& text);

std::string graph_json(const pm::PairGraph& g);
pm::PairGraph parse_graph(const std::string& text);

std::string state_json(const pm::AlignmentState& s);
pm::AlignmentState parse_state(const std::string& text);

std::string placement_json(const scene::PlacementState& s);
scene::PlacementState parse_placement(const std::string& text);

// Output only: outcome type, settle time, final poses and displacements.
std::string outcome_json(const sim::SettleOutcome& o, sim::OutcomeType type);

}  // namespace physloop::io
