#pragma once

#include <cstdint>
#include <vector>

#include "physloop/common.hpp"

namespace physloop::pm {

struct Intrinsics {
  double focal = 16.0;
  double cx = 7.5;
  double cy = 7.5;

  // Camera-frame ray through pixel (u, v) with unit z component.
  Vec3 ray(int u, int v) const { return {(u - cx) / focal, (v - cy) / focal, 1.0}; }
};

// H x W grid of points (row-major, index v * width + u) with confidences.
struct PointMap {
  int height = 0;
  int width = 0;
  std::vector<Vec3> points;
  std::vector<double> confidences;

  std::size_t size() const { return points.size(); }
  void validate() const;  // throws DimensionMismatch / InvalidArgument
};

// Pair (m, n): both point maps are expressed in view m's frame.
struct PairEdge {
  int m = 0;
  int n = 1;
  PointMap first;   // pixels of view m
  PointMap second;  // pixels of view n
};

struct PairGraph {
  int height = 0;
  int width = 0;
  std::vector<Intrinsics> intrinsics;  // one per view
  std::vector<PairEdge> edges;

  int view_count() const { return static_cast<int>(intrinsics.size()); }
  std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
  // Index of the lexicographically first edge, whose scale is the gauge.
  std::size_t gauge_edge() const;
  void validate() const;  // dimensions and edge endpoints
  bool connected() const;
};

struct AlignmentState {
  std::vector<std::vector<double>> depths;  // per view, row-major
  std::vector<RigidTransform> poses;        // world from camera
  std::vector<double> scales;               // per edge

  void validate(const PairGraph& graph) const;  // throws DimensionMismatch
};

struct Projection {
  std::vector<double> depth;
  std::vector<char> valid;
  int behind_camera = 0;
};

// Per-pixel z of pose^-1 * point. Pixels with z <= 0 are flagged invalid.
Projection project_pointmap(const RigidTransform& pose, const PointMap& pointmap);

// Weighted squared mismatch between each view's depths and the scaled
// projection of its point map; pixels behind the camera are skipped and
// counted in `behind_camera` when given.
double alignment_residual(const AlignmentState& state, const PairGraph& graph,
                          int* behind_camera = nullptr);

// Gradient with respect to depths, left-multiplied rotation increments,
// translations and log-scales.
struct AlignmentGradient {
  std::vector<std::vector<double>> depths;
  std::vector<Vec3> rotations;
  std::vector<Vec3> translations;
  std::vector<double> log_scales;
  double residual = 0.0;
};

AlignmentGradient alignment_gradient(const AlignmentState& state, const PairGraph& graph);

// Applies an increment in the optimizer's chart: R <- exp(dr) R, t += dt,
// sigma <- sigma * exp(ds), D += dD.
AlignmentState retract(const AlignmentState& state, const AlignmentGradient& step, double scale);

struct AlignOptions {
  int max_iters = 500;
  double step = 1.0;          // initial per-block step multiplier
  double tolerance = 1e-12;   // relative residual decrease that counts as progress
  double min_depth = 1e-4;
};

struct AlignResult {
  AlignmentState state;
  std::vector<double> trace;  // residual after each iteration, first entry is the start
  bool converged = false;
  int iterations = 0;
};

// Spanning-tree initialization: per-edge similarity Procrustes between the
// view's back-projected depths and its point map, chained from view 0.
AlignmentState initialize_alignment(const PairGraph& graph);

// Throws DisconnectedGraph, InvalidArgument for an empty edge set.
AlignResult global_align(const PairGraph& graph, const AlignOptions& opts = {},
                         const AlignmentState* init = nullptr);

enum class Topology { kRing, kComplete };

struct SynthGraph {
  PairGraph graph;
  AlignmentState truth;
};

// Cameras on a circle looking at the origin, random per-pixel scene depth,
// exact pairwise point maps plus Gaussian noise of std `noise` (meters).
SynthGraph synth_graph(int n_views, int height, int width, double noise, std::uint64_t seed,
                       Topology topology = Topology::kRing);

// Scale s minimizing sum (s * a - b)^2 over all depths, and the max relative
// depth error after applying it.
double aligned_depth_error(const AlignmentState& estimate, const AlignmentState& truth);

}  // namespace physloop::pm
