#include "physloop/pointmap_align.hpp"

#include <Eigen/Geometry>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <queue>
#include <random>

namespace physloop::pm {

namespace {

constexpr double kHessianFloor = 1e-12;

struct Workspace {
  AlignmentGradient grad;
  AlignmentGradient diag;  // Gauss-Newton diagonal
};

AlignmentGradient zeros_like(const PairGraph& graph) {
  AlignmentGradient g;
  g.depths.assign(graph.view_count(), std::vector<double>(graph.pixel_count(), 0.0));
  g.rotations.assign(graph.view_count(), Vec3::Zero());
  g.translations.assign(graph.view_count(), Vec3::Zero());
  g.log_scales.assign(graph.edges.size(), 0.0);
  return g;
}

// Residual and, when `ws` is set, gradient plus Gauss-Newton diagonal.
double evaluate(const AlignmentState& state, const PairGraph& graph, Workspace* ws,
                int* behind_camera) {
  if (ws != nullptr) {
    ws->grad = zeros_like(graph);
    ws->diag = zeros_like(graph);
  }
  double total = 0.0;
  int behind = 0;
  for (std::size_t e = 0; e < graph.edges.size(); ++e) {
    const PairEdge& edge = graph.edges[e];
    const double sigma = state.scales[e];
    const RigidTransform& pm = state.poses[edge.m];
    const RigidTransform& pn = state.poses[edge.n];
    const Vec3 r3 = pn.rotation.col(2);
    const std::vector<double>& dm = state.depths[edge.m];
    const std::vector<double>& dn = state.depths[edge.n];

    for (std::size_t i = 0; i < edge.first.size(); ++i) {
      const double c = edge.first.confidences[i];
      const double z = edge.first.points[i].z();
      if (z <= 0.0) {
        ++behind;
        continue;
      }
      const double r = dm[i] - sigma * z;
      total += c * r * r;
      if (ws == nullptr) continue;
      ws->grad.depths[edge.m][i] += 2.0 * c * r;
      ws->diag.depths[edge.m][i] += 2.0 * c;
      ws->grad.log_scales[e] += -2.0 * c * r * sigma * z;
      ws->diag.log_scales[e] += 2.0 * c * sigma * z * sigma * z;
    }

    for (std::size_t i = 0; i < edge.second.size(); ++i) {
      const double c = edge.second.confidences[i];
      const Vec3 rotated = pm.rotation * edge.second.points[i];
      const Vec3 v = rotated + pm.translation - pn.translation;
      const double z = r3.dot(v);
      if (z <= 0.0) {
        ++behind;
        continue;
      }
      const double r = dn[i] - sigma * z;
      total += c * r * r;
      if (ws == nullptr) continue;
      const double k = -2.0 * c * r * sigma;  // d cost / d z
      const double h = 2.0 * c * sigma * sigma;
      ws->grad.depths[edge.n][i] += 2.0 * c * r;
      ws->diag.depths[edge.n][i] += 2.0 * c;
      ws->grad.log_scales[e] += k * z;
      ws->diag.log_scales[e] += h * z * z;
      const Vec3 dz_rn = r3.cross(v);
      const Vec3 dz_rm = rotated.cross(r3);
      ws->grad.rotations[edge.n] += k * dz_rn;
      ws->diag.rotations[edge.n] += h * dz_rn.cwiseAbs2();
      ws->grad.translations[edge.n] -= k * r3;
      ws->diag.translations[edge.n] += h * r3.cwiseAbs2();
      ws->grad.rotations[edge.m] += k * dz_rm;
      ws->diag.rotations[edge.m] += h * dz_rm.cwiseAbs2();
      ws->grad.translations[edge.m] += k * r3;
      ws->diag.translations[edge.m] += h * r3.cwiseAbs2();
    }
  }
  if (ws != nullptr) ws->grad.residual = total;
  if (behind_camera != nullptr) *behind_camera = behind;
  return total;
}

std::vector<double> first_depths(const PointMap& map) {
  std::vector<double> d(map.size());
  for (std::size_t i = 0; i < map.size(); ++i) d[i] = map.points[i].z();
  return d;
}

double ratio_fit(const std::vector<double>& num, const std::vector<double>& den) {
  // least-squares k with num ~ k * den
  double a = 0.0, b = 0.0;
  for (std::size_t i = 0; i < num.size(); ++i) {
    a += num[i] * den[i];
    b += den[i] * den[i];
  }
  return b > 0.0 ? a / b : 1.0;
}

Mat3 look_at(const Vec3& eye, const Vec3& target) {
  const Vec3 z = (target - eye).normalized();
  const Vec3 x = Vec3::UnitZ().cross(z).normalized();
  const Vec3 y = z.cross(x);
  Mat3 r;
  r.col(0) = x;
  r.col(1) = y;
  r.col(2) = z;
  return r;
}

}  // namespace

void PointMap::validate() const {
  const auto n = static_cast<std::size_t>(height) * static_cast<std::size_t>(width);
  if (height <= 0 || width <= 0) throw InvalidArgument("point map has an empty grid");
  if (points.size() != n || confidences.size() != n) {
    throw DimensionMismatch("point map grid is " + std::to_string(height) + "x" +
                            std::to_string(width) + " but holds " + std::to_string(points.size()) +
                            " points and " + std::to_string(confidences.size()) + " confidences");
  }
  for (double c : confidences) {
    if (!(c >= 0.0)) throw InvalidArgument("point map confidences must be >= 0");
  }
}

std::size_t PairGraph::gauge_edge() const {
  if (edges.empty()) throw InvalidArgument("pair graph has no edges");
  std::size_t best = 0;
  for (std::size_t e = 1; e < edges.size(); ++e) {
    if (std::pair(edges[e].m, edges[e].n) < std::pair(edges[best].m, edges[best].n)) best = e;
  }
  return best;
}

void PairGraph::validate() const {
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const PairEdge& edge = edges[e];
    if (edge.m < 0 || edge.n < 0 || edge.m >= view_count() || edge.n >= view_count()) {
      throw InvalidArgument("edge " + std::to_string(e) + " references a missing view");
    }
    if (edge.m == edge.n) throw InvalidArgument("edge " + std::to_string(e) + " is a self loop");
    for (const PointMap* map : {&edge.first, &edge.second}) {
      map->validate();
      if (map->height != height || map->width != width) {
        throw DimensionMismatch("edge " + std::to_string(e) + " point map does not match the " +
                                std::to_string(height) + "x" + std::to_string(width) + " grid");
      }
    }
  }
}

bool PairGraph::connected() const {
  if (view_count() == 0) return false;
  std::vector<char> seen(view_count(), 0);
  std::vector<int> stack{0};
  seen[0] = 1;
  while (!stack.empty()) {
    const int v = stack.back();
    stack.pop_back();
    for (const PairEdge& e : edges) {
      int other = -1;
      if (e.m == v) other = e.n;
      if (e.n == v) other = e.m;
      if (other >= 0 && !seen[other]) seen[other] = 1, stack.push_back(other);
    }
  }
  return std::all_of(seen.begin(), seen.end(), [](char s) { return s != 0; });
}

void AlignmentState::validate(const PairGraph& graph) const {
  if (depths.size() != static_cast<std::size_t>(graph.view_count()) ||
      poses.size() != depths.size()) {
    throw DimensionMismatch("state has " + std::to_string(depths.size()) + " depth maps and " +
                            std::to_string(poses.size()) + " poses for " +
                            std::to_string(graph.view_count()) + " views");
  }
  if (scales.size() != graph.edges.size()) {
    throw DimensionMismatch("state has " + std::to_string(scales.size()) + " scales for " +
                            std::to_string(graph.edges.size()) + " edges");
  }
  for (std::size_t v = 0; v < depths.size(); ++v) {
    if (depths[v].size() != graph.pixel_count()) {
      throw DimensionMismatch("depth map " + std::to_string(v) + " has " +
                              std::to_string(depths[v].size()) + " pixels, expected " +
                              std::to_string(graph.pixel_count()));
    }
  }
}

Projection project_pointmap(const RigidTransform& pose, const PointMap& pointmap) {
  Projection out;
  out.depth.resize(pointmap.size());
  out.valid.resize(pointmap.size());
  for (std::size_t i = 0; i < pointmap.size(); ++i) {
    const double z = pose.apply_inverse(pointmap.points[i]).z();
    out.depth[i] = z;
    out.valid[i] = z > 0.0;
    if (z <= 0.0) ++out.behind_camera;
  }
  return out;
}

double alignment_residual(const AlignmentState& state, const PairGraph& graph, int* behind_camera) {
  state.validate(graph);
  return evaluate(state, graph, nullptr, behind_camera);
}

AlignmentGradient alignment_gradient(const AlignmentState& state, const PairGraph& graph) {
  state.validate(graph);
  Workspace ws;
  evaluate(state, graph, &ws, nullptr);
  return ws.grad;
}

AlignmentState retract(const AlignmentState& state, const AlignmentGradient& step, double scale) {
  AlignmentState out = state;
  for (std::size_t v = 0; v < out.depths.size(); ++v) {
    if (v < step.depths.size()) {
      for (std::size_t i = 0; i < out.depths[v].size(); ++i) out.depths[v][i] += scale * step.depths[v][i];
    }
    if (v < step.rotations.size()) {
      out.poses[v].rotation =
          orthonormalize(so3_exp(scale * step.rotations[v]) * out.poses[v].rotation);
    }
    if (v < step.translations.size()) out.poses[v].translation += scale * step.translations[v];
  }
  for (std::size_t e = 0; e < out.scales.size() && e < step.log_scales.size(); ++e) {
    out.scales[e] *= std::exp(scale * step.log_scales[e]);
  }
  return out;
}

AlignmentState initialize_alignment(const PairGraph& graph) {
  graph.validate();
  if (graph.edges.empty()) throw InvalidArgument("global_align needs at least one edge");
  if (!graph.connected()) throw DisconnectedGraph("pair graph is not connected");
  const int nv = graph.view_count();
  const std::size_t np = graph.pixel_count();

  // Unscaled depth guess per view from a pair where it is the reference.
  std::vector<std::vector<double>> base(nv);
  for (const PairEdge& e : graph.edges) {
    if (base[e.m].empty()) base[e.m] = first_depths(e.first);
  }
  for (const PairEdge& e : graph.edges) {
    if (base[e.n].empty()) base[e.n] = first_depths(e.second);
  }
  for (auto& d : base) {
    for (double& z : d) z = std::max(z, 1e-3);
  }

  auto backproject = [&](int v) {
    Eigen::Matrix3Xd pts(3, np);
    for (int y = 0; y < graph.height; ++y) {
      for (int x = 0; x < graph.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * graph.width + x;
        pts.col(static_cast<Eigen::Index>(i)) = base[v][i] * graph.intrinsics[v].ray(x, y);
      }
    }
    return pts;
  };
  auto as_matrix = [&](const PointMap& map) {
    Eigen::Matrix3Xd pts(3, np);
    for (std::size_t i = 0; i < np; ++i) pts.col(static_cast<Eigen::Index>(i)) = map.points[i];
    return pts;
  };
  struct Similarity {
    double s;
    RigidTransform rt;
  };
  auto fit = [&](const Eigen::Matrix3Xd& src, const Eigen::Matrix3Xd& dst) {
    const Eigen::Matrix4d t = Eigen::umeyama(src, dst, true);
    const Mat3 sr = t.topLeftCorner<3, 3>();
    const double s = std::cbrt(sr.determinant());
    return Similarity{s, {orthonormalize(sr / s), t.topRightCorner<3, 1>()}};
  };

  AlignmentState state;
  state.poses.assign(nv, RigidTransform{});
  state.scales.assign(graph.edges.size(), 0.0);
  std::vector<double> gain(nv, 0.0);
  std::vector<char> known(nv, 0);
  known[0] = 1;
  gain[0] = 1.0;
  std::queue<int> queue;
  queue.push(0);
  while (!queue.empty()) {
    const int a = queue.front();
    queue.pop();
    for (std::size_t ei = 0; ei < graph.edges.size(); ++ei) {
      const PairEdge& e = graph.edges[ei];
      if (e.m == a && !known[e.n]) {
        const int b = e.n;
        const Similarity sim = fit(backproject(b), as_matrix(e.second));
        state.poses[b] = state.poses[a] * sim.rt;
        const double sigma = gain[a] * ratio_fit(base[a], first_depths(e.first));
        state.scales[ei] = sigma;
        gain[b] = sim.s * sigma;
        known[b] = 1;
        queue.push(b);
      } else if (e.n == a && !known[e.m]) {
        const int b = e.m;
        const Similarity sim = fit(backproject(a), as_matrix(e.second));
        state.poses[b] = state.poses[a] * sim.rt.inverse();
        const double sigma = gain[a] / sim.s;
        state.scales[ei] = sigma;
        gain[b] = sigma * ratio_fit(first_depths(e.first), base[b]);
        known[b] = 1;
        queue.push(b);
      }
    }
  }

  state.depths.resize(nv);
  for (int v = 0; v < nv; ++v) {
    state.depths[v] = base[v];
    for (double& d : state.depths[v]) d *= gain[v];
  }
  for (std::size_t ei = 0; ei < graph.edges.size(); ++ei) {
    if (state.scales[ei] > 0.0) continue;
    const PairEdge& e = graph.edges[ei];
    state.scales[ei] = std::max(ratio_fit(state.depths[e.m], first_depths(e.first)), 1e-6);
  }
  const double k = 1.0 / state.scales[graph.gauge_edge()];
  for (auto& d : state.depths) {
    for (double& z : d) z *= k;
  }
  for (double& s : state.scales) s *= k;
  return state;
}

AlignResult global_align(const PairGraph& graph, const AlignOptions& opts,
                         const AlignmentState* init) {
  graph.validate();
  if (graph.edges.empty()) throw InvalidArgument("global_align needs at least one edge");
  if (!graph.connected()) throw DisconnectedGraph("pair graph is not connected");

  AlignResult result;
  result.state = init != nullptr ? *init : initialize_alignment(graph);
  result.state.validate(graph);
  const std::size_t gauge = graph.gauge_edge();
  double current = evaluate(result.state, graph, nullptr, nullptr);
  result.trace.push_back(current);

  enum Block { kDepths, kRotations, kTranslations, kScales, kBlocks };
  std::array<double, kBlocks> eta;
  eta.fill(opts.step);

  Workspace ws;
  for (int iter = 0; iter < opts.max_iters; ++iter) {
    const double before = current;
    for (int block = 0; block < kBlocks; ++block) {
      evaluate(result.state, graph, &ws, nullptr);
      AlignmentGradient dir = zeros_like(graph);
      auto precondition = [](double g, double h) { return -g / (h + kHessianFloor); };
      switch (block) {
        case kDepths:
          for (std::size_t v = 0; v < dir.depths.size(); ++v) {
            for (std::size_t i = 0; i < dir.depths[v].size(); ++i) {
              dir.depths[v][i] = precondition(ws.grad.depths[v][i], ws.diag.depths[v][i]);
            }
          }
          break;
        case kRotations:
        case kTranslations:
          for (std::size_t v = 1; v < dir.rotations.size(); ++v) {
            Vec3& d = block == kRotations ? dir.rotations[v] : dir.translations[v];
            const Vec3& g = block == kRotations ? ws.grad.rotations[v] : ws.grad.translations[v];
            const Vec3& h = block == kRotations ? ws.diag.rotations[v] : ws.diag.translations[v];
            for (int k = 0; k < 3; ++k) d[k] = precondition(g[k], h[k]);
          }
          break;
        case kScales:
          for (std::size_t e = 0; e < dir.log_scales.size(); ++e) {
            if (e == gauge) continue;
            dir.log_scales[e] = precondition(ws.grad.log_scales[e], ws.diag.log_scales[e]);
          }
          break;
      }
      for (int attempt = 0; attempt < 30; ++attempt) {
        AlignmentState trial = retract(result.state, dir, eta[block]);
        for (auto& d : trial.depths) {
          for (double& z : d) z = std::max(z, opts.min_depth);
        }
        const double value = evaluate(trial, graph, nullptr, nullptr);
        if (value < current) {
          result.state = std::move(trial);
          current = value;
          eta[block] = std::min(eta[block] * 1.5, 4.0 * opts.step);
          break;
        }
        eta[block] *= 0.5;
        if (eta[block] < 1e-12) {
          eta[block] = 1e-12;
          break;
        }
      }
    }
    result.trace.push_back(current);
    result.iterations = iter + 1;
    if (current <= 1e-300 || before - current <= opts.tolerance * before) {
      result.converged = true;
      break;
    }
  }
  return result;
}

SynthGraph synth_graph(int n_views, int height, int width, double noise, std::uint64_t seed,
                       Topology topology) {
  if (n_views < 2) throw InvalidArgument("synth_graph needs at least two views");
  if (height <= 0 || width <= 0) throw InvalidArgument("synth_graph needs a non-empty grid");
  if (noise < 0.0) throw InvalidArgument("synth_graph noise must be >= 0");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);

  SynthGraph out;
  PairGraph& g = out.graph;
  g.height = height;
  g.width = width;
  const Intrinsics k{static_cast<double>(std::max(height, width)), (width - 1) * 0.5,
                     (height - 1) * 0.5};
  g.intrinsics.assign(n_views, k);

  std::vector<RigidTransform> world(n_views);
  const double span = 2.0 * M_PI / n_views;
  for (int v = 0; v < n_views; ++v) {
    const double theta = v * span + 0.2 * span * (unit(rng) - 0.5);
    const Vec3 eye{3.0 * std::cos(theta), 3.0 * std::sin(theta), 0.5 * (unit(rng) - 0.5)};
    const Vec3 target{0.3 * (unit(rng) - 0.5), 0.3 * (unit(rng) - 0.5), 0.0};
    world[v] = {look_at(eye, target), eye};
  }
  const RigidTransform base = world[0].inverse();
  out.truth.poses.resize(n_views);
  for (int v = 0; v < n_views; ++v) out.truth.poses[v] = base * world[v];

  out.truth.depths.assign(n_views, std::vector<double>(g.pixel_count()));
  for (auto& d : out.truth.depths) {
    for (double& z : d) z = 2.0 + 2.0 * unit(rng);
  }

  std::vector<std::pair<int, int>> pairs;
  if (topology == Topology::kRing) {
    if (n_views == 2) {
      pairs.emplace_back(0, 1);
    } else {
      for (int v = 0; v < n_views; ++v) pairs.emplace_back(v, (v + 1) % n_views);
    }
  } else {
    // Rotational orientation so every view is the reference of some pair.
    for (int i = 0; i < n_views; ++i) {
      for (int j = i + 1; j < n_views; ++j) {
        const int forward = j - i;
        const int backward = n_views - forward;
        if (forward < backward || (forward == backward && i % 2 == 0)) {
          pairs.emplace_back(i, j);
        } else {
          pairs.emplace_back(j, i);
        }
      }
    }
  }

  auto camera_points = [&](int v) {
    std::vector<Vec3> pts(g.pixel_count());
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * width + x;
        pts[i] = out.truth.depths[v][i] * g.intrinsics[v].ray(x, y);
      }
    }
    return pts;
  };

  for (std::size_t e = 0; e < pairs.size(); ++e) {
    const auto [m, n] = pairs[e];
    const double sigma = e == 0 ? 1.0 : std::exp(unit(rng) - 0.5);
    out.truth.scales.push_back(sigma);
    PairEdge edge;
    edge.m = m;
    edge.n = n;
    const RigidTransform rel = out.truth.poses[m].inverse() * out.truth.poses[n];
    const std::vector<Vec3> xm = camera_points(m);
    const std::vector<Vec3> xn = camera_points(n);
    for (PointMap* map : {&edge.first, &edge.second}) {
      map->height = height;
      map->width = width;
      map->points.resize(g.pixel_count());
      map->confidences.resize(g.pixel_count());
    }
    for (std::size_t i = 0; i < g.pixel_count(); ++i) {
      edge.first.points[i] = xm[i] / sigma;
      edge.second.points[i] = rel.apply(xn[i] / sigma);
    }
    for (PointMap* map : {&edge.first, &edge.second}) {
      for (std::size_t i = 0; i < g.pixel_count(); ++i) {
        map->confidences[i] = 0.5 + unit(rng);
        if (noise > 0.0) {
          map->points[i] += noise * Vec3(gauss(rng), gauss(rng), gauss(rng));
        }
      }
    }
    g.edges.push_back(std::move(edge));
  }
  return out;
}

double aligned_depth_error(const AlignmentState& estimate, const AlignmentState& truth) {
  if (estimate.depths.size() != truth.depths.size()) {
    throw DimensionMismatch("depth map count differs between estimate and truth");
  }
  double a = 0.0, b = 0.0;
  for (std::size_t v = 0; v < truth.depths.size(); ++v) {
    if (estimate.depths[v].size() != truth.depths[v].size()) {
      throw DimensionMismatch("depth map " + std::to_string(v) + " size differs");
    }
    for (std::size_t i = 0; i < truth.depths[v].size(); ++i) {
      a += estimate.depths[v][i] * truth.depths[v][i];
      b += estimate.depths[v][i] * estimate.depths[v][i];
    }
  }
  const double s = b > 0.0 ? a / b : 1.0;
  double worst = 0.0;
  for (std::size_t v = 0; v < truth.depths.size(); ++v) {
    for (std::size_t i = 0; i < truth.depths[v].size(); ++i) {
      const double t = truth.depths[v][i];
      worst = std::max(worst, std::abs(s * estimate.depths[v][i] - t) / t);
    }
  }
  return worst;
}

}  // namespace physloop::pm
