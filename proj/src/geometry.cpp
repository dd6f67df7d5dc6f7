#include "physloop/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace physloop::geometry {

namespace {

double triangle_area(const Vec3& a, const Vec3& b, const Vec3& c) {
  return 0.5 * (b - a).cross(c - a).norm();
}

std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

}  // namespace

Mesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces, std::string name) {
  Mesh mesh;
  mesh.vertices = std::move(vertices);
  mesh.name = std::move(name);
  const int n = static_cast<int>(mesh.vertices.size());
  std::size_t dropped = 0;
  mesh.faces.reserve(faces.size());
  for (const Face& f : faces) {
    for (int idx : f) {
      if (idx < 0 || idx >= n) {
        throw InvalidArgument("mesh '" + mesh.name + "': face index " + std::to_string(idx) +
                              " out of range for " + std::to_string(n) + " vertices");
      }
    }
    if (triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]) <
        kDegenerateArea) {
      ++dropped;
      continue;
    }
    mesh.faces.push_back(f);
  }
  if (dropped > 0) {
    std::cerr << "warning: mesh '" << mesh.name << "': dropped " << dropped
              << " degenerate face(s)\n";
  }
  return mesh;
}

Mesh transformed(const Mesh& mesh, const RigidTransform& pose) {
  Mesh out = mesh;
  for (Vec3& v : out.vertices) v = pose.apply(v);
  return out;
}

Mesh merged(const std::vector<Mesh>& parts, std::string name) {
  Mesh out;
  out.name = std::move(name);
  for (const Mesh& part : parts) {
    const int offset = static_cast<int>(out.vertices.size());
    out.vertices.insert(out.vertices.end(), part.vertices.begin(), part.vertices.end());
    for (const Face& f : part.faces) out.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  }
  return out;
}

std::vector<Mesh> connected_components(const Mesh& mesh) {
  std::vector<int> parent(mesh.vertices.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const Face& f : mesh.faces) {
    parent[find(f[1])] = find(f[0]);
    parent[find(f[2])] = find(f[0]);
  }
  std::map<int, std::size_t> root_to_component;
  std::vector<Mesh> components;
  std::vector<std::unordered_map<int, int>> remap;
  for (const Face& f : mesh.faces) {
    const int root = find(f[0]);
    auto [it, inserted] = root_to_component.try_emplace(root, components.size());
    if (inserted) {
      components.push_back(Mesh{{}, {}, mesh.name + "#" + std::to_string(components.size())});
      remap.emplace_back();
    }
    Mesh& comp = components[it->second];
    auto& local = remap[it->second];
    Face g;
    for (int k = 0; k < 3; ++k) {
      auto [vit, fresh] = local.try_emplace(f[k], static_cast<int>(comp.vertices.size()));
      if (fresh) comp.vertices.push_back(mesh.vertices[f[k]]);
      g[k] = vit->second;
    }
    comp.faces.push_back(g);
  }
  return components;
}

Mesh make_box(const Vec3& center, const Vec3& half_extents, std::string name) {
  return make_box(RigidTransform{Mat3::Identity(), center}, half_extents, std::move(name));
}

Mesh make_box(const RigidTransform& pose, const Vec3& half_extents, std::string name) {
  std::vector<Vec3> v;
  v.reserve(8);
  for (int i = 0; i < 8; ++i) {
    const Vec3 corner((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
    v.push_back(pose.apply(corner.cwiseProduct(half_extents)));
  }
  // Outward winding for each of the six faces.
  std::vector<Face> f = {
      {0, 2, 1}, {1, 2, 3},  // z-
      {4, 5, 6}, {5, 7, 6},  // z+
      {0, 1, 4}, {1, 5, 4},  // y-
      {2, 6, 3}, {3, 6, 7},  // y+
      {0, 4, 2}, {2, 4, 6},  // x-
      {1, 3, 5}, {3, 7, 5},  // x+
  };
  return make_mesh(std::move(v), std::move(f), std::move(name));
}

Mesh make_icosphere(double radius, int subdivisions, std::string name) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> v = {{-1, t, 0}, {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                         {0, -1, t}, {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                         {t, 0, -1}, {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& p : v) p.normalize();
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                         {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                         {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                         {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<int, int>, int> midpoint;
    auto mid = [&](int a, int b) {
      const auto key = std::minmax(a, b);
      auto it = midpoint.find(key);
      if (it != midpoint.end()) return it->second;
      v.push_back((v[a] + v[b]).normalized());
      const int idx = static_cast<int>(v.size()) - 1;
      midpoint.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const Face& tri : f) {
      const int ab = mid(tri[0], tri[1]);
      const int bc = mid(tri[1], tri[2]);
      const int ca = mid(tri[2], tri[0]);
      next.push_back({tri[0], ab, ca});
      next.push_back({tri[1], bc, ab});
      next.push_back({tri[2], ca, bc});
      next.push_back({ab, bc, ca});
    }
    f = std::move(next);
  }
  for (Vec3& p : v) p *= radius;
  return make_mesh(std::move(v), std::move(f), std::move(name));
}

Mesh make_unit_square(std::string name) {
  return make_mesh({{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}}, {{0, 1, 2}, {0, 2, 3}},
                   std::move(name));
}

double face_area(const Mesh& mesh, std::size_t face) {
  const Face& f = mesh.faces[face];
  return triangle_area(mesh.vertices[f[0]], mesh.vertices[f[1]], mesh.vertices[f[2]]);
}

Vec3 face_normal(const Mesh& mesh, std::size_t face) {
  const Face& f = mesh.faces[face];
  const Vec3& a = mesh.vertices[f[0]];
  return (mesh.vertices[f[1]] - a).cross(mesh.vertices[f[2]] - a).normalized();
}

WatertightReport is_watertight(const Mesh& mesh) {
  // Directed half-edge counts keyed by (min, max) with orientation tallies.
  struct Tally {
    int forward = 0;   // traversed min -> max
    int backward = 0;  // traversed max -> min
  };
  std::map<std::pair<int, int>, Tally> edges;
  for (const Face& f : mesh.faces) {
    for (int k = 0; k < 3; ++k) {
      const int a = f[k];
      const int b = f[(k + 1) % 3];
      Tally& t = edges[std::minmax(a, b)];
      (a < b ? t.forward : t.backward) += 1;
    }
  }
  WatertightReport report;
  for (const auto& [key, t] : edges) {
    const int total = t.forward + t.backward;
    const Edge e{key.first, key.second, total};
    if (total == 1) {
      report.boundary_edges.push_back(e);
    } else if (total > 2) {
      report.non_manifold_edges.push_back(e);
    } else if (t.forward != 1) {
      report.inconsistent_edges.push_back(e);
    }
  }
  report.watertight = !mesh.faces.empty() && report.boundary_edges.empty() &&
                      report.non_manifold_edges.empty() && report.inconsistent_edges.empty();
  return report;
}

MassProperties mass_properties(const Mesh& mesh) {
  if (!is_watertight(mesh).watertight) {
    throw NonWatertightSource("mesh '" + mesh.name + "' is not watertight");
  }
  double volume = 0.0;
  Vec3 first = Vec3::Zero();
  Mat3 second = Mat3::Zero();
  for (const Face& f : mesh.faces) {
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    const double v = a.dot(b.cross(c)) / 6.0;
    volume += v;
    first += v * (a + b + c) / 4.0;
    // Second moment of the tetrahedron (0, a, b, c).
    const Vec3 s = a + b + c;
    second += v / 20.0 * (a * a.transpose() + b * b.transpose() + c * c.transpose() + s * s.transpose());
  }
  if (std::abs(volume) < 1e-18) {
    throw NonWatertightSource("mesh '" + mesh.name + "' encloses zero volume");
  }
  MassProperties out;
  out.volume = std::abs(volume);
  out.center_of_mass = first / volume;
  const double sign = volume > 0 ? 1.0 : -1.0;
  const Mat3 central = sign * second - out.volume * out.center_of_mass * out.center_of_mass.transpose();
  out.inertia = central.trace() * Mat3::Identity() - central;
  return out;
}

Vec3 center_of_mass(const Mesh& mesh) { return mass_properties(mesh).center_of_mass; }

Aabb bounds(const Mesh& mesh) {
  Aabb box;
  for (const Vec3& v : mesh.vertices) box.extend(v);
  return box;
}

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a;
  const Vec3 ac = c - a;
  const Vec3 ap = p - a;
  const double d1 = ab.dot(ap);
  const double d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp);
  const double d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp);
  const double d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  }
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

Sdf::Sdf(std::shared_ptr<const Mesh> mesh) : mesh_(std::move(mesh)) {
  if (!mesh_) throw InvalidArgument("Sdf built from a null mesh");
  if (!is_watertight(*mesh_).watertight) {
    throw NonWatertightSource("mesh '" + mesh_->name + "' is not watertight; sign undefined");
  }
  box_ = bounds(*mesh_);
}

Sdf::Sdf(Mesh mesh) : Sdf(std::make_shared<const Mesh>(std::move(mesh))) {}

double Sdf::winding_number(const Vec3& p) const {
  double total = 0.0;
  for (const Face& f : mesh_->faces) {
    const Vec3 a = mesh_->vertices[f[0]] - p;
    const Vec3 b = mesh_->vertices[f[1]] - p;
    const Vec3 c = mesh_->vertices[f[2]] - p;
    const double la = a.norm();
    const double lb = b.norm();
    const double lc = c.norm();
    const double numer = a.dot(b.cross(c));
    const double denom = la * lb * lc + a.dot(b) * lc + a.dot(c) * lb + b.dot(c) * la;
    total += 2.0 * std::atan2(numer, denom);
  }
  return total / (4.0 * std::numbers::pi);
}

Vec3 Sdf::closest_point(const Vec3& p, double* signed_distance) const {
  double best = std::numeric_limits<double>::infinity();
  Vec3 best_point = Vec3::Zero();
  for (const Face& f : mesh_->faces) {
    const Vec3 q = closest_point_on_triangle(p, mesh_->vertices[f[0]], mesh_->vertices[f[1]],
                                             mesh_->vertices[f[2]]);
    const double d = (q - p).squaredNorm();
    if (d < best) {
      best = d;
      best_point = q;
    }
  }
  if (signed_distance != nullptr) {
    const double magnitude = std::sqrt(best);
    const bool inside = box_.exterior_distance(p) == 0.0 && winding_number(p) > 0.5;
    *signed_distance = inside ? -magnitude : magnitude;
  }
  return best_point;
}

double Sdf::unsigned_distance(const Vec3& p) const {
  return (closest_point(p) - p).norm();
}

double Sdf::signed_distance(const Vec3& p) const {
  double d = 0.0;
  closest_point(p, &d);
  return d;
}

double signed_distance(const Sdf& sdf, const Vec3& p) { return sdf.signed_distance(p); }

SurfaceSamples sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed) {
  if (mesh.faces.empty()) throw EmptyMesh("mesh '" + mesh.name + "' has no faces");
  if (n == 0) throw InvalidArgument("sample_surface needs n >= 1");
  std::vector<double> cumulative(mesh.faces.size());
  double total = 0.0;
  for (std::size_t i = 0; i < mesh.faces.size(); ++i) {
    total += face_area(mesh, i);
    cumulative[i] = total;
  }
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  SurfaceSamples out;
  out.points.reserve(n);
  out.normals.reserve(n);
  out.faces.reserve(n);
  for (std::size_t s = 0; s < n; ++s) {
    const double pick = uniform(rng) * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), pick);
    const std::size_t face =
        std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), mesh.faces.size() - 1);
    const double r1 = std::sqrt(uniform(rng));
    const double r2 = uniform(rng);
    const Face& f = mesh.faces[face];
    const Vec3& a = mesh.vertices[f[0]];
    const Vec3& b = mesh.vertices[f[1]];
    const Vec3& c = mesh.vertices[f[2]];
    out.points.push_back((1.0 - r1) * a + r1 * (1.0 - r2) * b + r1 * r2 * c);
    out.normals.push_back(face_normal(mesh, face));
    out.faces.push_back(static_cast<int>(face));
  }
  return out;
}

Mesh convex_hull(const std::vector<Vec3>& points, std::string name) {
  const std::size_t n = points.size();
  if (n < 4) throw InvalidArgument("convex hull needs at least 4 points");
  Aabb box;
  for (const Vec3& p : points) box.extend(p);
  const double scale = std::max((box.max - box.min).norm(), 1e-12);
  const double eps = 1e-10 * scale;

  // Initial tetrahedron from extreme points.
  std::size_t i0 = 0;
  for (std::size_t i = 1; i < n; ++i) {
    if (points[i].x() < points[i0].x()) i0 = i;
  }
  std::size_t i1 = i0;
  double best = -1.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = (points[i] - points[i0]).squaredNorm();
    if (d > best) best = d, i1 = i;
  }
  std::size_t i2 = i0;
  best = -1.0;
  const Vec3 dir = (points[i1] - points[i0]).normalized();
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 rel = points[i] - points[i0];
    const double d = (rel - rel.dot(dir) * dir).squaredNorm();
    if (d > best) best = d, i2 = i;
  }
  std::size_t i3 = i0;
  best = -1.0;
  const Vec3 plane_n = (points[i1] - points[i0]).cross(points[i2] - points[i0]).normalized();
  for (std::size_t i = 0; i < n; ++i) {
    const double d = std::abs((points[i] - points[i0]).dot(plane_n));
    if (d > best) best = d, i3 = i;
  }
  if (best < eps * 10 || i1 == i0 || i2 == i0) {
    throw InvalidArgument("convex hull of degenerate (coplanar) point set");
  }

  struct HullFace {
    int a, b, c;
    Vec3 normal;
    double offset;
    bool alive = true;
  };
  std::vector<HullFace> faces;
  const Vec3 interior = (points[i0] + points[i1] + points[i2] + points[i3]) / 4.0;
  auto add_face = [&](int a, int b, int c) {
    Vec3 nrm = (points[b] - points[a]).cross(points[c] - points[a]);
    if (nrm.dot(interior - points[a]) > 0) {
      std::swap(b, c);
      nrm = -nrm;
    }
    nrm.normalize();
    faces.push_back({a, b, c, nrm, nrm.dot(points[a]), true});
  };
  const int t[4] = {static_cast<int>(i0), static_cast<int>(i1), static_cast<int>(i2),
                    static_cast<int>(i3)};
  add_face(t[0], t[1], t[2]);
  add_face(t[0], t[1], t[3]);
  add_face(t[0], t[2], t[3]);
  add_face(t[1], t[2], t[3]);

  for (std::size_t pi = 0; pi < n; ++pi) {
    const Vec3& p = points[pi];
    std::vector<std::size_t> visible;
    for (std::size_t fi = 0; fi < faces.size(); ++fi) {
      if (faces[fi].alive && faces[fi].normal.dot(p) - faces[fi].offset > eps) visible.push_back(fi);
    }
    if (visible.empty()) continue;
    std::set<std::uint64_t> directed;
    for (std::size_t fi : visible) {
      const HullFace& f = faces[fi];
      directed.insert(edge_key(f.a, f.b));
      directed.insert(edge_key(f.b, f.c));
      directed.insert(edge_key(f.c, f.a));
    }
    std::vector<std::pair<int, int>> horizon;
    for (std::size_t fi : visible) {
      const HullFace& f = faces[fi];
      const int e[3][2] = {{f.a, f.b}, {f.b, f.c}, {f.c, f.a}};
      for (const auto& edge : e) {
        if (!directed.count(edge_key(edge[1], edge[0]))) horizon.emplace_back(edge[0], edge[1]);
      }
    }
    for (std::size_t fi : visible) faces[fi].alive = false;
    for (const auto& [u, v] : horizon) {
      Vec3 nrm = (points[v] - points[u]).cross(p - points[u]);
      const double len = nrm.norm();
      if (len < 1e-300) continue;
      nrm /= len;
      faces.push_back({u, v, static_cast<int>(pi), nrm, nrm.dot(points[u]), true});
    }
  }

  std::vector<int> remap(n, -1);
  std::vector<Vec3> verts;
  std::vector<Face> out_faces;
  for (const HullFace& f : faces) {
    if (!f.alive) continue;
    Face g;
    const int src[3] = {f.a, f.b, f.c};
    for (int k = 0; k < 3; ++k) {
      if (remap[src[k]] < 0) {
        remap[src[k]] = static_cast<int>(verts.size());
        verts.push_back(points[src[k]]);
      }
      g[k] = remap[src[k]];
    }
    out_faces.push_back(g);
  }
  return make_mesh(std::move(verts), std::move(out_faces), std::move(name));
}

Mesh parse_obj(const std::string& text, std::string name) {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Vec3 p;
      if (!(ls >> p.x() >> p.y() >> p.z())) {
        throw ParseError("obj line " + std::to_string(line_no) + ": malformed vertex");
      }
      vertices.push_back(p);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string token;
      while (ls >> token) {
        const std::string head = token.substr(0, token.find('/'));
        int value = 0;
        try {
          value = std::stoi(head);
        } catch (const std::exception&) {
          throw ParseError("obj line " + std::to_string(line_no) + ": bad face index '" + token + "'");
        }
        idx.push_back(value > 0 ? value - 1 : static_cast<int>(vertices.size()) + value);
      }
      if (idx.size() < 3) {
        throw ParseError("obj line " + std::to_string(line_no) + ": face with fewer than 3 indices");
      }
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) faces.push_back({idx[0], idx[k], idx[k + 1]});
    }
  }
  return make_mesh(std::move(vertices), std::move(faces), std::move(name));
}

Mesh read_obj(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw MissingAsset("cannot open mesh '" + path.string() + "'");
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse_obj(buffer.str(), path.stem().string());
}

std::string format_obj(const Mesh& mesh) {
  std::ostringstream out;
  out.precision(17);
  if (!mesh.name.empty()) out << "# " << mesh.name << "\n";
  for (const Vec3& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << "\n";
  for (const Face& f : mesh.faces) out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << "\n";
  return out.str();
}

void write_obj(const Mesh& mesh, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw InvalidArgument("cannot write '" + path.string() + "'");
  out << format_obj(mesh);
}

}  // namespace physloop::geometry
