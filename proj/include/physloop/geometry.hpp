#pragma once

#include <array>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "physloop/common.hpp"

namespace physloop::geometry {

using Face = std::array<int, 3>;

// Triangle surface in meters. Built through make_mesh(), which validates
// indices and drops degenerate faces.
struct Mesh {
  std::vector<Vec3> vertices;
  std::vector<Face> faces;
  std::string name;
};

// Faces with area below this are dropped at load time.
inline constexpr double kDegenerateArea = 1e-12;

// Validates indices (throws InvalidArgument) and drops degenerate faces with a
// warning on stderr.
Mesh make_mesh(std::vector<Vec3> vertices, std::vector<Face> faces, std::string name = {});

Mesh transformed(const Mesh& mesh, const RigidTransform& pose);
Mesh merged(const std::vector<Mesh>& parts, std::string name = {});

// Splits a mesh into face-connected components. Vertex numbering is local to
// each component.
std::vector<Mesh> connected_components(const Mesh& mesh);

// Closed, outward-oriented box of 12 triangles.
Mesh make_box(const Vec3& center, const Vec3& half_extents, std::string name = "box");
Mesh make_box(const RigidTransform& pose, const Vec3& half_extents, std::string name = "box");
Mesh make_icosphere(double radius, int subdivisions, std::string name = "icosphere");
// Two triangles spanning [0,1]^2 at z = 0. Open surface.
Mesh make_unit_square(std::string name = "square");

double face_area(const Mesh& mesh, std::size_t face);
Vec3 face_normal(const Mesh& mesh, std::size_t face);

struct Edge {
  int a = 0;
  int b = 0;
  int incident_faces = 0;
  bool operator==(const Edge&) const = default;
};

struct WatertightReport {
  bool watertight = false;
  std::vector<Edge> boundary_edges;       // used by one face
  std::vector<Edge> non_manifold_edges;   // used by more than two faces
  std::vector<Edge> inconsistent_edges;   // two faces traversing it the same way
};

WatertightReport is_watertight(const Mesh& mesh);

struct MassProperties {
  double volume = 0.0;
  Vec3 center_of_mass = Vec3::Zero();
  // Inertia about the center of mass for unit density.
  Mat3 inertia = Mat3::Zero();
};

// Divergence-theorem integration. Throws NonWatertightSource.
MassProperties mass_properties(const Mesh& mesh);
Vec3 center_of_mass(const Mesh& mesh);

struct Aabb {
  Vec3 min = Vec3::Constant(std::numeric_limits<double>::infinity());
  Vec3 max = Vec3::Constant(-std::numeric_limits<double>::infinity());
  void extend(const Vec3& p) {
    min = min.cwiseMin(p);
    max = max.cwiseMax(p);
  }
  double exterior_distance(const Vec3& p) const {
    return (min - p).cwiseMax(p - max).cwiseMax(0.0).norm();
  }
};

Aabb bounds(const Mesh& mesh);

// Closest point on triangle (a, b, c) to p.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c);

// Exact signed distance to a watertight mesh: magnitude from the nearest
// triangle, sign from the generalized winding number (negative inside).
class Sdf {
 public:
  // Throws NonWatertightSource.
  explicit Sdf(std::shared_ptr<const Mesh> mesh);
  explicit Sdf(Mesh mesh);

  double signed_distance(const Vec3& p) const;
  // Nearest surface point; `signed_distance` is returned through the pointer.
  Vec3 closest_point(const Vec3& p, double* signed_distance = nullptr) const;
  double unsigned_distance(const Vec3& p) const;
  double winding_number(const Vec3& p) const;

  const Mesh& mesh() const { return *mesh_; }
  const std::shared_ptr<const Mesh>& mesh_ptr() const { return mesh_; }
  const Aabb& box() const { return box_; }

 private:
  std::shared_ptr<const Mesh> mesh_;
  Aabb box_;
};

double signed_distance(const Sdf& sdf, const Vec3& p);

struct SurfaceSamples {
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  std::vector<int> faces;  // source face of each sample
  std::size_t count() const { return points.size(); }
};

// Area-weighted uniform sampling, deterministic for a fixed seed.
// Throws EmptyMesh, InvalidArgument (n == 0).
SurfaceSamples sample_surface(const Mesh& mesh, std::size_t n, std::uint64_t seed);

// Convex hull as an outward-oriented closed triangle mesh. Requires at least
// four non-coplanar points (throws InvalidArgument otherwise).
Mesh convex_hull(const std::vector<Vec3>& points, std::string name = "hull");

// OBJ subset: `v x y z` and `f i j k ...` records, 1-based indices, polygons
// fan-triangulated. Anything else is ignored on read.
Mesh read_obj(const std::filesystem::path& path);
Mesh parse_obj(const std::string& text, std::string name = {});
std::string format_obj(const Mesh& mesh);
void write_obj(const Mesh& mesh, const std::filesystem::path& path);

}  // namespace physloop::geometry
