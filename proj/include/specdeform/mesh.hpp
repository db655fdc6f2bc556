#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "specdeform/common.hpp"

namespace specdeform {

// Triangulated chart of a compact oriented surface with boundary.  Triangles
// are counterclockwise vertex index triples; boundary edges are directed so
// the interior lies on their left, i.e. each one appears with the same
// orientation in its unique incident triangle.
struct Mesh {
  std::vector<Eigen::Vector2d> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<std::array<int, 2>> boundary_edges;

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
};

// Signed chart area of triangle t (positive for counterclockwise order).
double triangle_area(const Mesh& mesh, int t);
double total_area(const Mesh& mesh);

// V - E + F with E counted over undirected edges: 1 for disk-type meshes,
// 0 for an annulus.
int euler_characteristic(const Mesh& mesh);

// Uniform triangulation of the unit square [0,1]^2 with n subdivisions per
// side: (n+1)^2 vertices, 2n^2 triangles, 4n boundary edges, every cell
// split along the same diagonal.
Mesh generate_square(int n);

// Disk of radius 1 centered at the origin built from hexagonal rings: ring r
// carries 6r vertices, so the triangulation is exactly invariant under the
// dihedral symmetry group of order 12 and angular eigenvalue pairs stay
// degenerate to round-off.
Mesh generate_disk(int rings);

// Checks every structural invariant and throws ValidationError naming the
// first violated one.
void validate_mesh(const Mesh& mesh);

// Flips clockwise triangles in place; returns how many were flipped.
int reorient_clockwise_triangles(Mesh& mesh);

struct LoadOptions {
  // Repair clockwise triangles instead of failing validation.
  bool reorient = false;
};

// Plain-text format with sections "vertices", "triangles", "boundary", one
// record per line; save/load round-trips exactly.  Parse failures carry the
// line number; structural failures name the violated invariant.
void save_mesh(const Mesh& mesh, const std::string& path);
Mesh load_mesh(const std::string& path, const LoadOptions& options = {});

}  // namespace specdeform
