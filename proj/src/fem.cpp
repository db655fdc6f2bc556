#include "specdeform/fem.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <vector>

namespace specdeform {

namespace {

// Edge-midpoint quadrature: barycentric coordinates of the three points.
constexpr double kQuad[3][3] = {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}};

struct ElementGeometry {
  Eigen::Vector2d grad[3];  // constant hat gradients
  double area;              // chart area
};

ElementGeometry element_geometry(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  Eigen::Matrix2d e;
  e.col(0) = mesh.vertices[tri[1]] - mesh.vertices[tri[0]];
  e.col(1) = mesh.vertices[tri[2]] - mesh.vertices[tri[0]];
  const double det = e(0, 0) * e(1, 1) - e(0, 1) * e(1, 0);
  if (det <= 0)
    throw ValidationError("fem: triangle " + std::to_string(t) +
                          " has non-positive chart area");
  ElementGeometry geom;
  geom.area = 0.5 * det;
  const Eigen::Matrix2d inv_t = e.inverse().transpose();
  geom.grad[0] = inv_t * Eigen::Vector2d(-1.0, -1.0);
  geom.grad[1] = inv_t * Eigen::Vector2d(1.0, 0.0);
  geom.grad[2] = inv_t * Eigen::Vector2d(0.0, 1.0);
  return geom;
}

Sym2 metric_at_quad(const SymTensorField& f, const std::array<int, 3>& tri, int q) {
  return bary_interp(f.at(tri[0]), f.at(tri[1]), f.at(tri[2]), kQuad[q][0], kQuad[q][1],
                     kQuad[q][2]);
}

void check_field(const Mesh& mesh, int field_size, const char* what) {
  if (field_size != mesh.num_vertices())
    throw ValidationError("fem: " + std::string(what) + " has " +
                          std::to_string(field_size) + " values for a mesh with " +
                          std::to_string(mesh.num_vertices()) + " vertices");
}

SparseMatrix from_element_blocks(const Mesh& mesh,
                                 const std::vector<Eigen::Matrix3d>& blocks) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(9 * blocks.size());
  for (int t = 0; t < mesh.num_triangles(); ++t)
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b)
        triplets.emplace_back(mesh.triangles[t][a], mesh.triangles[t][b], blocks[t](a, b));
  SparseMatrix out(mesh.num_vertices(), mesh.num_vertices());
  out.setFromTriplets(triplets.begin(), triplets.end());
  return out;
}

}  // namespace

SparseMatrix assemble_stiffness(const Mesh& mesh, const MetricField& g) {
  check_field(mesh, g.size(), "metric");
  const SymTensorField gf = g.as_tensor();
  std::vector<Eigen::Matrix3d> blocks(mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const ElementGeometry geom = element_geometry(mesh, t);
    Eigen::Matrix3d ke = Eigen::Matrix3d::Zero();
    for (int q = 0; q < 3; ++q) {
      const Sym2 gq = metric_at_quad(gf, mesh.triangles[t], q);
      if (!gq.positive_definite())
        throw NumericalError("fem: metric not positive definite at a quadrature point "
                             "of triangle " +
                             std::to_string(t));
      const double w = geom.area / 3.0 * std::sqrt(gq.det());
      for (int a = 0; a < 3; ++a) {
        const Eigen::Vector2d raised = gq.solve(geom.grad[a]);
        for (int b = a; b < 3; ++b) {
          const double v = w * raised.dot(geom.grad[b]);
          ke(a, b) += v;
          if (b != a) ke(b, a) += v;
        }
      }
    }
    blocks[t] = ke;
  }
  return from_element_blocks(mesh, blocks);
}

SparseMatrix assemble_mass(const Mesh& mesh, const MetricField& g) {
  check_field(mesh, g.size(), "metric");
  const SymTensorField gf = g.as_tensor();
  std::vector<Eigen::Matrix3d> blocks(mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const ElementGeometry geom = element_geometry(mesh, t);
    Eigen::Matrix3d me = Eigen::Matrix3d::Zero();
    for (int q = 0; q < 3; ++q) {
      const Sym2 gq = metric_at_quad(gf, mesh.triangles[t], q);
      if (!gq.positive_definite())
        throw NumericalError("fem: metric not positive definite at a quadrature point "
                             "of triangle " +
                             std::to_string(t));
      const double w = geom.area / 3.0 * std::sqrt(gq.det());
      for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) {
          const double v = w * kQuad[q][a] * kQuad[q][b];
          me(a, b) += v;
          if (b != a) me(b, a) += v;
        }
    }
    blocks[t] = me;
  }
  return from_element_blocks(mesh, blocks);
}

AssembledDerivatives assemble_derivatives(const Mesh& mesh, const MetricField& g0,
                                          const SymTensorField& T) {
  check_field(mesh, g0.size(), "metric");
  check_field(mesh, T.size(), "perturbation");
  const SymTensorField gf = g0.as_tensor();
  std::vector<Eigen::Matrix3d> kblocks(mesh.num_triangles());
  std::vector<Eigen::Matrix3d> mblocks(mesh.num_triangles());
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const ElementGeometry geom = element_geometry(mesh, t);
    Eigen::Matrix3d ke = Eigen::Matrix3d::Zero(), me = Eigen::Matrix3d::Zero();
    for (int q = 0; q < 3; ++q) {
      const Sym2 gq = metric_at_quad(gf, mesh.triangles[t], q);
      if (!gq.positive_definite())
        throw NumericalError("fem: metric not positive definite at a quadrature point "
                             "of triangle " +
                             std::to_string(t));
      const Sym2 tq = metric_at_quad(T, mesh.triangles[t], q);
      const double root = std::sqrt(gq.det());
      const double half_trace = 0.5 * trace_h(tq, gq);
      // d/dt [g^{-1} sqrt(det g)] = (-g^{-1} T g^{-1} + (1/2) tr(g^{-1}T) g^{-1}) sqrt(det g)
      const Eigen::Matrix2d gi = gq.inverse().matrix();
      const Eigen::Matrix2d dflux = (-gi * tq.matrix() * gi + half_trace * gi) * root;
      const double warea = geom.area / 3.0;
      for (int a = 0; a < 3; ++a)
        for (int b = a; b < 3; ++b) {
          const double kv = warea * geom.grad[a].dot(dflux * geom.grad[b]);
          const double mv = warea * kQuad[q][a] * kQuad[q][b] * half_trace * root;
          ke(a, b) += kv;
          me(a, b) += mv;
          if (b != a) {
            ke(b, a) += kv;
            me(b, a) += mv;
          }
        }
    }
    kblocks[t] = ke;
    mblocks[t] = me;
  }
  return {from_element_blocks(mesh, kblocks), from_element_blocks(mesh, mblocks)};
}

void write_matrix_coords(const std::string& path, const SparseMatrix& A) {
  std::ofstream out(path);
  if (!out) throw ValidationError("fem: cannot open '" + path + "' for writing");
  out << "row,col,value\n";
  for (int k = 0; k < A.outerSize(); ++k)
    for (SparseMatrix::InnerIterator it(A, k); it; ++it)
      out << it.row() << "," << it.col() << "," << format_double(it.value()) << "\n";
  if (!out) throw ValidationError("fem: failed writing '" + path + "'");
}

}  // namespace specdeform
