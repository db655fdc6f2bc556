#pragma once

#include <Eigen/Sparse>
#include <string>

#include "specdeform/mesh.hpp"
#include "specdeform/metric.hpp"

namespace specdeform {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Stiffness of the positive Laplacian on piecewise-linear elements:
//   K_ab = sum over triangles of  int (g^{-1} grad psi_a) . grad psi_b sqrt(det g).
// The Neumann condition is natural, so no boundary rows are touched; constants
// lie in the kernel.  The metric is interpolated barycentrically to the three
// edge-midpoint quadrature points.
SparseMatrix assemble_stiffness(const Mesh& mesh, const MetricField& g);

// Mass matrix  M_ab = sum int psi_a psi_b sqrt(det g); symmetric positive
// definite, 1^T M 1 = area.  Exact for per-element-constant metrics (the
// integrand is quadratic and the edge-midpoint rule integrates quadratics).
SparseMatrix assemble_mass(const Mesh& mesh, const MetricField& g);

struct AssembledDerivatives {
  SparseMatrix K_prime;
  SparseMatrix M_prime;
};

// d/dt at t=0 of the assembled matrices along g(t) = g0 + t*T, in closed form:
//   d/dt g^{-1}       = -g^{-1} T g^{-1}
//   d/dt sqrt(det g)  = (1/2) tr(g^{-1} T) sqrt(det g).
AssembledDerivatives assemble_derivatives(const Mesh& mesh, const MetricField& g0,
                                          const SymTensorField& T);

// Coordinate text dump (row,col,value), one stored entry per line.
void write_matrix_coords(const std::string& path, const SparseMatrix& A);

}  // namespace specdeform
