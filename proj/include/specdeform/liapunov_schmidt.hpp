#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "specdeform/eigensolver.hpp"
#include "specdeform/fem.hpp"
#include "specdeform/mesh.hpp"
#include "specdeform/metric.hpp"

namespace specdeform {

struct Reduced {
  Eigen::MatrixXd A;       // m x m, symmetrized
  double asymmetry = 0.0;  // ||A - A^T||_inf / max(||A||_inf, max(1, |lambda0|))
};

// Finite-dimensional reduction of the deformed eigenvalue problem onto a
// fixed reference cluster basis Phi held at t=0.  For each (t, lambda) the
// complement correction w_j solves the bordered system
//
//   [ K(t) - lambda M(t)   M(t) Phi ] [ w  ]   [ -(K(t) - lambda M(t)) phi_j ]
//   [ Phi^T M(t)           0        ] [ mu ] = [  0                          ]
//
// and A_ij(t, lambda) = phi_i^T (lambda M(t) - K(t)) (phi_j + w_j).  The sign
// is fixed so that A(0, lambda) = (lambda - lambda0) I; lambda is an
// eigenvalue of the pencil (K(t), M(t)) near the cluster exactly when
// det A(t, lambda) = 0.
class Reduction {
 public:
  // Copies its inputs; `cluster` must be M(g0)-orthonormal to 1e-8.
  Reduction(const Mesh& mesh, const MetricField& g0, const SymTensorField& T,
            const EigenCluster& cluster);

  // Rank-m spectral projector at t=0: P v = Phi Phi^T M(0) v.  Idempotent to
  // round-off because Phi is M(0)-orthonormal.
  Eigen::VectorXd project(const Eigen::VectorXd& v) const;

  // Complement correction w_j with Phi^T M(t) w_j = 0 and the off-cluster
  // residual (I - P(t))(K - lambda M)(phi_j + w_j) below 1e-9 ||K||_F.
  // Throws NumericalError if the bordered solve fails even after one
  // spectral shift retry (lambda sitting on a complement eigenvalue).
  Eigen::VectorXd complement_solve(double t, double lambda, int j) const;

  Reduced reduced_matrix(double t, double lambda) const;

  // The roots of det A(t, .) in [lambda0 - window, lambda0 + window],
  // ascending, counted with multiplicity.  Located per sorted-eigenvalue
  // index of A (each index function crosses zero exactly once because
  // dA/dlambda ~ I), bracketed on a fixed grid and refined by bisection.
  // Throws NumericalError when the window does not bracket exactly one root
  // per index, mirroring the count guarantee it discretizes.
  std::vector<double> det_roots(double t, double lambda0, double window) const;

  double lambda0() const { return cluster_.lambda_bar; }
  int multiplicity() const { return cluster_.multiplicity; }
  const EigenCluster& cluster() const { return cluster_; }

 private:
  void refresh(double t) const;
  void factor(double lambda) const;  // bordered LU at the cached t
  Eigen::VectorXd solve_one(double lambda, int j) const;

  Mesh mesh_;
  MetricField g0_;
  SymTensorField T_;
  EigenCluster cluster_;
  SparseMatrix M0_;

  // Assembly and factorization cache for the last queried (t, lambda).
  mutable bool have_t_ = false;
  mutable double t_cache_ = 0.0;
  mutable SparseMatrix K_t_, M_t_;
  mutable Eigen::MatrixXd m_phi_;  // M(t) Phi border block
  mutable double k_scale_ = 1.0;   // ||K(t)||_F, residual yardstick
  mutable bool have_lambda_ = false;
  mutable double lambda_cache_ = 0.0;
  mutable std::unique_ptr<Eigen::SparseLU<SparseMatrix>> lu_;
  mutable bool pattern_ready_ = false;
};

// CSV: t,root_index,lambda_root,pencil_eigenvalue,abs_difference.  `roots`
// and `pencil` must be matched lists of equal length.
void write_roots_csv(const std::string& path, double t,
                     const std::vector<double>& roots,
                     const std::vector<double>& pencil);

}  // namespace specdeform
