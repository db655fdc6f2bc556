#pragma once

#include <string>
#include <vector>

#include "specdeform/fem.hpp"

namespace specdeform {

struct EigenPair {
  double lambda = 0.0;
  ScalarField phi;  // M-normalized, largest-magnitude coefficient positive
};

// A maximal run of near-degenerate eigenvalues treated as one eigenvalue of
// multiplicity m.
struct EigenCluster {
  double lambda_bar = 0.0;   // mean of the member eigenvalues
  int multiplicity = 0;
  int first_index = 0;       // position of the first member in the ascending list
  Eigen::MatrixXd basis;     // N x m, M-orthonormal columns
};

// k smallest eigenpairs of K phi = lambda M phi, ascending, with
// Phi^T M Phi = I enforced to round-off by a Cholesky polish.  Dense
// symmetric-definite reduction: robust at the problem sizes this tool
// targets, no iterative tuning.  Throws NumericalError if M is not positive
// definite or the backend fails to converge.
std::vector<EigenPair> solve_gevp(const SparseMatrix& K, const SparseMatrix& M, int k);

// Partition ascending eigenpairs into maximal runs whose consecutive gaps are
// below cluster_tol * max(1, |lambda|); each run's basis is re-orthonormalized
// against M.  cluster_tol = infinity collapses everything into one cluster.
std::vector<EigenCluster> cluster(const std::vector<EigenPair>& pairs,
                                  const SparseMatrix& M, double cluster_tol);

// CSV: index,eigenvalue,cluster,multiplicity.
void write_spectrum_csv(const std::string& path, const std::vector<EigenPair>& pairs,
                        const std::vector<EigenCluster>& clusters);

}  // namespace specdeform
