#include "specdeform/eigensolver.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#ifdef SPECDEFORM_USE_LAPACKE
#include <lapacke.h>
#else
#include <Eigen/Eigenvalues>
#endif

namespace specdeform {

namespace {

// z(:,j) -> sign such that the largest-magnitude coefficient is positive;
// keeps fixtures and overlap matching reproducible across runs.
void fix_signs(Eigen::MatrixXd& z) {
  for (int j = 0; j < z.cols(); ++j) {
    int idx = 0;
    z.col(j).cwiseAbs().maxCoeff(&idx);
    if (z(idx, j) < 0) z.col(j) = -z.col(j);
  }
}

// Tighten B-orthonormality: G = Z^T B Z, Z <- Z L^{-T} with G = L L^T.
void polish(Eigen::MatrixXd& z, const SparseMatrix& b) {
  const Eigen::MatrixXd gram = z.transpose() * (b * z);
  const Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success)
    throw NumericalError("eigensolver: eigenvector Gram matrix lost positive "
                         "definiteness during re-orthonormalization");
  z = llt.matrixL().solve(z.transpose()).transpose();
}

}  // namespace

std::vector<EigenPair> solve_gevp(const SparseMatrix& K, const SparseMatrix& M, int k) {
  const int n = static_cast<int>(K.rows());
  if (K.cols() != n || M.rows() != n || M.cols() != n)
    throw ValidationError("eigensolver: matrix dimensions disagree (K " +
                          std::to_string(K.rows()) + "x" + std::to_string(K.cols()) +
                          ", M " + std::to_string(M.rows()) + "x" +
                          std::to_string(M.cols()) + ")");
  if (k < 1 || k > n)
    throw ValidationError("eigensolver: requested " + std::to_string(k) +
                          " eigenpairs from a problem of dimension " + std::to_string(n));

  Eigen::VectorXd w(k);
  Eigen::MatrixXd z(n, k);

#ifdef SPECDEFORM_USE_LAPACKE
  Eigen::MatrixXd a = Eigen::MatrixXd(K);
  Eigen::MatrixXd b = Eigen::MatrixXd(M);
  std::vector<lapack_int> ifail(n);
  lapack_int found = 0;
  const double abstol = 2 * LAPACKE_dlamch('S');
  Eigen::VectorXd wfull(n);
  const lapack_int info = LAPACKE_dsygvx(
      LAPACK_COL_MAJOR, 1, 'V', 'I', 'L', n, a.data(), n, b.data(), n, 0.0, 0.0, 1, k,
      abstol, &found, wfull.data(), z.data(), n, ifail.data());
  if (info > n)
    throw NumericalError("eigensolver: mass matrix is not positive definite (leading "
                         "minor of order " +
                         std::to_string(info - n) + ")");
  if (info != 0)
    throw NumericalError("eigensolver: backend failed to converge (info=" +
                         std::to_string(info) + ")");
  if (found != k)
    throw NumericalError("eigensolver: backend returned " + std::to_string(found) +
                         " of " + std::to_string(k) + " requested eigenpairs");
  w = wfull.head(k);
#else
  const Eigen::MatrixXd a = Eigen::MatrixXd(K);
  const Eigen::MatrixXd b = Eigen::MatrixXd(M);
  // Reject indefinite mass up front; the solver assumes it.
  if (Eigen::LLT<Eigen::MatrixXd>(b).info() != Eigen::Success)
    throw NumericalError("eigensolver: mass matrix is not positive definite");
  Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> es(a, b);
  if (es.info() != Eigen::Success)
    throw NumericalError("eigensolver: backend failed to converge");
  w = es.eigenvalues().head(k);
  z = es.eigenvectors().leftCols(k);
#endif

  polish(z, M);
  fix_signs(z);

  std::vector<EigenPair> pairs(k);
  for (int j = 0; j < k; ++j) {
    pairs[j].lambda = w[j];
    pairs[j].phi = z.col(j);
  }
  return pairs;
}

std::vector<EigenCluster> cluster(const std::vector<EigenPair>& pairs,
                                  const SparseMatrix& M, double cluster_tol) {
  if (pairs.empty()) return {};
  if (!(cluster_tol >= 0))
    throw ValidationError("eigensolver: cluster tolerance must be >= 0, got " +
                          format_double(cluster_tol));
  for (size_t j = 1; j < pairs.size(); ++j)
    if (pairs[j].lambda < pairs[j - 1].lambda)
      throw ValidationError("eigensolver: eigenvalues must be ascending to cluster");

  std::vector<EigenCluster> out;
  const int n = static_cast<int>(pairs[0].phi.size());
  size_t start = 0;
  while (start < pairs.size()) {
    size_t end = start + 1;
    while (end < pairs.size()) {
      const double gap = pairs[end].lambda - pairs[end - 1].lambda;
      const double scale = std::max(1.0, std::abs(pairs[end - 1].lambda));
      if (!(gap < cluster_tol * scale)) break;
      ++end;
    }
    EigenCluster c;
    c.multiplicity = static_cast<int>(end - start);
    c.first_index = static_cast<int>(start);
    c.basis.resize(n, c.multiplicity);
    double sum = 0;
    for (size_t j = start; j < end; ++j) {
      sum += pairs[j].lambda;
      c.basis.col(static_cast<int>(j - start)) = pairs[j].phi;
    }
    c.lambda_bar = sum / c.multiplicity;
    polish(c.basis, M);
    fix_signs(c.basis);
    out.push_back(std::move(c));
    start = end;
  }
  return out;
}

void write_spectrum_csv(const std::string& path, const std::vector<EigenPair>& pairs,
                        const std::vector<EigenCluster>& clusters) {
  std::ofstream out(path);
  if (!out) throw ValidationError("eigensolver: cannot open '" + path + "' for writing");
  out << "index,eigenvalue,cluster,multiplicity\n";
  for (size_t c = 0; c < clusters.size(); ++c)
    for (int j = 0; j < clusters[c].multiplicity; ++j) {
      const int idx = clusters[c].first_index + j;
      out << idx << "," << format_double(pairs[idx].lambda) << "," << c << ","
          << clusters[c].multiplicity << "\n";
    }
  if (!out) throw ValidationError("eigensolver: failed writing '" + path + "'");
}

}  // namespace specdeform
