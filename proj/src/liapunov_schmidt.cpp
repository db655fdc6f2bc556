#include "specdeform/liapunov_schmidt.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <vector>

#include "specdeform/common.hpp"

namespace specdeform {

namespace {

// One spectral shift before giving up when the bordered matrix is singular.
constexpr double kShiftRel = 1e-8;

}  // namespace

Reduction::Reduction(const Mesh& mesh, const MetricField& g0, const SymTensorField& T,
                     const EigenCluster& cluster)
    : mesh_(mesh), g0_(g0), T_(T), cluster_(cluster) {
  const int n = mesh_.num_vertices();
  if (g0_.size() != n || T_.size() != n)
    throw ValidationError("liapunov_schmidt: field size does not match the mesh");
  if (cluster_.multiplicity < 1 || cluster_.basis.rows() != n ||
      cluster_.basis.cols() != cluster_.multiplicity)
    throw ValidationError("liapunov_schmidt: cluster basis is " +
                          std::to_string(cluster_.basis.rows()) + "x" +
                          std::to_string(cluster_.basis.cols()) +
                          " for a mesh with " + std::to_string(n) + " vertices");
  M0_ = assemble_mass(mesh_, g0_);
  const Eigen::MatrixXd gram = cluster_.basis.transpose() * (M0_ * cluster_.basis);
  const double defect =
      (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  if (defect > 1e-8)
    throw ValidationError(
        "liapunov_schmidt: cluster basis is not M-orthonormal (defect " +
        format_double(defect) + ")");
}

Eigen::VectorXd Reduction::project(const Eigen::VectorXd& v) const {
  if (v.size() != mesh_.num_vertices())
    throw ValidationError("liapunov_schmidt: vector length " +
                          std::to_string(v.size()) + " does not match the mesh");
  return cluster_.basis * (cluster_.basis.transpose() * (M0_ * v));
}

void Reduction::refresh(double t) const {
  if (have_t_ && t == t_cache_) return;
  const MetricField gt = metric_at_t(g0_, T_, t);
  K_t_ = assemble_stiffness(mesh_, gt);
  M_t_ = assemble_mass(mesh_, gt);
  m_phi_ = M_t_ * cluster_.basis;
  k_scale_ = K_t_.norm();
  t_cache_ = t;
  have_t_ = true;
  have_lambda_ = false;
}

void Reduction::factor(double lambda) const {
  if (have_lambda_ && lambda == lambda_cache_ && lu_) return;
  const int n = mesh_.num_vertices();
  const int m = cluster_.multiplicity;

  auto build = [&](double lam) {
    // The union pattern K u M is the same for every lambda, so the LU
    // pattern analysis can be reused across factorizations.
    const SparseMatrix pencil = K_t_ - lam * M_t_;
    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(pencil.nonZeros() + 2 * n * m);
    for (int c = 0; c < pencil.outerSize(); ++c)
      for (SparseMatrix::InnerIterator it(pencil, c); it; ++it)
        trips.emplace_back(it.row(), c, it.value());
    for (int c = 0; c < m; ++c)
      for (int r = 0; r < n; ++r) {
        trips.emplace_back(r, n + c, m_phi_(r, c));
        trips.emplace_back(n + c, r, m_phi_(r, c));
      }
    SparseMatrix b(n + m, n + m);
    b.setFromTriplets(trips.begin(), trips.end());
    return b;
  };

  if (!lu_) lu_ = std::make_unique<Eigen::SparseLU<SparseMatrix>>();
  double lam = lambda;
  for (int attempt = 0; attempt < 2; ++attempt) {
    const SparseMatrix b = build(lam);
    if (!pattern_ready_) {
      lu_->analyzePattern(b);
      pattern_ready_ = true;
    }
    lu_->factorize(b);
    if (lu_->info() == Eigen::Success) {
      lambda_cache_ = lambda;
      have_lambda_ = true;
      return;
    }
    lam = lambda + kShiftRel * std::max(1.0, std::abs(lambda));
  }
  throw NumericalError(
      "liapunov_schmidt: bordered system is singular at lambda = " +
      format_double(lambda) + " (resonance with a complement eigenvalue?)");
}

Eigen::VectorXd Reduction::solve_one(double lambda, int j) const {
  const int n = mesh_.num_vertices();
  const int m = cluster_.multiplicity;
  const double lam = lambda_cache_;  // factor() may have shifted

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n + m);
  rhs.head(n) = lam * (M_t_ * cluster_.basis.col(j)) - K_t_ * cluster_.basis.col(j);
  const Eigen::VectorXd sol = lu_->solve(rhs);
  if (lu_->info() != Eigen::Success)
    throw NumericalError("liapunov_schmidt: bordered solve failed at lambda = " +
                         format_double(lambda));

  const Eigen::VectorXd w = sol.head(n);
  const Eigen::VectorXd mu = sol.tail(m);

  // Off-cluster residual: (K - lam M)(phi_j + w) + M Phi mu should vanish.
  const Eigen::VectorXd top = K_t_ * (cluster_.basis.col(j) + w) -
                              lam * (M_t_ * (cluster_.basis.col(j) + w)) + m_phi_ * mu;
  if (top.norm() > 1e-9 * k_scale_ * std::max(1.0, w.norm()))
    throw NumericalError("liapunov_schmidt: complement residual " +
                         format_double(top.norm()) + " exceeds tolerance at lambda = " +
                         format_double(lambda) + " (ill-conditioned bordered system)");
  const double constraint = (m_phi_.transpose() * w).cwiseAbs().maxCoeff();
  if (constraint > 1e-10 * std::max(1.0, w.norm()))
    throw NumericalError("liapunov_schmidt: complement is not M-orthogonal to the "
                         "cluster (defect " + format_double(constraint) + ")");
  return w;
}

Eigen::VectorXd Reduction::complement_solve(double t, double lambda, int j) const {
  if (j < 0 || j >= cluster_.multiplicity)
    throw ValidationError("liapunov_schmidt: basis index " + std::to_string(j) +
                          " out of range for multiplicity " +
                          std::to_string(cluster_.multiplicity));
  refresh(t);
  factor(lambda);
  return solve_one(lambda, j);
}

Reduced Reduction::reduced_matrix(double t, double lambda) const {
  refresh(t);
  factor(lambda);
  const int m = cluster_.multiplicity;
  const double lam = lambda_cache_;

  Eigen::MatrixXd corrected = cluster_.basis;
  for (int j = 0; j < m; ++j) corrected.col(j) += solve_one(lambda, j);

  const Eigen::MatrixXd pencil_applied =
      lam * (M_t_ * corrected) - K_t_ * corrected;
  Eigen::MatrixXd a = cluster_.basis.transpose() * pencil_applied;

  const double defect = (a - a.transpose()).cwiseAbs().maxCoeff();
  const double scale =
      std::max(a.cwiseAbs().maxCoeff(), std::max(1.0, std::abs(cluster_.lambda_bar)));
  Reduced out;
  out.asymmetry = defect / scale;
  if (out.asymmetry > 1e-6)
    throw NumericalError("liapunov_schmidt: reduced matrix asymmetry " +
                         format_double(out.asymmetry) + " at (t=" + format_double(t) +
                         ", lambda=" + format_double(lambda) + ")");
  out.A = 0.5 * (a + a.transpose());
  return out;
}

std::vector<double> Reduction::det_roots(double t, double lambda0,
                                         double window) const {
  if (!(window > 0))
    throw ValidationError("liapunov_schmidt: window must be positive, got " +
                          format_double(window));
  const int m = cluster_.multiplicity;
  constexpr int kGrid = 33;

  auto sorted_eigs = [&](double lam) {
    const Reduced red = reduced_matrix(t, lam);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(red.A);
    return es.eigenvalues();  // ascending
  };

  std::vector<Eigen::VectorXd> samples(kGrid);
  std::vector<double> grid(kGrid);
  for (int i = 0; i < kGrid; ++i) {
    grid[i] = lambda0 - window + 2.0 * window * i / (kGrid - 1);
    samples[i] = sorted_eigs(grid[i]);
  }

  std::vector<double> roots;
  for (int k = 0; k < m; ++k) {
    int bracket = -1, flips = 0;
    for (int i = 0; i + 1 < kGrid; ++i)
      if (samples[i][k] < 0 && samples[i + 1][k] >= 0) {
        bracket = i;
        ++flips;
      }
    if (flips != 1)
      throw NumericalError(
          "liapunov_schmidt: window [" + format_double(lambda0 - window) + ", " +
          format_double(lambda0 + window) + "] brackets " + std::to_string(flips) +
          " sign changes for root index " + std::to_string(k) +
          " (expected 1); the window does not isolate the cluster at t=" +
          format_double(t));

    double lo = grid[bracket], hi = grid[bracket + 1];
    const double tol = 1e-13 * std::max(1.0, std::abs(lambda0));
    for (int it = 0; it < 200 && hi - lo > tol; ++it) {
      const double mid = 0.5 * (lo + hi);
      if (sorted_eigs(mid)[k] < 0)
        lo = mid;
      else
        hi = mid;
    }
    roots.push_back(0.5 * (lo + hi));
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

void write_roots_csv(const std::string& path, double t,
                     const std::vector<double>& roots,
                     const std::vector<double>& pencil) {
  if (roots.size() != pencil.size())
    throw ValidationError("liapunov_schmidt: root list (" +
                          std::to_string(roots.size()) + ") and pencil list (" +
                          std::to_string(pencil.size()) + ") differ in length");
  std::ofstream out(path);
  if (!out)
    throw ValidationError("liapunov_schmidt: cannot open '" + path +
                          "' for writing roots");
  out << "t,root_index,lambda_root,pencil_eigenvalue,abs_difference\n";
  for (std::size_t i = 0; i < roots.size(); ++i)
    out << format_double(t) << "," << i << "," << format_double(roots[i]) << ","
        << format_double(pencil[i]) << ","
        << format_double(std::abs(roots[i] - pencil[i])) << "\n";
  if (!out) throw ValidationError("liapunov_schmidt: failed writing '" + path + "'");
}

}  // namespace specdeform
