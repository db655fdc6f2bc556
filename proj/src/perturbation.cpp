#include "specdeform/perturbation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <utility>

#include "specdeform/common.hpp"

namespace specdeform {

namespace {

constexpr double kQuad[3][3] = {{0.5, 0.5, 0.0}, {0.0, 0.5, 0.5}, {0.5, 0.0, 0.5}};

struct ElementGeometry {
  Eigen::Vector2d grad[3];
  double area;
};

ElementGeometry element_geometry(const Mesh& mesh, int t) {
  const auto& tri = mesh.triangles[t];
  Eigen::Matrix2d e;
  e.col(0) = mesh.vertices[tri[1]] - mesh.vertices[tri[0]];
  e.col(1) = mesh.vertices[tri[2]] - mesh.vertices[tri[0]];
  const double det = e(0, 0) * e(1, 1) - e(0, 1) * e(1, 0);
  if (det <= 0)
    throw ValidationError("perturbation: triangle " + std::to_string(t) +
                          " has non-positive chart area");
  ElementGeometry geom;
  geom.area = 0.5 * det;
  const Eigen::Matrix2d inv_t = e.inverse().transpose();
  geom.grad[0] = inv_t * Eigen::Vector2d(-1.0, -1.0);
  geom.grad[1] = inv_t * Eigen::Vector2d(1.0, 0.0);
  geom.grad[2] = inv_t * Eigen::Vector2d(0.0, 1.0);
  return geom;
}

Sym2 quad_interp(const std::vector<Sym2>& f, const std::array<int, 3>& tri, int q) {
  return bary_interp(f[tri[0]], f[tri[1]], f[tri[2]], kQuad[q][0], kQuad[q][1],
                     kQuad[q][2]);
}

void check_cluster(const Mesh& mesh, const EigenCluster& cluster) {
  if (cluster.basis.rows() != mesh.num_vertices() ||
      cluster.basis.cols() != cluster.multiplicity || cluster.multiplicity < 1)
    throw ValidationError("perturbation: cluster basis is " +
                          std::to_string(cluster.basis.rows()) + "x" +
                          std::to_string(cluster.basis.cols()) + " for a mesh with " +
                          std::to_string(mesh.num_vertices()) + " vertices");
}

void check_orthonormal(const EigenCluster& cluster, const SparseMatrix& M) {
  const Eigen::MatrixXd gram = cluster.basis.transpose() * (M * cluster.basis);
  const double defect =
      (gram - Eigen::MatrixXd::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
  if (defect > 1e-8)
    throw ValidationError("perturbation: cluster basis is not M-orthonormal (defect " +
                          format_double(defect) + ")");
}

double min_consecutive_gap(const Eigen::VectorXd& sorted) {
  if (sorted.size() < 2) return std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  for (int i = 1; i < sorted.size(); ++i) gap = std::min(gap, sorted[i] - sorted[i - 1]);
  return gap;
}

std::ofstream open_csv(const std::string& path, const char* what) {
  std::ofstream out(path);
  if (!out)
    throw ValidationError(std::string("perturbation: cannot open '") + path +
                          "' for writing " + what);
  return out;
}

}  // namespace

Eigen::VectorXd BranchMatrix::slopes() const {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(matrix);
  return es.eigenvalues();
}

BranchMatrix hadamard_matrix(const Mesh& mesh, const MetricField& g,
                             const EigenCluster& cluster, const SymTensorField& H) {
  check_cluster(mesh, cluster);
  if (g.size() != mesh.num_vertices() || H.size() != mesh.num_vertices())
    throw ValidationError("perturbation: metric/perturbation field size does not match "
                          "the mesh");
  check_orthonormal(cluster, assemble_mass(mesh, g));

  const int m = cluster.multiplicity;
  const ScalarField h = trace_h(H, g);
  const std::vector<Sym2>& gv = g.values();

  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, m);
  std::vector<Eigen::Vector2d> gphi(m);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const ElementGeometry geom = element_geometry(mesh, t);

    Eigen::Vector2d gh = Eigen::Vector2d::Zero();
    for (int a = 0; a < 3; ++a) gh += h[tri[a]] * geom.grad[a];
    for (int i = 0; i < m; ++i) {
      gphi[i].setZero();
      for (int a = 0; a < 3; ++a) gphi[i] += cluster.basis(tri[a], i) * geom.grad[a];
    }

    for (int q = 0; q < 3; ++q) {
      const Sym2 gq = quad_interp(gv, tri, q);
      if (!gq.positive_definite())
        throw NumericalError("perturbation: metric not positive definite at a "
                             "quadrature point of triangle " +
                             std::to_string(t));
      const Sym2 hq = quad_interp(H.values, tri, q);
      const double w = geom.area / 3.0 * std::sqrt(gq.det());
      const Eigen::Vector2d gh_up = gq.solve(gh);

      for (int i = 0; i < m; ++i) {
        double phi_i = 0;
        for (int a = 0; a < 3; ++a) phi_i += kQuad[q][a] * cluster.basis(tri[a], i);
        const Eigen::Vector2d up_i = gq.solve(gphi[i]);
        for (int j = i; j < m; ++j) {
          double phi_j = 0;
          for (int a = 0; a < 3; ++a) phi_j += kQuad[q][a] * cluster.basis(tri[a], j);
          const Eigen::Vector2d dprod = phi_i * gphi[j] + phi_j * gphi[i];
          const double laplace_term = -0.25 * dprod.dot(gh_up);
          const double direct_term = -up_i.dot(hq.matrix() * gq.solve(gphi[j]));
          out(i, j) += w * (laplace_term + direct_term);
        }
      }
    }
  }
  for (int i = 0; i < m; ++i)
    for (int j = i + 1; j < m; ++j) out(j, i) = out(i, j);
  return {std::move(out), "geometric"};
}

BranchMatrix discrete_branch_matrix(const EigenCluster& cluster, const SparseMatrix& M,
                                    const AssembledDerivatives& derivs) {
  if (cluster.basis.rows() != M.rows())
    throw ValidationError("perturbation: cluster basis does not match the mass matrix");
  check_orthonormal(cluster, M);
  const Eigen::MatrixXd pencil_prime =
      derivs.K_prime * cluster.basis - cluster.lambda_bar * (derivs.M_prime * cluster.basis);
  Eigen::MatrixXd out = cluster.basis.transpose() * pencil_prime;
  out = 0.5 * (out + out.transpose()).eval();
  return {std::move(out), "discrete-oracle"};
}

double boundary_flux_estimate(const Mesh& mesh, const MetricField& g,
                              const EigenCluster& cluster, int i, int j,
                              const SymTensorField& H) {
  check_cluster(mesh, cluster);
  if (i < 0 || i >= cluster.multiplicity || j < 0 || j >= cluster.multiplicity)
    throw ValidationError("perturbation: basis index out of range");

  // Owner triangle of each directed edge; boundary loops run with the
  // interior on the left, so a boundary edge (a,b) is owned by exactly one.
  std::map<std::pair<int, int>, int> owner;
  for (int t = 0; t < mesh.num_triangles(); ++t)
    for (int e = 0; e < 3; ++e)
      owner[{mesh.triangles[t][e], mesh.triangles[t][(e + 1) % 3]}] = t;

  const ScalarField h = trace_h(H, g);
  double flux = 0;
  for (const auto& edge : mesh.boundary_edges) {
    const int a = edge[0], b = edge[1];
    const auto it = owner.find({a, b});
    if (it == owner.end())
      throw ValidationError("perturbation: boundary edge " + std::to_string(a) + "-" +
                            std::to_string(b) + " has no owning triangle");
    const ElementGeometry geom = element_geometry(mesh, it->second);
    const auto& tri = mesh.triangles[it->second];

    Eigen::Vector2d dphi_i = Eigen::Vector2d::Zero(), dphi_j = Eigen::Vector2d::Zero();
    for (int c = 0; c < 3; ++c) {
      dphi_i += cluster.basis(tri[c], i) * geom.grad[c];
      dphi_j += cluster.basis(tri[c], j) * geom.grad[c];
    }
    const double phi_i_mid = 0.5 * (cluster.basis(a, i) + cluster.basis(b, i));
    const double phi_j_mid = 0.5 * (cluster.basis(a, j) + cluster.basis(b, j));
    const Eigen::Vector2d dprod = phi_i_mid * dphi_j + phi_j_mid * dphi_i;

    const Eigen::Vector2d e = mesh.vertices[b] - mesh.vertices[a];
    const Eigen::Vector2d n_chart(e.y(), -e.x());  // outward: interior on the left
    const Sym2 g_mid = 0.5 * (g.at(a) + g.at(b));
    const Eigen::Vector2d nu =
        g_mid.solve(n_chart) / std::sqrt(n_chart.dot(g_mid.solve(n_chart)));
    const double ds = std::sqrt(g_mid.quad(e, e));
    const double h_mid = 0.5 * (h[a] + h[b]);
    flux += dprod.dot(nu) * h_mid * ds;
  }
  return flux;
}

Eigen::VectorXd BranchCurves::central_slopes() const {
  const int nt = static_cast<int>(t_grid.size());
  if (anchor <= 0 || anchor >= nt - 1)
    throw ValidationError("perturbation: slope estimate needs grid points on both "
                          "sides of t=0");
  return (lambda.col(anchor + 1) - lambda.col(anchor - 1)) /
         (t_grid[anchor + 1] - t_grid[anchor - 1]);
}

BranchCurves track_branches(const Mesh& mesh, const MetricField& g0,
                            const SymTensorField& T, double lambda_bar,
                            const std::vector<double>& t_grid,
                            const TrackOptions& options) {
  const int nt = static_cast<int>(t_grid.size());
  if (nt == 0) throw ValidationError("perturbation: empty t grid");
  int anchor = -1;
  for (int s = 0; s < nt; ++s) {
    if (s > 0 && !(t_grid[s] > t_grid[s - 1]))
      throw ValidationError("perturbation: t grid must be strictly ascending");
    if (std::abs(t_grid[s]) < 1e-15) anchor = s;
  }
  const double span = std::max(std::abs(t_grid.front()), std::abs(t_grid.back()));
  for (int s = 0; s < nt; ++s)
    if (std::abs(t_grid[s] + t_grid[nt - 1 - s]) > 1e-12 * std::max(1.0, span))
      throw ValidationError("perturbation: t grid must be symmetric about 0");
  if (anchor < 0) throw ValidationError("perturbation: t grid must contain t=0");
  if (options.k < 1) throw ValidationError("perturbation: need at least one eigenpair");

  // Reference cluster at t=0.
  const SparseMatrix K0 = assemble_stiffness(mesh, g0);
  const SparseMatrix M0 = assemble_mass(mesh, g0);
  const std::vector<EigenPair> pairs0 = solve_gevp(K0, M0, options.k);
  const std::vector<EigenCluster> clusters = cluster(pairs0, M0, options.cluster_tol);

  const EigenCluster* ref = nullptr;
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c : clusters) {
    const double d = std::abs(c.lambda_bar - lambda_bar);
    if (d < best) {
      best = d;
      ref = &c;
    }
  }
  if (!ref || best > 0.05 * std::max(1.0, std::abs(lambda_bar)))
    throw ValidationError("perturbation: no eigenvalue cluster near lambda_bar = " +
                          format_double(lambda_bar));
  const int m = ref->multiplicity;

  // Isolation and the tracking window.
  const double scale = std::max(1.0, std::abs(ref->lambda_bar));
  double gap = std::numeric_limits<double>::infinity();
  if (ref->first_index > 0)
    gap = std::min(gap, pairs0[ref->first_index].lambda -
                            pairs0[ref->first_index - 1].lambda);
  if (ref->first_index + m < static_cast<int>(pairs0.size()))
    gap = std::min(gap, pairs0[ref->first_index + m].lambda -
                            pairs0[ref->first_index + m - 1].lambda);
  else
    throw NumericalError("perturbation: cluster sits at the top of the computed "
                         "spectrum; increase k to measure isolation");
  if (gap < 5 * options.cluster_tol * scale)
    throw NumericalError("perturbation: cluster at " + format_double(ref->lambda_bar) +
                         " is not isolated (gap " + format_double(gap) + ")");
  const double window = gap / 2;

  // Rotate the anchor basis to diagonalize the first-order response: the
  // t-analytic eigenvector branches land on this basis as t -> 0, so the
  // first matching step sees overlaps near 1 instead of an arbitrary mixing
  // inside the degenerate cluster.
  EigenCluster anchor_cluster = *ref;
  Eigen::VectorXd anchor_lambda(m);
  for (int b = 0; b < m; ++b) anchor_lambda[b] = pairs0[ref->first_index + b].lambda;
  if (m > 1) {
    const BranchMatrix oracle =
        discrete_branch_matrix(*ref, M0, assemble_derivatives(mesh, g0, T));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(oracle.matrix);
    const Eigen::MatrixXd q = es.eigenvectors();
    anchor_cluster.basis = (anchor_cluster.basis * q).eval();
    anchor_lambda =
        (q.transpose() * anchor_lambda.asDiagonal() * q).diagonal().eval();
  }

  // Solve the grid; slot results by index so threading cannot reorder them.
  std::vector<std::vector<EigenPair>> sweep(nt);
  std::vector<SparseMatrix> masses(nt);
  parallel_for(nt, options.threads, [&](int s) {
    if (s == anchor) {
      sweep[s] = pairs0;
      masses[s] = M0;
      return;
    }
    const MetricField gt = metric_at_t(g0, T, t_grid[s]);
    masses[s] = assemble_mass(mesh, gt);
    sweep[s] = solve_gevp(assemble_stiffness(mesh, gt), masses[s], options.k);
  });

  BranchCurves curves;
  curves.t_grid = t_grid;
  curves.anchor = anchor;
  curves.lambda_bar = ref->lambda_bar;
  curves.lambda.resize(m, nt);
  curves.overlap.resize(m, nt);

  for (int b = 0; b < m; ++b) {
    curves.lambda(b, anchor) = anchor_lambda[b];
    curves.overlap(b, anchor) = 1.0;
  }

  // March outward from the anchor in both directions, matching by overlap.
  for (const int dir : {+1, -1}) {
    Eigen::MatrixXd prev = anchor_cluster.basis;
    for (int s = anchor + dir; s >= 0 && s < nt; s += dir) {
      std::vector<int> in_window;
      for (int p = 0; p < static_cast<int>(sweep[s].size()); ++p)
        if (std::abs(sweep[s][p].lambda - ref->lambda_bar) <= window)
          in_window.push_back(p);
      if (static_cast<int>(in_window.size()) != m)
        throw NumericalError("perturbation: tracking window captured " +
                             std::to_string(in_window.size()) + " eigenvalues (expected " +
                             std::to_string(m) + ") at t=" + format_double(t_grid[s]));
      if (sweep[s].back().lambda <= ref->lambda_bar + window)
        throw NumericalError("perturbation: computed spectrum does not cover the "
                             "tracking window at t=" + format_double(t_grid[s]) +
                             "; increase k");

      Eigen::MatrixXd cur(mesh.num_vertices(), m);
      for (int c = 0; c < m; ++c) cur.col(c) = sweep[s][in_window[c]].phi;
      const Eigen::MatrixXd olap = (prev.transpose() * (masses[s] * cur)).cwiseAbs();

      // Greedy assignment on the overlap matrix: branch <- best free column.
      std::vector<int> col_of(m, -1);
      std::vector<bool> row_used(m, false), col_used(m, false);
      for (int pick = 0; pick < m; ++pick) {
        int br = -1, bc = -1;
        double bestv = -1;
        for (int r = 0; r < m; ++r)
          for (int c = 0; c < m; ++c)
            if (!row_used[r] && !col_used[c] && olap(r, c) > bestv) {
              bestv = olap(r, c);
              br = r;
              bc = c;
            }
        row_used[br] = col_used[bc] = true;
        col_of[br] = bc;
      }

      Eigen::MatrixXd matched(mesh.num_vertices(), m);
      for (int b = 0; b < m; ++b) {
        curves.lambda(b, s) = sweep[s][in_window[col_of[b]]].lambda;
        curves.overlap(b, s) = olap(b, col_of[b]);
        matched.col(b) = cur.col(col_of[b]);
      }
      prev = matched;
    }
  }
  return curves;
}

ResidualField residual_tensor(const Mesh& mesh, const MetricField& g,
                              const EigenCluster& cluster, int i, int j) {
  check_cluster(mesh, cluster);
  if (i == j)
    throw ValidationError("perturbation: residual tensor needs two distinct basis "
                          "indices (the formula targets the off-diagonal obstruction)");
  if (i < 0 || i >= cluster.multiplicity || j < 0 || j >= cluster.multiplicity)
    throw ValidationError("perturbation: basis index out of range");

  const int n = mesh.num_vertices();
  const SparseMatrix K = assemble_stiffness(mesh, g);
  const SparseMatrix M = assemble_mass(mesh, g);
  const Eigen::VectorXd lump = M * Eigen::VectorXd::Ones(n);

  // Mass-lumped weak Laplacian of the P1 interpolant of the product.
  const Eigen::VectorXd u =
      cluster.basis.col(i).cwiseProduct(cluster.basis.col(j));
  const Eigen::VectorXd lap = -(K * u).cwiseQuotient(lump);

  // Element gradients projected to the vertices with the same lumped weights.
  std::vector<Sym2> s_field(n, Sym2{0, 0, 0});
  const std::vector<Sym2>& gv = g.values();
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const ElementGeometry geom = element_geometry(mesh, t);
    Eigen::Vector2d di = Eigen::Vector2d::Zero(), dj = Eigen::Vector2d::Zero();
    for (int a = 0; a < 3; ++a) {
      di += cluster.basis(tri[a], i) * geom.grad[a];
      dj += cluster.basis(tri[a], j) * geom.grad[a];
    }
    const Sym2 s_elem{di.x() * dj.x(), 0.5 * (di.x() * dj.y() + di.y() * dj.x()),
                      di.y() * dj.y()};
    for (int q = 0; q < 3; ++q) {
      const Sym2 gq = quad_interp(gv, tri, q);
      const double w = geom.area / 3.0 * std::sqrt(gq.det());
      for (int a = 0; a < 3; ++a) {
        const double wa = w * kQuad[q][a];
        s_field[tri[a]] = s_field[tri[a]] + wa * s_elem;
      }
    }
  }

  ResidualField out;
  out.field = SymTensorField(n);
  for (int v = 0; v < n; ++v)
    out.field.at(v) = 0.25 * lap[v] * g.at(v) - (1.0 / lump[v]) * s_field[v];

  double norm2 = 0;
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    const ElementGeometry geom = element_geometry(mesh, t);
    for (int q = 0; q < 3; ++q) {
      const Sym2 gq = quad_interp(gv, tri, q);
      const Sym2 rq = quad_interp(out.field.values, tri, q);
      norm2 += geom.area / 3.0 * std::sqrt(gq.det()) * inner02(rq, rq, gq);
    }
  }
  out.l2_norm = std::sqrt(norm2);
  return out;
}

SymTensorField splitting_perturbation(const Mesh& mesh, const MetricField& g,
                                      const EigenCluster& cluster) {
  if (cluster.multiplicity < 2)
    throw ValidationError("perturbation: splitting needs a cluster of multiplicity "
                          ">= 2, got " + std::to_string(cluster.multiplicity));
  ResidualField r = residual_tensor(mesh, g, cluster, 0, 1);
  if (r.l2_norm < 1e-8) {
    // Degenerate obstruction; fall back to a generic direction.
    return random_perturbation(mesh, 4242, 0.5, 3);
  }
  return std::move(r.field);
}

GenericityResult genericity_experiment(const Mesh& mesh, const MetricField& g,
                                       const EigenCluster& cluster, int samples,
                                       std::uint64_t seed, double t_probe) {
  return genericity_experiment(mesh, g, cluster, samples, seed, t_probe,
                               [&mesh](std::uint64_t s) {
                                 return random_perturbation(mesh, s, 0.5, 3);
                               });
}

GenericityResult genericity_experiment(
    const Mesh& mesh, const MetricField& g, const EigenCluster& cluster, int samples,
    std::uint64_t seed, double t_probe,
    const std::function<SymTensorField(std::uint64_t)>& draw) {
  check_cluster(mesh, cluster);
  if (samples < 1) throw ValidationError("perturbation: samples must be >= 1");

  GenericityResult result;
  result.gap_tol = 1e-6 * std::max(1.0, std::abs(cluster.lambda_bar));

  int confirmed_budget = 3;
  int split_count = 0;
  for (int s = 0; s < samples; ++s) {
    GenericitySample rec;
    rec.seed = seed + static_cast<std::uint64_t>(s);
    const SymTensorField T = draw(rec.seed);
    const BranchMatrix bm = hadamard_matrix(mesh, g, cluster, T);
    rec.min_gap = min_consecutive_gap(bm.slopes());
    rec.split = rec.min_gap > result.gap_tol;
    rec.confirmed = -1;

    if (rec.split) ++split_count;
    if (rec.split && confirmed_budget > 0 && t_probe != 0.0) {
      --confirmed_budget;
      const MetricField gt = metric_at_t(g, T, t_probe);
      const int k = std::min(mesh.num_vertices(),
                             cluster.first_index + cluster.multiplicity + 2);
      const std::vector<EigenPair> pairs =
          solve_gevp(assemble_stiffness(mesh, gt), assemble_mass(mesh, gt), k);
      // The m eigenvalues nearest the cluster should separate at first order.
      std::vector<double> dist;
      for (const auto& p : pairs) dist.push_back(std::abs(p.lambda - cluster.lambda_bar));
      std::vector<int> order(pairs.size());
      for (int p = 0; p < static_cast<int>(order.size()); ++p) order[p] = p;
      std::sort(order.begin(), order.end(),
                [&dist](int a, int b) { return dist[a] < dist[b]; });
      Eigen::VectorXd nearest(cluster.multiplicity);
      for (int p = 0; p < cluster.multiplicity; ++p)
        nearest[p] = pairs[order[p]].lambda;
      std::sort(nearest.data(), nearest.data() + nearest.size());
      const double measured = min_consecutive_gap(nearest);
      rec.confirmed = measured >= 0.3 * std::abs(t_probe) * rec.min_gap ? 1 : 0;
    }
    result.samples.push_back(rec);
  }
  result.split_fraction = static_cast<double>(split_count) / samples;
  return result;
}

void write_branch_matrix_csv(const std::string& path, const BranchMatrix& bm) {
  std::ofstream out = open_csv(path, "a branch matrix");
  out << "i,j,value\n";
  for (int i = 0; i < bm.matrix.rows(); ++i)
    for (int j = 0; j < bm.matrix.cols(); ++j)
      out << i << "," << j << "," << format_double(bm.matrix(i, j)) << "\n";
  if (!out) throw ValidationError("perturbation: failed writing '" + path + "'");
}

void write_branches_csv(const std::string& path, const BranchCurves& curves) {
  std::ofstream out = open_csv(path, "branch curves");
  out << "t,branch,eigenvalue,overlap\n";
  for (int s = 0; s < static_cast<int>(curves.t_grid.size()); ++s)
    for (int b = 0; b < curves.lambda.rows(); ++b)
      out << format_double(curves.t_grid[s]) << "," << b << ","
          << format_double(curves.lambda(b, s)) << ","
          << format_double(curves.overlap(b, s)) << "\n";
  if (!out) throw ValidationError("perturbation: failed writing '" + path + "'");
}

void write_genericity_csv(const std::string& path, const GenericityResult& result) {
  std::ofstream out = open_csv(path, "genericity samples");
  out << "sample,seed,min_gap,split,confirmed\n";
  for (int s = 0; s < static_cast<int>(result.samples.size()); ++s) {
    const GenericitySample& rec = result.samples[s];
    out << s << "," << rec.seed << "," << format_double(rec.min_gap) << ","
        << (rec.split ? 1 : 0) << "," << rec.confirmed << "\n";
  }
  if (!out) throw ValidationError("perturbation: failed writing '" + path + "'");
}

}  // namespace specdeform
