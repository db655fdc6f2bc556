#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "oracles.hpp"
#include "specdeform/fem.hpp"
#include "specdeform/presets.hpp"

using namespace specdeform;
using doctest::Approx;
using doctest::Contains;

namespace {

// Exact P1 mass for the flat metric: |T|/12 * [[2,1,1],[1,2,1],[1,1,2]].
Eigen::MatrixXd exact_flat_mass(const Mesh& mesh) {
  const int nv = mesh.num_vertices();
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(nv, nv);
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const double s = triangle_area(mesh, t) / 12.0;
    const auto& tri = mesh.triangles[t];
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) m(tri[a], tri[b]) += s * (a == b ? 2.0 : 1.0);
  }
  return m;
}

}  // namespace

TEST_CASE("flat stiffness equals the cotangent formula") {
  for (int n : {1, 2, 5}) {
    CAPTURE(n);
    const Mesh mesh = generate_square(n);
    const Eigen::MatrixXd k = assemble_stiffness(mesh, MetricField::identity(mesh.num_vertices()));
    const Eigen::MatrixXd oracle = oracles::cotan_stiffness(mesh);
    CHECK((k - oracle).cwiseAbs().maxCoeff() < 1e-13);
  }
  const Mesh disk = generate_disk(3);
  const Eigen::MatrixXd k = assemble_stiffness(disk, MetricField::identity(disk.num_vertices()));
  CHECK((k - oracles::cotan_stiffness(disk)).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("mass matrix integrates areas exactly") {
  const Mesh mesh = generate_square(3);
  const int nv = mesh.num_vertices();
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(nv);

  const SparseMatrix m_flat = assemble_mass(mesh, MetricField::identity(nv));
  CHECK(ones.dot(m_flat * ones) == Approx(1.0).epsilon(1e-12));
  CHECK((Eigen::MatrixXd(m_flat) - exact_flat_mass(mesh)).cwiseAbs().maxCoeff() < 1e-15);

  const SparseMatrix m_diag =
      assemble_mass(mesh, MetricField::constant(nv, Sym2{4.0, 0.0, 9.0}));
  CHECK(ones.dot(m_diag * ones) == Approx(6.0).epsilon(1e-12));

  const Mesh disk = generate_disk(4);
  const Eigen::VectorXd dones = Eigen::VectorXd::Ones(disk.num_vertices());
  const SparseMatrix m_disk =
      assemble_mass(disk, MetricField::identity(disk.num_vertices()));
  CHECK(dones.dot(m_disk * dones) == Approx(total_area(disk)).epsilon(1e-12));
}

TEST_CASE("definiteness at desk scale") {
  const Mesh mesh = generate_square(6);
  nlohmann::json spec{{"type", "conformal"}, {"rho", "bump"}, {"scale", 0.4}};
  const MetricField g = metric_from_json(mesh, spec);
  const Eigen::MatrixXd k = assemble_stiffness(mesh, g);
  const Eigen::MatrixXd m = assemble_mass(mesh, g);

  CHECK((k - k.transpose()).cwiseAbs().maxCoeff() == 0.0);
  CHECK((m - m.transpose()).cwiseAbs().maxCoeff() == 0.0);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ek(k), em(m);
  CHECK(ek.eigenvalues().minCoeff() > -1e-12);
  CHECK(em.eigenvalues().minCoeff() > 0.0);

  // Constants lie in the stiffness kernel.
  const Eigen::VectorXd ones = Eigen::VectorXd::Ones(mesh.num_vertices());
  CHECK((k * ones).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("2D conformal invariance of the stiffness") {
  const Mesh mesh = generate_square(5);
  const int nv = mesh.num_vertices();
  const Eigen::MatrixXd k_flat = assemble_stiffness(mesh, MetricField::identity(nv));

  SUBCASE("constant scaling") {
    const Eigen::MatrixXd k_scaled =
        assemble_stiffness(mesh, MetricField::constant(nv, Sym2{7.5, 0.0, 7.5}));
    CHECK((k_scaled - k_flat).cwiseAbs().maxCoeff() < 1e-13);
  }
  SUBCASE("non-constant conformal factor, sampled at the same points") {
    nlohmann::json spec{{"type", "conformal"}, {"rho", "sinxy"}, {"scale", 0.7}};
    const Eigen::MatrixXd k_conf = assemble_stiffness(mesh, metric_from_json(mesh, spec));
    CHECK((k_conf - k_flat).cwiseAbs().maxCoeff() < 1e-13);
  }
}

TEST_CASE("assembled derivatives match the closed forms") {
  const Mesh mesh = generate_square(4);
  const int nv = mesh.num_vertices();
  const MetricField g0 = MetricField::identity(nv);

  SUBCASE("zero direction") {
    const auto d = assemble_derivatives(mesh, g0, SymTensorField(nv));
    CHECK(Eigen::MatrixXd(d.K_prime).cwiseAbs().maxCoeff() == 0.0);
    CHECK(Eigen::MatrixXd(d.M_prime).cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("conformal direction T = g") {
    // K' vanishes by conformal invariance; M' = M since d/dt sqrt(det) = 1.
    const auto d = assemble_derivatives(mesh, g0, g0.as_tensor());
    CHECK(Eigen::MatrixXd(d.K_prime).cwiseAbs().maxCoeff() < 1e-14);
    const Eigen::MatrixXd m = assemble_mass(mesh, g0);
    CHECK((Eigen::MatrixXd(d.M_prime) - m).cwiseAbs().maxCoeff() < 1e-15);
  }
}

TEST_CASE("derivatives agree with finite differences of the assembly") {
  const Mesh mesh = generate_square(4);
  nlohmann::json gspec{{"type", "conformal"}, {"rho", "bump"}, {"scale", 0.3}};
  const MetricField g0 = metric_from_json(mesh, gspec);
  const SymTensorField T = random_perturbation(mesh, 11, 0.8, 2);

  const auto d = assemble_derivatives(mesh, g0, T);
  const double step = 1e-5;
  const Eigen::MatrixXd k_plus = assemble_stiffness(mesh, metric_at_t(g0, T, step));
  const Eigen::MatrixXd k_minus = assemble_stiffness(mesh, metric_at_t(g0, T, -step));
  const Eigen::MatrixXd k_fd = (k_plus - k_minus) / (2 * step);
  CHECK((Eigen::MatrixXd(d.K_prime) - k_fd).norm() / Eigen::MatrixXd(d.K_prime).norm() <
        1e-6);

  const Eigen::MatrixXd m_plus = assemble_mass(mesh, metric_at_t(g0, T, step));
  const Eigen::MatrixXd m_minus = assemble_mass(mesh, metric_at_t(g0, T, -step));
  const Eigen::MatrixXd m_fd = (m_plus - m_minus) / (2 * step);
  CHECK((Eigen::MatrixXd(d.M_prime) - m_fd).norm() / Eigen::MatrixXd(d.M_prime).norm() <
        1e-6);
}

TEST_CASE("assembly errors") {
  const Mesh mesh = generate_square(2);
  const int nv = mesh.num_vertices();

  SUBCASE("metric losing definiteness names the element") {
    std::vector<Sym2> values(nv, Sym2{1.0, 0.0, 1.0});
    values[4] = {-1.0, 0.0, -1.0};  // interior vertex of the 3x3 grid
    const MetricField bad = MetricField::unchecked(std::move(values));
    CHECK_THROWS_WITH_AS(assemble_stiffness(mesh, bad), Contains("triangle"),
                         NumericalError);
    CHECK_THROWS_WITH_AS(assemble_mass(mesh, bad), Contains("quadrature point"),
                         NumericalError);
  }
  SUBCASE("field size mismatch") {
    CHECK_THROWS_WITH_AS(assemble_stiffness(mesh, MetricField::identity(nv - 2)),
                         Contains("values for a mesh"), ValidationError);
    CHECK_THROWS_WITH_AS(
        assemble_derivatives(mesh, MetricField::identity(nv), SymTensorField(3)),
        Contains("perturbation"), ValidationError);
  }
}

TEST_CASE("coordinate dump") {
  const Mesh mesh = generate_square(1);
  const SparseMatrix m = assemble_mass(mesh, MetricField::identity(mesh.num_vertices()));
  const std::string path =
      (std::filesystem::temp_directory_path() / "mass.coords").string();
  write_matrix_coords(path, m);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "row,col,value");
  int lines = 0;
  for (std::string line; std::getline(in, line);) ++lines;
  CHECK(lines == m.nonZeros());
  std::remove(path.c_str());
}
