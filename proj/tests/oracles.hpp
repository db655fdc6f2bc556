#pragma once

// Independent reference implementations the tests check the library against.
// Everything here is written the slow, obvious way on purpose.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "specdeform/mesh.hpp"
#include "specdeform/metric.hpp"

namespace oracles {

// <T, S>_g = g^{ia} g^{jb} T_ij S_ab, spelled out with four indices.
inline double inner02_bruteforce(const specdeform::Sym2& g, const specdeform::Sym2& t,
                                 const specdeform::Sym2& s) {
  const Eigen::Matrix2d gi = g.matrix().inverse();
  const Eigen::Matrix2d tm = t.matrix(), sm = s.matrix();
  double acc = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j)
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) acc += gi(i, a) * gi(j, b) * tm(i, j) * sm(a, b);
  return acc;
}

// Classic cotangent-weight stiffness matrix; valid for the Euclidean metric
// only, which is exactly when we use it.
inline Eigen::MatrixXd cotan_stiffness(const specdeform::Mesh& mesh) {
  const int nv = mesh.num_vertices();
  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(nv, nv);
  for (const auto& tri : mesh.triangles) {
    for (int c = 0; c < 3; ++c) {
      const int i = tri[(c + 1) % 3], j = tri[(c + 2) % 3], o = tri[c];
      const Eigen::Vector2d u = mesh.vertices[i] - mesh.vertices[o];
      const Eigen::Vector2d v = mesh.vertices[j] - mesh.vertices[o];
      const double cross = u.x() * v.y() - u.y() * v.x();
      const double cot = u.dot(v) / std::abs(cross);
      k(i, j) -= 0.5 * cot;
      k(j, i) -= 0.5 * cot;
      k(i, i) += 0.5 * cot;
      k(j, j) += 0.5 * cot;
    }
  }
  return k;
}

// First `count` Neumann eigenvalues of the unit square: pi^2 (m^2 + k^2).
inline std::vector<double> square_spectrum(int count) {
  const double pi = 3.14159265358979323846;
  std::vector<double> all;
  for (int m = 0; m <= 40; ++m)
    for (int k = 0; k <= 40; ++k) all.push_back(pi * pi * (m * m + k * k));
  std::sort(all.begin(), all.end());
  all.resize(count);
  return all;
}

// First positive root of J1'(x) = J0(x) - J1(x)/x, by bisection.  Its square
// is the first nonzero Neumann eigenvalue of the unit disk.
inline double bessel_j1_prime_root() {
  auto f = [](double x) { return std::cyl_bessel_j(0, x) - std::cyl_bessel_j(1, x) / x; };
  double lo = 1.0, hi = 3.0;
  if (f(lo) <= 0 || f(hi) >= 0) throw std::logic_error("bessel bracket lost");
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Central difference of a scalar callable.
template <class F>
double central_diff(F&& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

}  // namespace oracles
