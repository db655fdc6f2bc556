#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "specdeform/mesh.hpp"

namespace specdeform {

// Coefficients of a symmetric (0,2)-tensor in chart coordinates.
struct Sym2 {
  double xx = 0.0, xy = 0.0, yy = 0.0;

  double det() const { return xx * yy - xy * xy; }
  double trace() const { return xx + yy; }
  bool positive_definite() const { return xx > 0.0 && det() > 0.0; }

  Eigen::Matrix2d matrix() const {
    Eigen::Matrix2d m;
    m << xx, xy, xy, yy;
    return m;
  }
  // Symmetrizes; useful after products of exact symmetric factors.
  static Sym2 from_matrix(const Eigen::Matrix2d& m) {
    return {m(0, 0), 0.5 * (m(0, 1) + m(1, 0)), m(1, 1)};
  }

  Sym2 inverse() const {
    const double d = det();
    return {yy / d, -xy / d, xx / d};
  }
  // this^{-1} * rhs (raise an index against this metric).
  Eigen::Vector2d solve(const Eigen::Vector2d& rhs) const {
    const double d = det();
    return {(yy * rhs.x() - xy * rhs.y()) / d, (xx * rhs.y() - xy * rhs.x()) / d};
  }
  // a^T S b.
  double quad(const Eigen::Vector2d& a, const Eigen::Vector2d& b) const {
    return a.x() * (xx * b.x() + xy * b.y()) + a.y() * (xy * b.x() + yy * b.y());
  }

  Sym2 operator+(const Sym2& o) const { return {xx + o.xx, xy + o.xy, yy + o.yy}; }
  Sym2 operator-(const Sym2& o) const { return {xx - o.xx, xy - o.xy, yy - o.yy}; }
  Sym2 operator*(double s) const { return {s * xx, s * xy, s * yy}; }
};

inline Sym2 operator*(double s, const Sym2& t) { return t * s; }

// Full contraction of two symmetric (0,2)-tensors with both indices raised
// by g: g^{ik} g^{jl} T_ij S_kl = tr(g^{-1} T g^{-1} S).
double inner02(const Sym2& T, const Sym2& S, const Sym2& g);
// tr(g^{-1} H), the metric trace of a perturbation direction.
double trace_h(const Sym2& H, const Sym2& g);
// Raise a covector: g^{-1} df.
Eigen::Vector2d sharp(const Eigen::Vector2d& df, const Sym2& g);
// sqrt(det g), the area density of the chart volume form.
double volume_density(const Sym2& g);

// Convex (barycentric) combination; SPD inputs stay SPD.
Sym2 bary_interp(const Sym2& a, const Sym2& b, const Sym2& c,
                 double wa, double wb, double wc);

// One value per mesh vertex.
using ScalarField = Eigen::VectorXd;

// One symmetric coefficient triple per mesh vertex.
struct SymTensorField {
  std::vector<Sym2> values;

  SymTensorField() = default;
  explicit SymTensorField(int n) : values(n) {}
  int size() const { return static_cast<int>(values.size()); }
  Sym2& at(int v) { return values[v]; }
  const Sym2& at(int v) const { return values[v]; }
};

// Per-vertex Riemannian metric.  SPD is checked at the vertices only:
// barycentric interpolation keeps convex combinations of SPD tensors SPD,
// so element interiors are covered.
class MetricField {
 public:
  explicit MetricField(std::vector<Sym2> values);
  static MetricField constant(int n, const Sym2& g);
  static MetricField identity(int n) { return constant(n, {1.0, 0.0, 1.0}); }
  // Skips the SPD check; exists so downstream error paths stay testable.
  static MetricField unchecked(std::vector<Sym2> values);

  int size() const { return static_cast<int>(values_.size()); }
  const Sym2& at(int v) const { return values_[v]; }
  const std::vector<Sym2>& values() const { return values_; }
  SymTensorField as_tensor() const;

 private:
  MetricField() = default;
  std::vector<Sym2> values_;
};

// g0 + t*T, validated SPD at every vertex; the error names the first
// offending vertex and the parameter value.
MetricField metric_at_t(const MetricField& g0, const SymTensorField& T, double t);

// Pointwise tr(g^{-1} H) as a scalar field.
ScalarField trace_h(const SymTensorField& H, const MetricField& g);

// Truncated trigonometric series with one coefficient per frequency pair and
// component, drawn uniformly from [-amplitude, amplitude] and normalized by
// the number of terms, so |entries| <= amplitude pointwise.  Deterministic
// in the seed.
SymTensorField random_perturbation(const Mesh& mesh, std::uint64_t seed,
                                   double amplitude, int frequency_cap);

// CSV exports: one row per vertex.
void write_scalar_csv(const std::string& path, const ScalarField& field);
void write_sym_tensor_csv(const std::string& path, const SymTensorField& field);

}  // namespace specdeform
