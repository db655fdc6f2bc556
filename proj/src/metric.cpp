#include "specdeform/metric.hpp"

#include <cmath>
#include <fstream>
#include <random>

namespace specdeform {

double inner02(const Sym2& T, const Sym2& S, const Sym2& g) {
  const Sym2 gi = g.inverse();
  const Eigen::Matrix2d a = gi.matrix() * T.matrix();
  const Eigen::Matrix2d b = gi.matrix() * S.matrix();
  return (a * b).trace();
}

double trace_h(const Sym2& H, const Sym2& g) {
  return (g.inverse().matrix() * H.matrix()).trace();
}

Eigen::Vector2d sharp(const Eigen::Vector2d& df, const Sym2& g) {
  return g.solve(df);
}

double volume_density(const Sym2& g) {
  const double d = g.det();
  if (d <= 0)
    throw ValidationError("metric: volume density of a tensor with det " +
                          format_double(d) + " <= 0");
  return std::sqrt(d);
}

Sym2 bary_interp(const Sym2& a, const Sym2& b, const Sym2& c,
                 double wa, double wb, double wc) {
  return {wa * a.xx + wb * b.xx + wc * c.xx,
          wa * a.xy + wb * b.xy + wc * c.xy,
          wa * a.yy + wb * b.yy + wc * c.yy};
}

MetricField::MetricField(std::vector<Sym2> values) : values_(std::move(values)) {
  for (size_t v = 0; v < values_.size(); ++v)
    if (!values_[v].positive_definite())
      throw ValidationError("metric: tensor at vertex " + std::to_string(v) +
                            " is not positive definite (xx=" +
                            format_double(values_[v].xx) +
                            ", det=" + format_double(values_[v].det()) + ")");
}

MetricField MetricField::constant(int n, const Sym2& g) {
  return MetricField(std::vector<Sym2>(n, g));
}

MetricField MetricField::unchecked(std::vector<Sym2> values) {
  MetricField field;
  field.values_ = std::move(values);
  return field;
}

SymTensorField MetricField::as_tensor() const {
  SymTensorField t;
  t.values = values_;
  return t;
}

MetricField metric_at_t(const MetricField& g0, const SymTensorField& T, double t) {
  if (T.size() != g0.size())
    throw ValidationError("metric: field size mismatch (metric " +
                          std::to_string(g0.size()) + ", perturbation " +
                          std::to_string(T.size()) + ")");
  std::vector<Sym2> values(g0.size());
  for (int v = 0; v < g0.size(); ++v) {
    values[v] = g0.at(v) + t * T.at(v);
    if (!values[v].positive_definite())
      throw ValidationError("metric: g0 + t*T is not positive definite at vertex " +
                            std::to_string(v) + " for t=" + format_double(t));
  }
  return MetricField::unchecked(std::move(values));
}

ScalarField trace_h(const SymTensorField& H, const MetricField& g) {
  if (H.size() != g.size())
    throw ValidationError("metric: field size mismatch (metric " +
                          std::to_string(g.size()) + ", perturbation " +
                          std::to_string(H.size()) + ")");
  ScalarField out(H.size());
  for (int v = 0; v < H.size(); ++v) out[v] = trace_h(H.at(v), g.at(v));
  return out;
}

SymTensorField random_perturbation(const Mesh& mesh, std::uint64_t seed,
                                   double amplitude, int frequency_cap) {
  if (amplitude < 0)
    throw ValidationError("metric: random perturbation amplitude must be >= 0");
  if (frequency_cap < 0)
    throw ValidationError("metric: random perturbation frequency cap must be >= 0");
  const int F = frequency_cap + 1;
  const int terms = F * F;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unif(-amplitude, amplitude);
  // Coefficients are drawn in a fixed order so the field is a pure function
  // of the seed.
  std::array<std::vector<double>, 3> coef;
  for (auto& c : coef) {
    c.resize(terms);
    for (auto& v : c) v = unif(rng);
  }
  SymTensorField out(mesh.num_vertices());
  for (int v = 0; v < mesh.num_vertices(); ++v) {
    const double x = mesh.vertices[v].x(), y = mesh.vertices[v].y();
    double comp[3] = {0, 0, 0};
    for (int kx = 0; kx < F; ++kx)
      for (int ky = 0; ky < F; ++ky) {
        const double basis = std::cos(kx * M_PI * x) * std::cos(ky * M_PI * y);
        const int idx = kx * F + ky;
        for (int c = 0; c < 3; ++c) comp[c] += coef[c][idx] * basis;
      }
    out.at(v) = {comp[0] / terms, comp[1] / terms, comp[2] / terms};
  }
  return out;
}

void write_scalar_csv(const std::string& path, const ScalarField& field) {
  std::ofstream out(path);
  if (!out) throw ValidationError("metric: cannot open '" + path + "' for writing");
  out << "vertex,value\n";
  for (int v = 0; v < field.size(); ++v)
    out << v << "," << format_double(field[v]) << "\n";
}

void write_sym_tensor_csv(const std::string& path, const SymTensorField& field) {
  std::ofstream out(path);
  if (!out) throw ValidationError("metric: cannot open '" + path + "' for writing");
  out << "vertex,xx,xy,yy\n";
  for (int v = 0; v < field.size(); ++v)
    out << v << "," << format_double(field.at(v).xx) << ","
        << format_double(field.at(v).xy) << "," << format_double(field.at(v).yy)
        << "\n";
}

}  // namespace specdeform
