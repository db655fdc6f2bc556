#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "specdeform/metric.hpp"

namespace specdeform {

// Analytic (closure-style) fields on the chart [0,1]^2.  Evaluators must be
// defined in a neighborhood of the closed chart: finite differences sample up
// to two steps outside at boundary points.
using AnalyticScalar = std::function<double(double x, double y)>;
using AnalyticVector = std::function<Eigen::Vector2d(double x, double y)>;
using AnalyticTensor = std::function<Sym2(double x, double y)>;
using AnalyticMetric = std::function<Sym2(double x, double y)>;

// t-dependent scalar / covector-component fields.
using TimeScalar = std::function<double(double t, double x, double y)>;
using TimeCovector = std::function<Eigen::Vector2d(double t, double x, double y)>;

// A smooth family t -> g(t) with the finite-difference steps used by every
// derivative taken from it.
struct AnalyticMetricFamily {
  std::function<Sym2(double t, double x, double y)> eval;
  double h_x = 1e-4;
  double h_t = 1e-4;

  // Evaluates and rejects non-SPD samples.
  Sym2 at(double t, double x, double y) const;
  AnalyticMetric slice(double t) const;
};

// Gamma^k_{ij}, symmetric in (i,j); gamma[k] holds row k.
struct Christoffel {
  std::array<Sym2, 2> gamma;
  double at(int k, int i, int j) const;
};

// All spatial derivatives are second-order central differences with step h_x;
// points must lie in [0,1]^2 with margin 2 h_x.
Christoffel christoffel(const AnalyticMetric& g, const Eigen::Vector2d& p, double h_x);

// (grad^2 f)_ij = d_i d_j f - Gamma^k_ij d_k f.
Sym2 hessian(const AnalyticScalar& f, const AnalyticMetric& g, const Eigen::Vector2d& p,
             double h_x);

// Laplacian as the metric trace of the Hessian.
double laplacian(const AnalyticScalar& f, const AnalyticMetric& g, const Eigen::Vector2d& p,
                 double h_x);
// Oracle form: (1/sqrt(det g)) d_i (sqrt(det g) g^{ij} d_j f); independent
// discretization used to cross-check `laplacian`.
double laplacian_divergence_form(const AnalyticScalar& f, const AnalyticMetric& g,
                                 const Eigen::Vector2d& p, double h_x);

// Covector components of div T: (div T)_j = g^{ik}(d_i T_kj - Gamma^l_ik T_lj
// - Gamma^l_ij T_kl).
Eigen::Vector2d div_tensor(const AnalyticTensor& T, const AnalyticMetric& g,
                           const Eigen::Vector2d& p, double h_x);

// | div(T(phi Z)) - phi<div T, Z> - phi<grad Z, T> - T(grad phi, Z) |.
double check_lemma1(const AnalyticTensor& T, const AnalyticScalar& phi,
                    const AnalyticVector& Z, const AnalyticMetric& g,
                    const Eigen::Vector2d& p, double h_x);

struct PResiduals {
  double p1, p2, p3;
};

// Pointwise residuals of the three derivative rules for t-dependent inner
// products:
//   (P1) d/dt <X,Y>           = -H(X,Y) + <Xdot,Y> + <X,Ydot>
//   (P2) d/dt <grad f, grad l> = -H(grad f, grad l)          (f, l frozen)
//   (P3) d/dt <nu_t, grad l(t)> = -H(nu,grad l) + (1/2)H(nu,nu)<nu,grad l>
//                                 + <nu, grad l'>,   nu_t = grad_t f/|grad_t f|.
// X, Y enter through their covector components x_i(t), y_i(t).
PResiduals check_P1_P2_P3(const AnalyticMetricFamily& family, const TimeCovector& X,
                          const TimeCovector& Y, const AnalyticScalar& f,
                          const TimeScalar& l, const Eigen::Vector2d& p);

// | d/dt nu(t) - (-H(nu) + (1/2) H(nu,nu) nu) | in the g(0)-norm, with
// nu(t) = grad_t f / |grad_t f|_t.
double check_lemma2(const AnalyticMetricFamily& family, const AnalyticScalar& f,
                    const Eigen::Vector2d& p);

// Residual of the integral identity
//   int l (d/dt Laplacian_{g(t)} f) dM
//     = int l ( (1/2)<dh,df> - <div H, df> - <H, grad^2 f> ) dM
// over the chart, h = tr_g H.  On a rectangle the boundary term of the
// underlying Stokes argument cancels identically (see check_htilde), so the
// residual is pure finite-difference error.  Integration: tensor-product
// Gauss-Legendre, `panels` x `panels` cells, 4 nodes per axis.
double check_prop3(const AnalyticMetricFamily& family, const AnalyticScalar& f,
                   const AnalyticScalar& l, int panels = 8);

// | htilde - h + H(nu,nu) | at a boundary point, where htilde is the trace of
// H restricted to the tangent line of the level curve of f (the boundary) and
// nu its unit normal.  Algebraic identity: no t-derivative, residual at
// round-off.
double check_htilde(const AnalyticMetricFamily& family, const Eigen::Vector2d& boundary_point,
                    const AnalyticScalar& f);

// ---- canned verification suite (CLI `verify-calculus`) -------------------

struct CalculusRecord {
  std::string identity;  // "lemma1", "P1", "P2", "P3", "lemma2", "prop3", "htilde"
  std::string point;     // "x;y" or "chart" for integral identities
  double step;           // h_x = h_t used for the row
  double residual;
};

struct CalculusGroup {
  std::string identity;
  std::string point;
  double fitted_order;    // log-log slope of residual vs step
  double max_residual;
  bool pass;              // order >= 1.9, or max residual <= 1e-10 (algebraic)
};

struct CalculusReport {
  std::vector<CalculusRecord> records;
  std::vector<CalculusGroup> groups;
  bool all_pass = false;
};

// suite: one of lemma1 | lemma2 | props | prop3 | htilde | all.  Empty
// `steps` picks per-suite defaults chosen so FD error dominates round-off.
CalculusReport run_calculus_suite(const std::string& suite, std::vector<double> steps = {});

// CSV: identity,point,step,residual,fitted_order.
void write_calculus_csv(const std::string& path, const CalculusReport& report);

}  // namespace specdeform
