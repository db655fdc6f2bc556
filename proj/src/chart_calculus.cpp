#include "specdeform/chart_calculus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "specdeform/common.hpp"

namespace specdeform {

namespace {

double comp(const Sym2& s, int i, int j) {
  if (i == 0) return j == 0 ? s.xx : s.xy;
  return j == 0 ? s.xy : s.yy;
}

std::string point_str(const Eigen::Vector2d& p) {
  return "(" + format_double(p.x()) + ", " + format_double(p.y()) + ")";
}

void check_step(double h, const char* what) {
  if (!(h > 0))
    throw ValidationError("chart_calculus: " + std::string(what) +
                          " step must be positive, got " + format_double(h));
}

// Pointwise ops need room for two central-difference levels inside the chart.
void check_interior(const Eigen::Vector2d& p, double h) {
  const double m = 2 * h;
  if (!(p.x() >= m && p.x() <= 1 - m && p.y() >= m && p.y() <= 1 - m))
    throw ValidationError("chart_calculus: point " + point_str(p) +
                          " is not interior to the chart [0,1]^2 by two FD steps (" +
                          format_double(m) + ")");
}

Sym2 sample(const AnalyticMetric& g, double x, double y) {
  const Sym2 s = g(x, y);
  if (!s.positive_definite())
    throw ValidationError("chart_calculus: metric not positive definite at (" +
                          format_double(x) + ", " + format_double(y) + ")");
  return s;
}

Eigen::Vector2d grad_fd(const AnalyticScalar& f, const Eigen::Vector2d& p, double h) {
  return {(f(p.x() + h, p.y()) - f(p.x() - h, p.y())) / (2 * h),
          (f(p.x(), p.y() + h) - f(p.x(), p.y() - h)) / (2 * h)};
}

Eigen::Vector2d step_vec(int i, double h) {
  return i == 0 ? Eigen::Vector2d(h, 0) : Eigen::Vector2d(0, h);
}

// d/d x_i of a Sym2-valued field, componentwise central difference.
Sym2 tensor_partial(const AnalyticTensor& T, const Eigen::Vector2d& p, int i, double h) {
  const Eigen::Vector2d e = step_vec(i, h);
  return (T(p.x() + e.x(), p.y() + e.y()) - T(p.x() - e.x(), p.y() - e.y())) *
         (0.5 / h);
}

Eigen::Vector2d vector_partial(const AnalyticVector& v, const Eigen::Vector2d& p, int i,
                               double h) {
  const Eigen::Vector2d e = step_vec(i, h);
  return (v(p.x() + e.x(), p.y() + e.y()) - v(p.x() - e.x(), p.y() - e.y())) / (2 * h);
}

// Unit normal (as a vector) from a level-function gradient: grad f/|grad f|_g.
Eigen::Vector2d unit_normal(const Eigen::Vector2d& df, const Sym2& g,
                            const Eigen::Vector2d& p) {
  const Eigen::Vector2d up = g.solve(df);
  const double norm = std::sqrt(df.dot(up));
  if (!(norm > 1e-10))
    throw ValidationError("chart_calculus: degenerate normal, gradient of the level "
                          "function vanishes at " +
                          point_str(p));
  return up / norm;
}

// Divergence of a covector field: g^{ij} (d_i w_j - Gamma^k_ij w_k).
double div_covector(const AnalyticVector& w, const Christoffel& gam, const Sym2& gi,
                    const Eigen::Vector2d& p, double h) {
  const Eigen::Vector2d w0 = w(p.x(), p.y());
  const Eigen::Vector2d dw[2] = {vector_partial(w, p, 0, h), vector_partial(w, p, 1, h)};
  double acc = 0;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      double covariant = dw[i][j];
      for (int k = 0; k < 2; ++k) covariant -= gam.at(k, i, j) * w0[k];
      acc += comp(gi, i, j) * covariant;
    }
  return acc;
}

// Unchecked kernels.  The public wrappers below add the step/interiority
// validation; the chart-integral in check_prop3 reuses these directly because
// its quadrature nodes sit closer to the boundary than the 2h margin (the
// suite's evaluators are defined past the chart edge).
Christoffel christoffel_at(const AnalyticMetric& g, const Eigen::Vector2d& p, double h_x) {
  const Sym2 gi = sample(g, p.x(), p.y()).inverse();
  const Sym2 dg[2] = {tensor_partial(g, p, 0, h_x), tensor_partial(g, p, 1, h_x)};

  Christoffel out;
  for (int k = 0; k < 2; ++k) {
    double row[2][2];
    for (int i = 0; i < 2; ++i)
      for (int j = i; j < 2; ++j) {
        double acc = 0;
        for (int l = 0; l < 2; ++l)
          acc += comp(gi, k, l) *
                 (comp(dg[i], j, l) + comp(dg[j], i, l) - comp(dg[l], i, j));
        row[i][j] = 0.5 * acc;
      }
    out.gamma[k] = {row[0][0], row[0][1], row[1][1]};
  }
  return out;
}

Sym2 hessian_at(const AnalyticScalar& f, const AnalyticMetric& g, const Eigen::Vector2d& p,
                double h_x) {
  const Christoffel gam = christoffel_at(g, p, h_x);
  const double x = p.x(), y = p.y(), h = h_x;
  const double f0 = f(x, y);
  const double fxx = (f(x + h, y) - 2 * f0 + f(x - h, y)) / (h * h);
  const double fyy = (f(x, y + h) - 2 * f0 + f(x, y - h)) / (h * h);
  const double fxy =
      (f(x + h, y + h) - f(x + h, y - h) - f(x - h, y + h) + f(x - h, y - h)) /
      (4 * h * h);
  const Eigen::Vector2d df = grad_fd(f, p, h);

  auto entry = [&](int i, int j, double fij) {
    return fij - gam.at(0, i, j) * df.x() - gam.at(1, i, j) * df.y();
  };
  return {entry(0, 0, fxx), entry(0, 1, fxy), entry(1, 1, fyy)};
}

double laplacian_at(const AnalyticScalar& f, const AnalyticMetric& g,
                    const Eigen::Vector2d& p, double h_x) {
  return trace_h(hessian_at(f, g, p, h_x), sample(g, p.x(), p.y()));
}

Eigen::Vector2d div_tensor_at(const AnalyticTensor& T, const AnalyticMetric& g,
                              const Eigen::Vector2d& p, double h_x) {
  const Christoffel gam = christoffel_at(g, p, h_x);
  const Sym2 gi = sample(g, p.x(), p.y()).inverse();
  const Sym2 t0 = T(p.x(), p.y());
  const Sym2 dT[2] = {tensor_partial(T, p, 0, h_x), tensor_partial(T, p, 1, h_x)};

  Eigen::Vector2d out;
  for (int j = 0; j < 2; ++j) {
    double acc = 0;
    for (int i = 0; i < 2; ++i)
      for (int k = 0; k < 2; ++k) {
        double covariant = comp(dT[i], k, j);
        for (int l = 0; l < 2; ++l)
          covariant -=
              gam.at(l, i, k) * comp(t0, l, j) + gam.at(l, i, j) * comp(t0, k, l);
        acc += comp(gi, i, k) * covariant;
      }
    out[j] = acc;
  }
  return out;
}

}  // namespace

Sym2 AnalyticMetricFamily::at(double t, double x, double y) const {
  const Sym2 s = eval(t, x, y);
  if (!s.positive_definite())
    throw ValidationError("chart_calculus: family metric not positive definite at (t=" +
                          format_double(t) + ", x=" + format_double(x) +
                          ", y=" + format_double(y) + ")");
  return s;
}

AnalyticMetric AnalyticMetricFamily::slice(double t) const {
  const auto evaluator = eval;
  return [evaluator, t](double x, double y) { return evaluator(t, x, y); };
}

double Christoffel::at(int k, int i, int j) const { return comp(gamma[k], i, j); }

Christoffel christoffel(const AnalyticMetric& g, const Eigen::Vector2d& p, double h_x) {
  check_step(h_x, "spatial");
  check_interior(p, h_x);
  return christoffel_at(g, p, h_x);
}

Sym2 hessian(const AnalyticScalar& f, const AnalyticMetric& g, const Eigen::Vector2d& p,
             double h_x) {
  check_step(h_x, "spatial");
  check_interior(p, h_x);
  return hessian_at(f, g, p, h_x);
}

double laplacian(const AnalyticScalar& f, const AnalyticMetric& g, const Eigen::Vector2d& p,
                 double h_x) {
  check_step(h_x, "spatial");
  check_interior(p, h_x);
  return laplacian_at(f, g, p, h_x);
}

double laplacian_divergence_form(const AnalyticScalar& f, const AnalyticMetric& g,
                                 const Eigen::Vector2d& p, double h_x) {
  check_step(h_x, "spatial");
  check_interior(p, h_x);
  auto flux = [&](double x, double y) -> Eigen::Vector2d {
    const Sym2 gq = sample(g, x, y);
    return std::sqrt(gq.det()) * gq.solve(grad_fd(f, {x, y}, h_x));
  };
  const double h = h_x;
  const double div = (flux(p.x() + h, p.y()).x() - flux(p.x() - h, p.y()).x() +
                      flux(p.x(), p.y() + h).y() - flux(p.x(), p.y() - h).y()) /
                     (2 * h);
  return div / std::sqrt(sample(g, p.x(), p.y()).det());
}

Eigen::Vector2d div_tensor(const AnalyticTensor& T, const AnalyticMetric& g,
                           const Eigen::Vector2d& p, double h_x) {
  check_step(h_x, "spatial");
  check_interior(p, h_x);
  return div_tensor_at(T, g, p, h_x);
}

double check_lemma1(const AnalyticTensor& T, const AnalyticScalar& phi,
                    const AnalyticVector& Z, const AnalyticMetric& g,
                    const Eigen::Vector2d& p, double h_x) {
  const Christoffel gam = christoffel(g, p, h_x);
  const Sym2 g0 = sample(g, p.x(), p.y());
  const Sym2 gi = g0.inverse();
  const Sym2 t0 = T(p.x(), p.y());
  const Eigen::Vector2d z0 = Z(p.x(), p.y());
  const double phi0 = phi(p.x(), p.y());

  // Left side: divergence of the covector omega_j = phi T_ij Z^i.
  const AnalyticVector omega = [&T, &phi, &Z](double x, double y) -> Eigen::Vector2d {
    return phi(x, y) * (T(x, y).matrix() * Z(x, y));
  };
  const double lhs = div_covector(omega, gam, gi, p, h_x);

  const double term_div = phi0 * div_tensor_at(T, g, p, h_x).dot(z0);

  // <grad Z, T> = g^{ai} T_ij (d_a Z^j + Gamma^j_ab Z^b).
  const Eigen::Vector2d dz[2] = {vector_partial(Z, p, 0, h_x),
                                 vector_partial(Z, p, 1, h_x)};
  double term_gradz = 0;
  for (int a = 0; a < 2; ++a)
    for (int j = 0; j < 2; ++j) {
      double nabla = dz[a][j];
      for (int b = 0; b < 2; ++b) nabla += gam.at(j, a, b) * z0[b];
      double raised = 0;
      for (int i = 0; i < 2; ++i) raised += comp(gi, a, i) * comp(t0, i, j);
      term_gradz += raised * nabla;
    }
  term_gradz *= phi0;

  const double term_grad_phi = g0.solve(grad_fd(phi, p, h_x)).dot(t0.matrix() * z0);

  return std::abs(lhs - term_div - term_gradz - term_grad_phi);
}

PResiduals check_P1_P2_P3(const AnalyticMetricFamily& family, const TimeCovector& X,
                          const TimeCovector& Y, const AnalyticScalar& f,
                          const TimeScalar& l, const Eigen::Vector2d& p) {
  check_step(family.h_x, "spatial");
  check_step(family.h_t, "time");
  check_interior(p, family.h_x);
  const double hx = family.h_x, ht = family.h_t;
  const double px = p.x(), py = p.y();

  const Sym2 g0 = family.at(0, px, py);
  const Sym2 H = (family.at(ht, px, py) - family.at(-ht, px, py)) * (0.5 / ht);

  PResiduals out;

  // (P1): <X,Y>_t = x(t)^T g(t)^{-1} y(t).
  {
    auto s = [&](double t) {
      return X(t, px, py).dot(family.at(t, px, py).solve(Y(t, px, py)));
    };
    const double lhs = (s(ht) - s(-ht)) / (2 * ht);
    const Eigen::Vector2d x0 = X(0, px, py), y0 = Y(0, px, py);
    const Eigen::Vector2d xdot = (X(ht, px, py) - X(-ht, px, py)) / (2 * ht);
    const Eigen::Vector2d ydot = (Y(ht, px, py) - Y(-ht, px, py)) / (2 * ht);
    const Eigen::Vector2d xup = g0.solve(x0), yup = g0.solve(y0);
    const double rhs = -xup.dot(H.matrix() * yup) + xdot.dot(yup) + xup.dot(ydot);
    out.p1 = std::abs(lhs - rhs);
  }

  // (P2): f and l frozen at t=0; only g moves.
  const Eigen::Vector2d df = grad_fd(f, p, hx);
  const AnalyticScalar l0 = [&l](double x, double y) { return l(0, x, y); };
  const Eigen::Vector2d dl0 = grad_fd(l0, p, hx);
  {
    auto s = [&](double t) { return df.dot(family.at(t, px, py).solve(dl0)); };
    const double lhs = (s(ht) - s(-ht)) / (2 * ht);
    const double rhs = -g0.solve(df).dot(H.matrix() * g0.solve(dl0));
    out.p2 = std::abs(lhs - rhs);
  }

  // (P3): nu_t = grad_t f/|grad_t f|, l depends on t.
  {
    const Eigen::Vector2d nu = unit_normal(df, g0, p);  // throws if |grad f| = 0
    auto s = [&](double t) {
      const Sym2 gt = family.at(t, px, py);
      const AnalyticScalar lt = [&l, t](double x, double y) { return l(t, x, y); };
      const Eigen::Vector2d dlt = grad_fd(lt, p, hx);
      return df.dot(gt.solve(dlt)) / std::sqrt(df.dot(gt.solve(df)));
    };
    const double lhs = (s(ht) - s(-ht)) / (2 * ht);

    const AnalyticScalar lprime = [&l, ht](double x, double y) {
      return (l(ht, x, y) - l(-ht, x, y)) / (2 * ht);
    };
    const Eigen::Vector2d dlp = grad_fd(lprime, p, hx);
    const double h_nu_dl = nu.dot(H.matrix() * g0.solve(dl0));
    const double h_nu_nu = nu.dot(H.matrix() * nu);
    const double nu_dl = nu.dot(dl0);
    const double rhs = -h_nu_dl + 0.5 * h_nu_nu * nu_dl + nu.dot(dlp);
    out.p3 = std::abs(lhs - rhs);
  }
  return out;
}

double check_lemma2(const AnalyticMetricFamily& family, const AnalyticScalar& f,
                    const Eigen::Vector2d& p) {
  check_step(family.h_x, "spatial");
  check_step(family.h_t, "time");
  check_interior(p, family.h_x);
  const double hx = family.h_x, ht = family.h_t;
  const Eigen::Vector2d df = grad_fd(f, p, hx);
  const Sym2 g0 = family.at(0, p.x(), p.y());
  const Eigen::Vector2d nu = unit_normal(df, g0, p);

  auto nu_at = [&](double t) -> Eigen::Vector2d {
    const Sym2 gt = family.at(t, p.x(), p.y());
    const Eigen::Vector2d up = gt.solve(df);
    return up / std::sqrt(df.dot(up));
  };
  const Eigen::Vector2d lhs = (nu_at(ht) - nu_at(-ht)) / (2 * ht);

  const Sym2 H = (family.at(ht, p.x(), p.y()) - family.at(-ht, p.x(), p.y())) * (0.5 / ht);
  // H(nu) as a vector: raise the second slot.
  const Eigen::Vector2d h_nu = g0.solve(H.matrix() * nu);
  const double h_nu_nu = nu.dot(H.matrix() * nu);
  const Eigen::Vector2d rhs = -h_nu + 0.5 * h_nu_nu * nu;

  const Eigen::Vector2d d = lhs - rhs;
  return std::sqrt(g0.quad(d, d));
}

namespace {

// 4-point Gauss-Legendre on [0,1].
constexpr double kGlNode[4] = {0.5 - 0.5 * 0.8611363115940526, 0.5 - 0.5 * 0.3399810435848563,
                               0.5 + 0.5 * 0.3399810435848563, 0.5 + 0.5 * 0.8611363115940526};
constexpr double kGlWeight[4] = {0.5 * 0.3478548451374538, 0.5 * 0.6521451548625461,
                                 0.5 * 0.6521451548625461, 0.5 * 0.3478548451374538};

}  // namespace

double check_prop3(const AnalyticMetricFamily& family, const AnalyticScalar& f,
                   const AnalyticScalar& l, int panels) {
  check_step(family.h_x, "spatial");
  check_step(family.h_t, "time");
  if (panels < 1)
    throw ValidationError("chart_calculus: quadrature needs at least one panel, got " +
                          std::to_string(panels));
  const double hx = family.h_x, ht = family.h_t;
  const AnalyticMetric g0field = family.slice(0.0);

  // H as an analytic field (t-derivative pointwise).
  const AnalyticTensor Hfield = [&family, ht](double x, double y) {
    return (family.at(ht, x, y) - family.at(-ht, x, y)) * (0.5 / ht);
  };
  const AnalyticScalar hfield = [&Hfield, &g0field](double x, double y) {
    return trace_h(Hfield(x, y), g0field(x, y));
  };

  double lhs = 0, rhs = 0;
  const double w = 1.0 / panels;
  for (int cx = 0; cx < panels; ++cx)
    for (int cy = 0; cy < panels; ++cy)
      for (int qx = 0; qx < 4; ++qx)
        for (int qy = 0; qy < 4; ++qy) {
          const Eigen::Vector2d q(w * (cx + kGlNode[qx]), w * (cy + kGlNode[qy]));
          const double weight = w * w * kGlWeight[qx] * kGlWeight[qy];

          const Sym2 gq = family.at(0, q.x(), q.y());
          const double dens = std::sqrt(gq.det());
          const double lq = l(q.x(), q.y());

          // d/dt of the Laplacian, by central difference of the trace form.
          const double lap_plus = laplacian_at(f, family.slice(ht), q, hx);
          const double lap_minus = laplacian_at(f, family.slice(-ht), q, hx);
          const double lap_prime = (lap_plus - lap_minus) / (2 * ht);
          lhs += weight * lq * lap_prime * dens;

          const Eigen::Vector2d df = grad_fd(f, q, hx);
          const Eigen::Vector2d dh = grad_fd(hfield, q, hx);
          const Eigen::Vector2d divH = div_tensor_at(Hfield, g0field, q, hx);
          const Sym2 hess = hessian_at(f, g0field, q, hx);
          const double integrand = 0.5 * dh.dot(gq.solve(df)) - divH.dot(gq.solve(df)) -
                                   inner02(Hfield(q.x(), q.y()), hess, gq);
          rhs += weight * lq * integrand * dens;
        }
  return std::abs(lhs - rhs);
}

double check_htilde(const AnalyticMetricFamily& family, const Eigen::Vector2d& boundary_point,
                    const AnalyticScalar& f) {
  check_step(family.h_x, "spatial");
  check_step(family.h_t, "time");
  const double hx = family.h_x, ht = family.h_t;
  const Eigen::Vector2d& p = boundary_point;
  const Sym2 g0 = family.at(0, p.x(), p.y());
  const Sym2 H = (family.at(ht, p.x(), p.y()) - family.at(-ht, p.x(), p.y())) * (0.5 / ht);

  const Eigen::Vector2d df = grad_fd(f, p, hx);
  const Eigen::Vector2d nu = unit_normal(df, g0, p);

  // g-unit tangent of the level line: Gram-Schmidt against nu, seeded with the
  // coordinate direction least aligned with it.
  const Eigen::Vector2d lowered = g0.matrix() * nu;
  const int seed = std::abs(lowered.x()) <= std::abs(lowered.y()) ? 0 : 1;
  Eigen::Vector2d tau = Eigen::Vector2d::Unit(seed);
  tau -= g0.quad(tau, nu) * nu;
  tau /= std::sqrt(g0.quad(tau, tau));

  const double h = trace_h(H, g0);
  const double h_nu_nu = nu.dot(H.matrix() * nu);
  const double htilde = tau.dot(H.matrix() * tau);
  return std::abs(htilde - h + h_nu_nu);
}

// ---- canned suite ---------------------------------------------------------

namespace {

// Generic curved family used by every suite: SPD for |t| <= 0.05 on the chart
// neighborhood, genuinely nonlinear in t and curved in x, y.
AnalyticMetricFamily suite_family(double step) {
  AnalyticMetricFamily family;
  family.h_x = step;
  family.h_t = step;
  family.eval = [](double t, double x, double y) -> Sym2 {
    const Sym2 base{1.0 + 0.25 * std::sin(x) * std::cos(y), 0.12 * std::sin(x + y),
                    1.1 + 0.2 * std::cos(2 * x - y)};
    const Sym2 drift{0.3 * std::cos(x + y), 0.1 + 0.05 * std::sin(3 * x),
                     -0.2 + 0.1 * std::sin(y)};
    const Sym2 bend{0.05 * std::sin(2 * x), 0.0, 0.05 * std::cos(2 * y)};
    return base + t * drift + (t * t) * bend;
  };
  return family;
}

const AnalyticScalar kF = [](double x, double y) {
  return std::sin(1.3 * x + 0.4) * std::cos(0.8 * y - 0.2) + 0.2 * x * y * y;
};
const AnalyticScalar kL = [](double x, double y) {
  return std::cos(0.9 * x - 0.3) * (1.0 + 0.5 * y) + 0.1 * x * x;
};
const TimeScalar kLt = [](double t, double x, double y) {
  return kL(x, y) * (1.0 + 0.7 * t) + t * std::sin(x + 2 * y) + 0.3 * t * t * x;
};
const TimeCovector kX = [](double t, double x, double y) -> Eigen::Vector2d {
  return {std::sin(x + 2 * y) + 0.5 * t * x, std::cos(x - y) - t * (1 + y)};
};
const TimeCovector kY = [](double t, double x, double y) -> Eigen::Vector2d {
  return {0.7 + 0.3 * std::cos(2 * x) * t, std::sin(x * y + 0.5) + t * t};
};
const AnalyticScalar kPhi = [](double x, double y) {
  return 1.0 + 0.4 * std::sin(2 * x - y);
};
const AnalyticVector kZ = [](double x, double y) -> Eigen::Vector2d {
  return {std::cos(y) + 0.2 * x, std::sin(1.5 * x) - 0.3 * y * y};
};
const AnalyticTensor kT = [](double x, double y) -> Sym2 {
  return {std::sin(x) + 1.2, 0.3 * std::cos(x + 2 * y), std::cos(y) + 1.5};
};

const Eigen::Vector2d kPoints[3] = {{0.3, 0.4}, {0.55, 0.25}, {0.7, 0.6}};
// Boundary points paired with outward level functions for the htilde check.
struct BoundarySample {
  Eigen::Vector2d p;
  AnalyticScalar f;
};
const BoundarySample kBoundary[2] = {
    {{1.0, 0.5}, [](double x, double y) { return x + 0.05 * std::sin(y); }},
    {{0.5, 0.0}, [](double x, double y) { return -y + 0.03 * x * x; }},
};

std::string fmt_point(const Eigen::Vector2d& p) {
  return format_double(p.x()) + ";" + format_double(p.y());
}

}  // namespace

CalculusReport run_calculus_suite(const std::string& suite, std::vector<double> steps) {
  const bool all = suite == "all";
  if (!all && suite != "lemma1" && suite != "lemma2" && suite != "props" &&
      suite != "prop3" && suite != "htilde")
    throw ValidationError(
        "chart_calculus: unknown suite '" + suite +
        "' (expected lemma1, lemma2, props, prop3, htilde, or all)");
  for (double s : steps) check_step(s, "suite");

  CalculusReport report;
  auto add = [&report](const std::string& identity, const std::string& point, double step,
                       double residual) {
    report.records.push_back({identity, point, step, residual});
  };

  auto run_part = [&](const std::string& name, const std::vector<double>& defaults) {
    const std::vector<double>& use = steps.empty() ? defaults : steps;
    for (double s : use) {
      const AnalyticMetricFamily family = suite_family(s);
      if (name == "lemma1") {
        for (const auto& p : kPoints)
          add("lemma1", fmt_point(p), s, check_lemma1(kT, kPhi, kZ, family.slice(0), p, s));
      } else if (name == "props") {
        for (const auto& p : kPoints) {
          const PResiduals r = check_P1_P2_P3(family, kX, kY, kF, kLt, p);
          add("P1", fmt_point(p), s, r.p1);
          add("P2", fmt_point(p), s, r.p2);
          add("P3", fmt_point(p), s, r.p3);
        }
      } else if (name == "lemma2") {
        for (const auto& p : kPoints) add("lemma2", fmt_point(p), s, check_lemma2(family, kF, p));
      } else if (name == "prop3") {
        add("prop3", "chart", s, check_prop3(family, kF, kL));
      } else if (name == "htilde") {
        for (const auto& b : kBoundary)
          add("htilde", fmt_point(b.p), s, check_htilde(family, b.p, b.f));
      }
    }
  };

  const std::vector<double> fine = {4e-3, 2e-3, 1e-3};
  const std::vector<double> coarse = {8e-3, 4e-3, 2e-3};  // second FD level: keeps
                                                          // round-off out of the fit
  if (all || suite == "lemma1") run_part("lemma1", fine);
  if (all || suite == "props") run_part("props", fine);
  if (all || suite == "lemma2") run_part("lemma2", fine);
  if (all || suite == "prop3") run_part("prop3", coarse);
  if (all || suite == "htilde") run_part("htilde", fine);

  // Group rows by (identity, point) and fit the convergence order.
  report.all_pass = true;
  for (size_t i = 0; i < report.records.size(); ++i) {
    const auto& r = report.records[i];
    bool seen = false;
    for (const auto& g : report.groups)
      if (g.identity == r.identity && g.point == r.point) {
        seen = true;
        break;
      }
    if (seen) continue;
    std::vector<double> ss, rr;
    double worst = 0;
    for (const auto& o : report.records)
      if (o.identity == r.identity && o.point == r.point) {
        ss.push_back(o.step);
        rr.push_back(std::max(o.residual, 1e-300));
        worst = std::max(worst, o.residual);
      }
    CalculusGroup g;
    g.identity = r.identity;
    g.point = r.point;
    g.max_residual = worst;
    g.fitted_order = ss.size() >= 2 ? fitted_order(ss, rr) : 0.0;
    // Algebraic identities sit at round-off for every step; order fits on
    // noise are meaningless there, so tiny residuals pass outright.
    g.pass = worst <= 1e-10 || g.fitted_order >= 1.9;
    report.all_pass = report.all_pass && g.pass;
    report.groups.push_back(std::move(g));
  }
  return report;
}

void write_calculus_csv(const std::string& path, const CalculusReport& report) {
  std::ofstream out(path);
  if (!out)
    throw ValidationError("chart_calculus: cannot open '" + path + "' for writing");
  out << "identity,point,step,residual,fitted_order\n";
  for (const auto& r : report.records) {
    double order = 0;
    for (const auto& g : report.groups)
      if (g.identity == r.identity && g.point == r.point) order = g.fitted_order;
    out << r.identity << "," << r.point << "," << format_double(r.step) << ","
        << format_double(r.residual) << "," << format_double(order) << "\n";
  }
  if (!out) throw ValidationError("chart_calculus: failed writing '" + path + "'");
}

}  // namespace specdeform
