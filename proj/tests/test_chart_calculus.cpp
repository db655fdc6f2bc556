#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "specdeform/chart_calculus.hpp"
#include "specdeform/common.hpp"
#include "oracles.hpp"

using namespace specdeform;
using doctest::Contains;

namespace {

const AnalyticMetric kFlat = [](double, double) -> Sym2 { return {1, 0, 1}; };

// Curved SPD metric used wherever a test needs a genuinely non-flat g.
const AnalyticMetric kCurved = [](double x, double y) -> Sym2 {
  return {1.0 + 0.5 * std::sin(x) * std::cos(y), 0.15 * std::sin(x + y),
          1.2 + 0.3 * std::cos(2 * x - y)};
};

const AnalyticScalar kWave = [](double x, double y) {
  return std::sin(1.3 * x + 0.4) * std::cos(0.8 * y - 0.2) + 0.2 * x * y * y;
};

AnalyticMetricFamily family_from(std::function<Sym2(double, double, double)> eval,
                                 double step) {
  AnalyticMetricFamily fam;
  fam.eval = std::move(eval);
  fam.h_x = step;
  fam.h_t = step;
  return fam;
}

}  // namespace

TEST_CASE("christoffel symbols vanish on the flat chart") {
  const Christoffel gam = christoffel(kFlat, {0.37, 0.62}, 1e-3);
  for (int k = 0; k < 2; ++k)
    for (int i = 0; i < 2; ++i)
      for (int j = 0; j < 2; ++j) CHECK(gam.at(k, i, j) == 0.0);
}

TEST_CASE("christoffel symbols of the conformal metric e^{2x} I") {
  // Closed forms: Gamma^1_11 = 1, Gamma^1_22 = -1, Gamma^2_12 = 1, rest 0.
  const AnalyticMetric g = [](double x, double) -> Sym2 {
    const double s = std::exp(2 * x);
    return {s, 0, s};
  };
  const Eigen::Vector2d p{0.3, 0.7};

  const Christoffel gam = christoffel(g, p, 1e-3);
  CHECK(gam.at(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(gam.at(0, 1, 1) == doctest::Approx(-1.0).epsilon(1e-5));
  CHECK(gam.at(1, 0, 1) == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(std::abs(gam.at(1, 0, 0)) < 1e-5);
  CHECK(std::abs(gam.at(0, 0, 1)) < 1e-5);
  CHECK(std::abs(gam.at(1, 1, 1)) < 1e-5);

  // Symmetry in the lower indices is structural.
  for (int k = 0; k < 2; ++k) CHECK(gam.at(k, 0, 1) == gam.at(k, 1, 0));

  // Error scales like h^2.
  const double coarse = std::abs(christoffel(g, p, 4e-3).at(0, 0, 0) - 1.0);
  const double fine = std::abs(christoffel(g, p, 1e-3).at(0, 0, 0) - 1.0);
  CHECK(coarse / fine == doctest::Approx(16.0).epsilon(0.3));
}

TEST_CASE("hessian on the flat chart reduces to second partials") {
  const Eigen::Vector2d p{0.45, 0.3};
  const AnalyticScalar linear = [](double x, double y) { return 0.7 + 2 * x - 3 * y; };
  const Sym2 hl = hessian(linear, kFlat, p, 1e-3);
  CHECK(std::abs(hl.xx) < 1e-8);
  CHECK(std::abs(hl.xy) < 1e-8);
  CHECK(std::abs(hl.yy) < 1e-8);

  const AnalyticScalar quad = [](double x, double y) { return x * x + y * y; };
  const Sym2 hq = hessian(quad, kFlat, p, 1e-3);
  CHECK(hq.xx == doctest::Approx(2.0).epsilon(1e-8));
  CHECK(std::abs(hq.xy) < 1e-8);
  CHECK(hq.yy == doctest::Approx(2.0).epsilon(1e-8));
}

TEST_CASE("trace-form laplacian matches the divergence-form oracle") {
  const Eigen::Vector2d p{0.4, 0.55};
  std::vector<double> steps{4e-3, 2e-3, 1e-3}, gaps;
  for (double h : steps)
    gaps.push_back(std::abs(laplacian(kWave, kCurved, p, h) -
                            laplacian_divergence_form(kWave, kCurved, p, h)));
  CHECK(gaps.back() < 1e-4);
  // Both discretizations are second order, so the gap closes at O(h^2).
  CHECK(fitted_order(steps, gaps) > 1.5);

  // Flat sanity value: laplacian of x^2 + y^2 is 4.
  const AnalyticScalar quad = [](double x, double y) { return x * x + y * y; };
  CHECK(laplacian(quad, kFlat, p, 1e-3) == doctest::Approx(4.0).epsilon(1e-7));
}

TEST_CASE("tensor divergence: constants, f I, and the metric itself") {
  const Eigen::Vector2d p{0.6, 0.35};

  const AnalyticTensor constant = [](double, double) -> Sym2 { return {1.3, 0.2, 0.8}; };
  const Eigen::Vector2d dc = div_tensor(constant, kFlat, p, 1e-3);
  CHECK(dc.x() == 0.0);
  CHECK(dc.y() == 0.0);

  // T = f I on the flat chart: (div T)_j = d_j f.
  const AnalyticScalar f = [](double x, double y) { return std::sin(x + 2 * y); };
  const AnalyticTensor fI = [&f](double x, double y) -> Sym2 {
    return {f(x, y), 0, f(x, y)};
  };
  const Eigen::Vector2d df{std::cos(p.x() + 2 * p.y()), 2 * std::cos(p.x() + 2 * p.y())};
  const Eigen::Vector2d dv = div_tensor(fI, kFlat, p, 1e-3);
  CHECK(std::abs(dv.x() - df.x()) < 1e-5);
  CHECK(std::abs(dv.y() - df.y()) < 1e-5);

  // Metric compatibility: div g = 0, and the cancellation is algebraic for
  // this discretization (the same central differences feed Gamma and dT), so
  // the residual is round-off no matter the step.
  for (double h : {4e-3, 2e-3, 1e-3})
    CHECK(div_tensor(kCurved, kCurved, p, h).norm() < 1e-11);
}

TEST_CASE("product rule for the divergence of a contracted tensor") {
  const Eigen::Vector2d p{0.52, 0.41};

  SUBCASE("zero tensor is exact") {
    const AnalyticTensor zero = [](double, double) -> Sym2 { return {0, 0, 0}; };
    const AnalyticScalar phi = [](double x, double y) { return 1 + x * y; };
    const AnalyticVector z = [](double x, double y) -> Eigen::Vector2d {
      return {std::cos(y), std::sin(x)};
    };
    CHECK(check_lemma1(zero, phi, z, kCurved, p, 1e-3) == 0.0);
  }

  SUBCASE("flat chart, T = g, phi = 1, Z a gradient") {
    const AnalyticTensor id = [](double, double) -> Sym2 { return {1, 0, 1}; };
    const AnalyticScalar one = [](double, double) { return 1.0; };
    const AnalyticVector z = [](double x, double y) -> Eigen::Vector2d {
      return {std::cos(x + 0.5 * y), 0.5 * std::cos(x + 0.5 * y)};
    };
    CHECK(check_lemma1(id, one, z, kFlat, p, 1e-3) < 1e-6);
  }

  SUBCASE("curved data converges at second order") {
    const AnalyticTensor t = [](double x, double y) -> Sym2 {
      return {std::sin(x) + 1.2, 0.3 * std::cos(x + 2 * y), std::cos(y) + 1.5};
    };
    const AnalyticScalar phi = [](double x, double y) {
      return 1.0 + 0.4 * std::sin(2 * x - y);
    };
    const AnalyticVector z = [](double x, double y) -> Eigen::Vector2d {
      return {std::cos(y) + 0.2 * x, std::sin(1.5 * x) - 0.3 * y * y};
    };
    std::vector<double> steps{4e-3, 2e-3, 1e-3}, res;
    for (double h : steps) res.push_back(check_lemma1(t, phi, z, kCurved, p, h));
    CHECK(res.back() < 1e-4);
    CHECK(fitted_order(steps, res) > 1.7);
  }
}

TEST_CASE("derivative rules for time-dependent inner products") {
  const Eigen::Vector2d p{0.44, 0.58};
  const TimeCovector x_lin = [](double t, double x, double y) -> Eigen::Vector2d {
    return {std::sin(x + 2 * y) + 0.5 * t, std::cos(x - y) - t};
  };
  const TimeCovector y_lin = [](double t, double x, double y) -> Eigen::Vector2d {
    return {0.7 + 0.3 * t, std::sin(x * y + 0.5) + 2 * t};
  };
  const TimeScalar l_lin = [](double t, double x, double y) {
    return std::cos(0.9 * x - 0.3) * (1 + 0.5 * y) + t * std::sin(x + 2 * y);
  };

  SUBCASE("frozen metric leaves only exact terms") {
    const auto fam = family_from(
        [](double, double x, double y) { return kCurved(x, y); }, 1e-4);
    const PResiduals r = check_P1_P2_P3(fam, x_lin, y_lin, kWave, l_lin, p);
    CHECK(r.p1 < 1e-11);
    CHECK(r.p2 < 1e-13);
    CHECK(r.p3 < 1e-11);
  }

  SUBCASE("uniform scaling g(t) = (1+t) I") {
    const auto fam = family_from(
        [](double t, double, double) -> Sym2 { return {1 + t, 0, 1 + t}; }, 1e-4);
    const PResiduals r = check_P1_P2_P3(fam, x_lin, y_lin, kWave, l_lin, p);
    CHECK(r.p2 < 1e-6);
    CHECK(r.p1 < 1e-6);
    CHECK(r.p3 < 1e-6);
  }

  SUBCASE("t-independent weight: the l' term drops out") {
    const TimeScalar l_frozen = [](double, double x, double y) {
      return std::cos(0.9 * x - 0.3) * (1 + 0.5 * y);
    };
    const auto fam = family_from(
        [](double t, double x, double y) {
          return kCurved(x, y) + t * Sym2{0.2 * std::sin(x), 0.1 * std::cos(y), -0.15};
        },
        1e-4);
    const PResiduals r = check_P1_P2_P3(fam, x_lin, y_lin, kWave, l_frozen, p);
    CHECK(r.p3 < 1e-6);
  }

  SUBCASE("curved family converges at second order") {
    std::vector<double> steps{4e-3, 2e-3, 1e-3}, r1, r2, r3;
    for (double s : steps) {
      const auto fam = family_from(
          [](double t, double x, double y) {
            return kCurved(x, y) + t * Sym2{0.3 * std::cos(x + y), 0.1, 0.1 * std::sin(y)} +
                   (t * t) * Sym2{0.05 * std::sin(2 * x), 0.0, 0.05 * std::cos(2 * y)};
          },
          s);
      const PResiduals r = check_P1_P2_P3(fam, x_lin, y_lin, kWave, l_lin, p);
      r1.push_back(r.p1);
      r2.push_back(r.p2);
      r3.push_back(r.p3);
    }
    CHECK(fitted_order(steps, r1) > 1.7);
    CHECK(fitted_order(steps, r2) > 1.7);
    CHECK(fitted_order(steps, r3) > 1.7);
    CHECK(r3.back() < 1e-4);
  }
}

TEST_CASE("unit normal velocity under metric deformation") {
  const Eigen::Vector2d p{0.38, 0.47};

  SUBCASE("frozen metric: the normal does not move") {
    const auto fam = family_from(
        [](double, double x, double y) { return kCurved(x, y); }, 1e-4);
    CHECK(check_lemma2(fam, kWave, p) == 0.0);
  }

  SUBCASE("conformal rate H = c g") {
    // nu(t) = nu0 / sqrt(1 + c t), so nu' = -(c/2) nu: the formula's
    // tangential part drops out.
    const double c = 0.4;
    const auto fam = family_from(
        [c](double t, double x, double y) { return (1 + c * t) * kCurved(x, y); },
        1e-4);
    CHECK(check_lemma2(fam, kWave, p) < 1e-6);
  }

  SUBCASE("generic family converges at second order") {
    std::vector<double> steps{4e-3, 2e-3, 1e-3}, res;
    for (double s : steps) {
      const auto fam = family_from(
          [](double t, double x, double y) {
            return kCurved(x, y) + t * Sym2{0.2 * std::sin(x), 0.1 * std::cos(y), -0.15};
          },
          s);
      res.push_back(check_lemma2(fam, kWave, p));
    }
    CHECK(res.back() < 1e-5);
    CHECK(fitted_order(steps, res) > 1.7);
  }
}

TEST_CASE("integral identity for the eigenvalue-form derivative of the laplacian") {
  SUBCASE("frozen metric gives a zero residual exactly") {
    const auto fam = family_from(
        [](double, double x, double y) { return kCurved(x, y); }, 2e-3);
    CHECK(check_prop3(fam, kWave, [](double, double) { return 1.0; }) == 0.0);
  }

  SUBCASE("uniform conformal scaling against l = 1") {
    // g(t) = (1+t) I: d/dt Laplacian f = -Laplacian f, and the right side
    // collapses to -<H, hess f> with H = I.
    const auto fam = family_from(
        [](double t, double, double) -> Sym2 { return {1 + t, 0, 1 + t}; }, 2e-3);
    const AnalyticScalar f = [](double x, double y) { return std::sin(x + y); };
    CHECK(check_prop3(fam, f, [](double, double) { return 1.0; }) < 1e-5);
  }

  SUBCASE("curved family and weight, second order in the step") {
    std::vector<double> steps{8e-3, 4e-3, 2e-3}, res;
    const AnalyticScalar l = [](double x, double y) {
      return std::cos(0.9 * x - 0.3) * (1 + 0.5 * y);
    };
    for (double s : steps) {
      const auto fam = family_from(
          [](double t, double x, double y) {
            return kCurved(x, y) +
                   t * Sym2{0.3 * std::cos(x + y), 0.1 + 0.05 * std::sin(3 * x),
                            -0.2 + 0.1 * std::sin(y)};
          },
          s);
      res.push_back(check_prop3(fam, kWave, l));
    }
    CHECK(fitted_order(steps, res) > 1.7);
  }

  SUBCASE("panel count must be positive") {
    const auto fam = family_from(
        [](double, double x, double y) { return kCurved(x, y); }, 2e-3);
    CHECK_THROWS_WITH_AS(
        check_prop3(fam, kWave, [](double, double) { return 1.0; }, 0),
        Contains("at least one panel"), ValidationError);
  }
}

TEST_CASE("boundary trace decomposition of the deformation rate") {
  const Eigen::Vector2d right_edge{1.0, 0.5};
  const AnalyticScalar level_x = [](double x, double y) {
    return x + 0.05 * std::sin(y);
  };

  SUBCASE("H = g makes every term conformal") {
    const auto fam = family_from(
        [](double t, double x, double y) { return (1 + t) * kCurved(x, y); }, 1e-3);
    CHECK(check_htilde(fam, right_edge, level_x) < 1e-12);
  }

  SUBCASE("rank-one H along the normal leaves no tangential trace") {
    const auto fam = family_from(
        [](double t, double, double) -> Sym2 { return Sym2{1, 0, 1} + t * Sym2{1, 0, 0}; },
        1e-3);
    const AnalyticScalar plain_x = [](double x, double) { return x; };
    CHECK(check_htilde(fam, right_edge, plain_x) < 1e-13);
  }

  SUBCASE("identity is algebraic: round-off for a generic rate") {
    const auto fam = family_from(
        [](double t, double x, double y) {
          return kCurved(x, y) + t * Sym2{0.3 * std::cos(x + y), 0.1, 0.1 * std::sin(y)};
        },
        1e-3);
    CHECK(check_htilde(fam, right_edge, level_x) < 1e-10);
    const AnalyticScalar level_y = [](double x, double y) { return -y + 0.03 * x * x; };
    CHECK(check_htilde(fam, {0.5, 0.0}, level_y) < 1e-10);
  }
}

TEST_CASE("validation: interiority, step sizes, degenerate data") {
  SUBCASE("points too close to the chart edge are rejected") {
    CHECK_THROWS_WITH_AS(christoffel(kFlat, {0.5, 1e-5}, 1e-3),
                         Contains("not interior"), ValidationError);
    CHECK_THROWS_WITH_AS(laplacian(kWave, kFlat, {1.0 - 1e-4, 0.5}, 1e-3),
                         Contains("not interior"), ValidationError);
  }

  SUBCASE("non-positive steps are rejected") {
    CHECK_THROWS_WITH_AS(christoffel(kFlat, {0.5, 0.5}, 0.0),
                         Contains("must be positive"), ValidationError);
    auto fam = family_from([](double, double x, double y) { return kCurved(x, y); }, 1e-4);
    fam.h_t = -1e-4;
    CHECK_THROWS_WITH_AS(check_lemma2(fam, kWave, {0.5, 0.5}),
                         Contains("must be positive"), ValidationError);
  }

  SUBCASE("non-SPD metrics are reported with the sample point") {
    const AnalyticMetric bad = [](double, double) -> Sym2 { return {-1, 0, 1}; };
    CHECK_THROWS_WITH_AS(christoffel(bad, {0.5, 0.5}, 1e-3),
                         Contains("not positive definite"), ValidationError);
    const auto fam = family_from(
        [](double t, double, double) -> Sym2 { return {1 - 30 * t, 0, 1}; }, 1e-1);
    CHECK_THROWS_WITH_AS(fam.at(0.1, 0.5, 0.5), Contains("family metric"),
                         ValidationError);
  }

  SUBCASE("a vanishing level gradient cannot define a normal") {
    const auto fam = family_from(
        [](double, double x, double y) { return kCurved(x, y); }, 1e-4);
    const AnalyticScalar constant = [](double, double) { return 0.7; };
    CHECK_THROWS_WITH_AS(check_lemma2(fam, constant, {0.5, 0.5}),
                         Contains("degenerate normal"), ValidationError);
  }
}

TEST_CASE("canned verification suite") {
  SUBCASE("every identity passes at the default steps") {
    const CalculusReport report = run_calculus_suite("all");
    CHECK(report.all_pass);
    CHECK(report.records.size() == 54);
    CHECK(report.groups.size() == 18);
    for (const auto& g : report.groups) {
      INFO(g.identity, " at ", g.point);
      CHECK(g.pass);
    }
  }

  SUBCASE("algebraic identities pass through the residual floor") {
    const CalculusReport report = run_calculus_suite("htilde");
    CHECK(report.all_pass);
    REQUIRE(report.groups.size() == 2);
    for (const auto& g : report.groups) CHECK(g.max_residual <= 1e-10);
  }

  SUBCASE("caller-provided steps are honoured") {
    const CalculusReport report = run_calculus_suite("lemma2", {4e-3, 2e-3});
    CHECK(report.records.size() == 6);
    for (const auto& r : report.records)
      CHECK((r.step == 4e-3 || r.step == 2e-3));
  }

  SUBCASE("unknown suite names and bad steps are rejected") {
    CHECK_THROWS_WITH_AS(run_calculus_suite("everything"), Contains("unknown suite"),
                         ValidationError);
    CHECK_THROWS_WITH_AS(run_calculus_suite("lemma1", {1e-3, -1e-3}),
                         Contains("must be positive"), ValidationError);
  }
}

TEST_CASE("calculus report CSV") {
  const CalculusReport report = run_calculus_suite("lemma2");
  const std::string path = "chart_report_test.csv";
  write_calculus_csv(path, report);

  std::ifstream in(path);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "identity,point,step,residual,fitted_order");
  int rows = 0;
  bool saw_lemma2 = false;
  while (std::getline(in, line)) {
    ++rows;
    if (line.rfind("lemma2,", 0) == 0) saw_lemma2 = true;
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
  }
  CHECK(rows == static_cast<int>(report.records.size()));
  CHECK(saw_lemma2);
  std::remove(path.c_str());

  CHECK_THROWS_WITH_AS(write_calculus_csv("/nonexistent_dir/x.csv", report),
                       Contains("cannot open"), ValidationError);
}
