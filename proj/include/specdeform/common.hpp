#pragma once

#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace specdeform {

inline constexpr double kPi = 3.14159265358979323846;

// Bad input: malformed files, broken structural invariants, arguments
// outside a function's contract.  The CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A computation that started from valid inputs but could not be completed:
// lost positive definiteness, failed factorizations, windows that no longer
// isolate a cluster.  The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shortest text form that round-trips an IEEE double exactly ("%.17g").
// Every file emitter goes through this so reruns are byte-identical.
std::string format_double(double v);

// Least-squares slope of log(residual) against log(step); the standard
// convergence-order fit.  Requires >= 2 samples, all positive.
double fitted_order(const std::vector<double>& steps,
                    const std::vector<double>& residuals);

// Runs body(0..n-1) on up to `threads` workers.  Results must be written to
// index-addressed slots so the outcome does not depend on scheduling; the
// first exception thrown by any worker is rethrown on the caller.
void parallel_for(int n, int threads, const std::function<void(int)>& body);

}  // namespace specdeform
