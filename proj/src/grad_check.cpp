#include "genhead/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace genhead {

GradCheckReport grad_check(const ScalarFn& f, const Tensor& x, double h, double tol, double floor) {
  Tape tape;
  const Tensor xv = tape.variable(x);
  const Tensor y = f(xv);
  const Tensor xs[] = {xv};
  const Tensor analytic = y.tracked() ? tape.gradients(y, xs)[0] : Tensor(x.shape(), 0.0);

  GradCheckReport report;
  Tensor probe = x.clone();
  auto pv = probe.mutable_values();
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double orig = pv[i];
    pv[i] = orig + h;
    const double up = f(probe).item();
    pv[i] = orig - h;
    const double down = f(probe).item();
    pv[i] = orig;
    const double numeric = (up - down) / (2.0 * h);
    const double a = analytic[i];
    const double abs_err = std::abs(a - numeric);
    const double rel = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
    report.max_abs_error = std::max(report.max_abs_error, abs_err);
  }
  report.passed = report.max_rel_error <= tol;
  return report;
}

}  // namespace genhead
