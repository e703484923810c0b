#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mca/ops.hpp"

namespace mca {

struct GradCheckReport {
  bool pass = true;
  real max_rel_error = 0;
  std::size_t worst_index = 0;
  std::vector<real> rel_errors;
};

// Compares the autodiff gradient of a deterministic scalar-valued function
// against central finite differences at `point`. Relative error per element
// is |ad - fd| / max(1, |ad|, |fd|).
inline GradCheckReport grad_check(
    const std::function<Tensor(const Tensor&)>& fn, const Tensor& point,
    real step = real(1e-4), real tolerance = real(1e-4)) {
  Tensor x = Tensor::from_data(point.shape(), point.data(), true);
  Tensor loss = fn(x);
  MCA_CHECK(loss.numel() == 1, "grad_check: fn must be scalar-valued");
  {
    Tensor x2 = Tensor::from_data(point.shape(), point.data(), true);
    Tensor loss2 = fn(x2);
    MCA_CHECK(loss.item() == loss2.item(),
              "grad_check: fn is not deterministic (double evaluation "
              "mismatch)");
  }
  loss.backward();
  const std::vector<real> ad = x.grad();

  GradCheckReport report;
  report.rel_errors.resize(point.numel());
  std::vector<real> probe = point.data();
  for (std::size_t i = 0; i < probe.size(); ++i) {
    real saved = probe[i];
    probe[i] = saved + step;
    real up = fn(Tensor::from_data(point.shape(), probe)).item();
    probe[i] = saved - step;
    real down = fn(Tensor::from_data(point.shape(), probe)).item();
    probe[i] = saved;
    real fd = (up - down) / (2 * step);
    real denom = std::max({real(1), std::abs(ad[i]), std::abs(fd)});
    real rel = std::abs(ad[i] - fd) / denom;
    report.rel_errors[i] = rel;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_index = i;
    }
  }
  report.pass = report.max_rel_error < tolerance;
  return report;
}

// Finite-difference gradient of a nullary scalar function with respect to a
// parameter tensor modified in place. Used to check full-network gradients
// where parameters live inside layer objects.
inline real numeric_grad_at(const std::function<real()>& fn, Tensor param,
                            std::size_t index, real step = real(1e-4)) {
  real saved = param.data()[index];
  param.data()[index] = saved + step;
  real up = fn();
  param.data()[index] = saved - step;
  real down = fn();
  param.data()[index] = saved;
  return (up - down) / (2 * step);
}

inline real rel_error(real a, real b) {
  return std::abs(a - b) / std::max({real(1), std::abs(a), std::abs(b)});
}

}  // namespace mca
