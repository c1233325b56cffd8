#pragma once

#include <functional>
#include <string>
#include <vector>

#include "coupled/tensor.hpp"

namespace coupled {

/// One parameter under test: the live tensor the objective reads, and the
/// analytic gradient claimed for it.
struct GradCheckTarget {
  std::string name;
  Tensor* param;
  const Tensor* analytic;
};

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double worst_numeric = 0.0;
  double worst_analytic = 0.0;
  bool passed = true;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tolerance = 0.0;

  bool passed() const;
  double max_rel_error() const;
};

/// Relative error |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double numeric, double analytic);

/// Central-difference check of `analytic` against `objective`. Each
/// parameter entry is perturbed in place by +/- epsilon and restored
/// bit-exactly afterwards. Throws NumericError if the objective returns a
/// non-finite value.
GradCheckReport finite_diff_check(const std::function<double()>& objective,
                                  const std::vector<GradCheckTarget>& targets,
                                  double epsilon, double tolerance);

}  // namespace coupled
