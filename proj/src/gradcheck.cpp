#include "coupled/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace coupled {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(),
                     [](const GradCheckEntry& e) { return e.passed; });
}

double GradCheckReport::max_rel_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_rel_error);
  return worst;
}

double relative_error(double numeric, double analytic) {
  const double denom =
      std::max({std::abs(numeric), std::abs(analytic), 1e-8});
  return std::abs(numeric - analytic) / denom;
}

GradCheckReport finite_diff_check(const std::function<double()>& objective,
                                  const std::vector<GradCheckTarget>& targets,
                                  double epsilon, double tolerance) {
  if (!(epsilon > 0.0)) throw ConfigError("finite_diff_check: epsilon must be positive");

  auto evaluate = [&](const std::string& name, std::size_t index) {
    const double v = objective();
    if (!std::isfinite(v)) {
      throw NumericError("finite_diff_check: objective is non-finite while perturbing " +
                         name + "[" + std::to_string(index) + "]");
    }
    return v;
  };

  GradCheckReport report;
  report.tolerance = tolerance;
  for (const auto& t : targets) {
    if (t.param->shape() != t.analytic->shape()) {
      throw DimensionError("finite_diff_check: gradient for " + t.name + " has shape " +
                           shape_string(t.analytic->shape()) + ", parameter has " +
                           shape_string(t.param->shape()));
    }
    GradCheckEntry entry;
    entry.name = t.name;
    for (std::size_t i = 0; i < t.param->size(); ++i) {
      const double saved = (*t.param)[i];
      (*t.param)[i] = saved + epsilon;
      const double up = evaluate(t.name, i);
      (*t.param)[i] = saved - epsilon;
      const double down = evaluate(t.name, i);
      (*t.param)[i] = saved;

      const double numeric = (up - down) / (2.0 * epsilon);
      const double analytic = (*t.analytic)[i];
      const double err = relative_error(numeric, analytic);
      if (err > entry.max_rel_error || i == 0) {
        entry.max_rel_error = std::max(entry.max_rel_error, err);
        entry.worst_index = i;
        entry.worst_numeric = numeric;
        entry.worst_analytic = analytic;
      }
    }
    entry.passed = entry.max_rel_error <= tolerance;
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace coupled
