#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "detdisc/objective.hpp"

namespace detdisc {

struct GradCheckResult {
  std::string name;
  double max_rel_error = 0.0;
  bool pass = false;
};

// Small random fixture with all hinge margins and rectifier pre-activations
// kept away from their kinks, so central differences are valid.
struct GradCheckFixture {
  Model model;
  Dataset dataset;
  std::vector<MiningAssignment> assignments;
  std::string weak_category;
};

GradCheckFixture random_fixture(std::uint64_t seed);

// Central finite differences with step h against the analytic gradients.
// Relative error uses denominator max(1, |analytic|, |numeric|).
double repr_backward_max_error(std::uint64_t seed, double h);
double objective_max_error(ObjectiveId id, const GradCheckFixture& fx, double h,
                           bool corrupt_one_entry = false);

// Runs the full suite over `fixtures` seeds. With corrupt=true one analytic
// entry is perturbed to verify the check actually fails.
std::vector<GradCheckResult> run_grad_checks(std::uint64_t seed, int fixtures,
                                             double tolerance, bool corrupt);

}  // namespace detdisc
