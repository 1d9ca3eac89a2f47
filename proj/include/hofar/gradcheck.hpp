#pragma once

#include <functional>
#include <string>
#include <vector>

#include "hofar/model.hpp"

// Central finite-difference verification of the recorded gradients, exposed
// as a library so the command-line harness and the tests share one engine.

namespace hofar {

struct GradCheckResult {
    std::string name;
    double worst_rel_err = 0.0;
    double tolerance = 0.0;
    bool pass = false;
};

// The callable must rebuild the same scalar loss graph on every invocation.
using LossBuilder = std::function<Tensor()>;

// Runs the loss once with gradients on, then perturbs every coordinate of
// every handle by +/-eps with gradients off. Returns the worst relative
// error |analytic - fd| / max(1, |analytic|, |fd|).
double fd_check(const LossBuilder& loss, std::vector<ParamHandle>& params, double eps = 1e-5);

GradCheckResult run_single_check(const std::string& name, const LossBuilder& loss,
                                 std::vector<ParamHandle> params, double tol,
                                 double eps = 1e-5);

// Per-operation checks (tolerance 1e-4) plus full training-step graphs on
// single- and two-scale micro setups (tolerance 1e-3).
std::vector<GradCheckResult> run_all_gradchecks();

}  // namespace hofar
