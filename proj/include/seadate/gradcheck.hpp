#pragma once

#include <functional>
#include <string>
#include <vector>

#include "seadate/autograd.hpp"
#include "seadate/rng.hpp"

namespace seadate {

struct GradCheckReport {
    std::string op;
    double max_rel_error = 0.0;
    std::vector<std::pair<std::string, double>> per_input;  // (label, max rel error)
    bool pass = false;
    std::string diagnostic;
};

/// Compares the analytic gradient of a random scalar projection of op's output
/// against central finite differences, elementwise over every input.
/// Relative error is |analytic - numeric| / max(|analytic|, |numeric|, 1e-12).
GradCheckReport grad_check(const std::string& op_name,
                           const std::function<Var(const std::vector<Var>&)>& op,
                           const std::vector<Tensor>& inputs,
                           double h = 1e-6, double tol = 1e-5,
                           std::uint64_t seed = 0);

/// Convenience for checking gradients w.r.t. a subset of inputs (the rest are
/// treated as constants).
GradCheckReport grad_check_subset(const std::string& op_name,
                                  const std::function<Var(const std::vector<Var>&)>& op,
                                  const std::vector<Tensor>& inputs,
                                  const std::vector<bool>& check_input,
                                  double h = 1e-6, double tol = 1e-5,
                                  std::uint64_t seed = 0);

/// Random tensor with entries uniform in [lo, hi), deterministic in (seed, stream).
Tensor random_tensor(std::vector<std::size_t> shape, std::uint64_t seed,
                     std::uint64_t stream = 0, double lo = -1.0, double hi = 1.0);

}  // namespace seadate
