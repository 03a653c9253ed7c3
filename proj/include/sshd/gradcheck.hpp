#pragma once

#include <string>
#include <vector>

#include "sshd/tensor.hpp"

namespace sshd {

// Central finite-difference check (64-bit, h=1e-6) of the tape gradients for
// one op or block scenario, across `seeds` random draws of small shapes.
// Relative error uses max(1, |analytic|, |numeric|) in the denominator.
struct GradcheckResult {
  std::string name;
  double max_rel_err = 0.0;
  int seeds = 0;
  int64_t checked_elements = 0;
};

std::vector<std::string> gradcheck_names();
bool is_gradcheck_name(const std::string& name);
GradcheckResult run_gradcheck(const std::string& name, int seeds, uint64_t seed0 = 1);

}  // namespace sshd
