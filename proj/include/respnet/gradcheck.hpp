#pragma once

#include <string>
#include <vector>

namespace respnet::nn {

struct GradCheckCase {
  std::string layer;
  double max_rel_err = 0;
  bool pass = false;
};

// Central finite-difference checks (h = 1e-3) of every layer's analytic
// gradients on randomized small tensors, run in 64-bit. One case per layer
// kind; max error is taken over all seeds and all checked tensors.
std::vector<GradCheckCase> run_gradcheck(int n_seeds, double tol = 1e-3);

}  // namespace respnet::nn
