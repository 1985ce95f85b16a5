// SPDX-License-Identifier: Apache-2.0
//
// Built with HMT_REAL_DOUBLE against hmt_nn_f64.
#include "gradient_summary.hpp"
#include "gradient_suite.hpp"

namespace hmt::acceptance {

GradientSummary run_gradient_suites() {
  GradientSummary s;
  for (const auto& c : testing::op_gradient_checks()) {
    ++s.ops;
    if (c.rel_error >= s.op_max_error) {
      s.op_max_error = c.rel_error;
      s.op_worst = c.op;
    }
  }
  s.expected_blocks = parameter_layout(testing::mini_model_config()).size();
  for (const auto& r : testing::model_gradient_checks()) {
    ++s.blocks;
    if (r.rel_error >= s.model_max_error) {
      s.model_max_error = r.rel_error;
      s.model_worst = r.name;
    }
    // Key biases shift every score of a query equally, so softmax cancels them.
    if (!r.name.ends_with(".bk") && (r.analytic_norm <= 1e-4 || r.checked == 0)) ++s.dead_blocks;
  }
  return s;
}

}  // namespace hmt::acceptance
