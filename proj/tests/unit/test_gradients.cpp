// Finite-difference checks, compiled in double precision.
#include "doctest.h"
#include "gradient_suite.hpp"

using namespace hmt;
using namespace hmt::testing;

TEST_CASE("every op matches central differences") {
  for (const auto& c : op_gradient_checks()) {
    INFO(c.op);
    CHECK(c.rel_error < 1e-4);
  }
}

TEST_CASE("every block of the mini multi-task model matches central differences") {
  const auto results = model_gradient_checks();
  CHECK(results.size() == parameter_layout(mini_model_config()).size());
  for (const auto& r : results) {
    INFO(r.name);
    CHECK(r.checked > 0);
    CHECK(r.rel_error < 1e-3);
    // Key biases shift every score of a query equally, so softmax cancels them.
    if (!r.name.ends_with(".bk")) CHECK(r.analytic_norm > 1e-4);
  }
}
