// SPDX-License-Identifier: Apache-2.0
//
// Scalar type of the neural-network core. Production builds use 32-bit
// floats; defining HMT_REAL_DOUBLE compiles the same sources in double
// precision under a distinct inline namespace, which the gradient-check
// suites use as a high-precision finite-difference oracle.
#pragma once

namespace hmt {

#ifdef HMT_REAL_DOUBLE
#define HMT_NN_NAMESPACE nn_f64
#else
#define HMT_NN_NAMESPACE nn_f32
#endif

inline namespace HMT_NN_NAMESPACE {
#ifdef HMT_REAL_DOUBLE
using Real = double;
#else
using Real = float;
#endif
}  // namespace HMT_NN_NAMESPACE

}  // namespace hmt
