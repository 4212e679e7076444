#pragma once

#include <array>
#include <span>

#include "augkit/pam.hpp"

namespace augkit::pam {

/// Reverse pass of gate_forward for one position. Accumulates parameter
/// gradients into gp (full layout), token gradients into dtokens (3 x D) and
/// the gradient of W_C q into dcontext.
template <typename T>
void gate_backward(const GateCache<T>& cache, const std::array<T, 3>& dscores,
                   const PamParams<T>& params, T* gp, T* dtokens, T* dcontext,
                   std::span<const T> context);

}  // namespace augkit::pam
