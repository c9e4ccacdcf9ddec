#pragma once

#include <array>

#include "pmx/field.hpp"

namespace pmx {

/// Pointwise Pauli-matrix algebra on two-component spinor fields.

/// s_i(r) = psi^dag sigma_i psi.  The bilinear is evaluated in complex
/// arithmetic; the imaginary part cancels exactly and is asserted to stay
/// below `imag_tol` before being discarded.
RealVectorField spin_density(const SpinorField& psi, double imag_tol = 1e-14);

/// rho(r) = psi^dag psi.
RealScalarField probability_density(const SpinorField& psi);

/// (B . sigma) psi with a real vector field B.
SpinorField sigma_dot(const RealVectorField& B, const SpinorField& psi);

/// sigma . V for a spinor-valued vector V (sum_i sigma_i V_i).
SpinorField sigma_dot(const std::array<SpinorField, 3>& V);

/// Normalized spinor (cos(theta/2), e^{i phi} sin(theta/2)) pointing along the
/// given direction.
std::array<cplx, 2> spinor_along(const std::array<double, 3>& dir);

}  // namespace pmx
