#pragma once

#include <array>

#include "pmx/field.hpp"

namespace pmx::spectral {

/// Spectral differential calculus on periodic grids.  All ops are pure: they
/// validate inputs (finite values), transform, apply the diagonal multiplier,
/// and transform back.  Derivatives of real fields return exactly real fields
/// (the imaginary part is discarded; it is zero up to rounding because the
/// derivative tables zero the unpaired Nyquist mode).

RealVectorField gradient(const RealScalarField& f);
RealScalarField divergence(const RealVectorField& f);
RealVectorField curl(const RealVectorField& f);
RealScalarField laplacian(const RealScalarField& f);

/// Single-axis derivative of a real field.
RealScalarField derivative(const RealScalarField& f, int axis);

/// Minus-Laplacian inverse with the zero mode projected out: returns u with
/// -lap(u) = f - mean(f), mean(u) = 0.  The subtracted mean is reported if
/// requested.  Charge-neutrality policy lives with the field solver, not here.
RealScalarField inverse_laplacian(const RealScalarField& f, double* subtracted_mean = nullptr);

/// Per-axis derivatives of both spinor components: result[axis] = d(psi)/dx_axis.
std::array<SpinorField, 3> spinor_gradient(const SpinorField& psi);
SpinorField spinor_laplacian(const SpinorField& psi);
SpinorField spinor_derivative(const SpinorField& psi, int axis);

/// Zero all modes with |m_axis| > frac * (n_axis/2) on any axis (sharp
/// low-pass).  Random test inputs use frac = 1/3 of the Nyquist range, so
/// pointwise products of up to three such fields remain alias-free.
void band_limit(RealScalarField& f, double frac);
void band_limit(RealVectorField& f, double frac);
void band_limit(SpinorField& f, double frac);

/// Translate a spinor field by a continuous offset (exact for band-limited
/// fields): psi(x) -> psi(x - shift).
SpinorField translate(const SpinorField& psi, const std::array<double, 3>& shift);

}  // namespace pmx::spectral
