#pragma once

#include <cstdint>

#include "pmx/field.hpp"

namespace pmx {

/// Deterministic band-limited random fields for property tests and the
/// built-in verification suite.  All generators draw from mt19937_64 seeded
/// explicitly; identical seeds give identical fields on every platform with
/// IEEE doubles.  Fields are low-passed to `frac` of the Nyquist range
/// (default 1/3) so pointwise products of up to three of them stay resolved.

RealScalarField random_scalar(const Grid& g, std::uint64_t seed, double amplitude = 1.0,
                              double frac = 1.0 / 3.0);

RealVectorField random_vector(const Grid& g, std::uint64_t seed, double amplitude = 1.0,
                              double frac = 1.0 / 3.0);

/// Unit-norm random spinor field.
SpinorField random_spinor(const Grid& g, std::uint64_t seed, double frac = 1.0 / 3.0);

}  // namespace pmx
