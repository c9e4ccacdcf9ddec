#pragma once

#include <complex>

#include "pmx/grid.hpp"

namespace pmx {

/// Thin wrapper over FFTW c2c transforms.  Plans are cached per grid shape in a
/// mutex-guarded pool and created with FFTW_ESTIMATE | FFTW_UNALIGNED, so plan
/// selection (and therefore floating-point evaluation order) is deterministic
/// and any caller buffer is acceptable.
///
/// Forward is unnormalized; inverse carries the 1/N factor.
namespace fft {

void forward(const Grid& g, std::complex<double>* data);
void inverse(const Grid& g, std::complex<double>* data);

}  // namespace fft
}  // namespace pmx
