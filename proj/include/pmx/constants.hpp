#pragma once

#include <cmath>

namespace pmx {

/// Physical constants in Hartree atomic units (hbar = m = 1, q = -1,
/// eps0 = 1/4pi).  The speed of light is kept as an explicit parameter so the
/// 1/c^2 corrections can be scaled in tests and scans.
struct PhysicalConstants {
    double hbar = 1.0;
    double mass = 1.0;
    double charge = -1.0;
    double c = 137.035999;
    double eps0 = 1.0 / (4.0 * M_PI);

    /// Vacuum permeability, defined through mu0 * eps0 * c^2 = 1.
    double mu0() const { return 1.0 / (eps0 * c * c); }

    /// Prefactor of the spin-orbit term, q hbar / (4 m^2 c^2).
    double soc_prefactor() const { return charge * hbar / (4.0 * mass * mass * c * c); }

    /// Prefactor of the Darwin term, q hbar^2 / (8 m^2 c^2).
    double darwin_prefactor() const {
        return charge * hbar * hbar / (8.0 * mass * mass * c * c);
    }

    /// Prefactor of the Zeeman term, q hbar / (2 m).
    double zeeman_prefactor() const { return charge * hbar / (2.0 * mass); }
};

}  // namespace pmx
