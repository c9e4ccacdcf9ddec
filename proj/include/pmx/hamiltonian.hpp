#pragma once

#include <cstdint>
#include <optional>

#include "pmx/constants.hpp"
#include "pmx/field.hpp"

namespace pmx {

/// Electromagnetic potentials entering the Hamiltonian.  dA_dt is the
/// explicit, caller-supplied time derivative of A (analytic for external
/// drives; zero for static or lagged internal fields).  When direct_B is set
/// the Zeeman term uses it instead of curl(A); this bypass serves homogeneous-
/// field setups whose vector potential is not periodic on the box.
struct Potentials {
    RealScalarField phi;
    RealVectorField A;
    RealVectorField dA_dt;
    std::optional<RealVectorField> direct_B;

    static Potentials zero(const Grid& g) { return {RealScalarField(g), RealVectorField(g), RealVectorField(g), std::nullopt}; }
};

enum class Model : std::uint8_t { full, minimal };

struct HamiltonianOptions {
    bool include_rest_mass = false;
    bool include_darwin = true;
    bool include_soc = true;
    bool include_zeeman = true;
    Model model = Model::full;
    /// Fault-injection knob for the verification suite: scales only the main
    /// sigma.((grad phi + dA_dt) x (p - qA)) part of the spin-orbit block,
    /// leaving its anti-Hermitian completion untouched.  1.0 is physical.
    double soc_scale = 1.0;
};

/// Potential-derived fields cached once per field configuration; an RK4 step
/// evaluates the Hamiltonian several times against frozen potentials.
struct PreparedPotentials {
    Potentials pot;
    RealVectorField grad_phi;
    RealScalarField lap_phi;
    RealVectorField B;       // direct_B if given, else curl(A)
    RealScalarField div_A;
    RealVectorField curl_dA;
    RealScalarField div_dA;
    RealVectorField F;       // grad(phi) + dA_dt; the SOC driving field is -F
    bool has_A = false;      // any nonzero A entry
    bool has_dA = false;
};

PreparedPotentials prepare(const Potentials& pot);

/// H psi for the semi-relativistic Pauli Hamiltonian, second order in 1/c:
///
///   H = [m c^2] + q phi + (p - qA)^2 / 2m
///       - (q hbar / 2m) sigma.B
///       + (q hbar^2 / 8 m^2 c^2) (lap phi + div dA_dt)
///       + (q hbar / 4 m^2 c^2) sigma.[(grad phi + dA_dt) x (p - qA)]
///       + (i q hbar^2 / 8 m^2 c^2) sigma.(curl dA_dt)
///
/// The last term completes the spin-orbit block to an exactly Hermitian
/// operator for arbitrary smooth time-dependent potentials; it also restores
/// exact pointwise probability conservation.
SpinorField apply_h(const SpinorField& psi, const PreparedPotentials& pp,
                    const HamiltonianOptions& opt, const PhysicalConstants& pc);
SpinorField apply_h(const SpinorField& psi, const Potentials& pot,
                    const HamiltonianOptions& opt, const PhysicalConstants& pc);

/// Reduced self-consistent evolution: q phi + p^2/2m - (q/2m)(p.A + A.p)
/// - (q hbar/2m) sigma.curl A + Darwin(lap phi) + SOC(grad phi x p).
/// Equals apply_h with dA_dt = 0 once the diamagnetic q^2 A^2/2m term and the
/// SOC piece proportional to A (both beyond second order here) are dropped.
SpinorField apply_h_minimal(const SpinorField& psi, const PreparedPotentials& pp,
                            const HamiltonianOptions& opt, const PhysicalConstants& pc);
SpinorField apply_h_minimal(const SpinorField& psi, const Potentials& pot,
                            const HamiltonianOptions& opt, const PhysicalConstants& pc);

/// Occupation-weighted sum of Re<psi_n | H psi_n>.  Throws NumericsError when
/// the imaginary residue exceeds imag_tol * max(|real part|, 1), which would
/// indicate a hermiticity bug.
double energy_expectation(const OrbitalSet& orbs, const PreparedPotentials& pp,
                          const HamiltonianOptions& opt, const PhysicalConstants& pc,
                          double imag_tol = 1e-8);

/// Max over random band-limited pairs of |<phi|H psi> - <H phi|psi>|,
/// normalized by the larger Rayleigh quotient scale of the pair.
double hermiticity_defect(const Grid& g, const PreparedPotentials& pp,
                          const HamiltonianOptions& opt, const PhysicalConstants& pc,
                          int n_pairs, std::uint64_t seed);

}  // namespace pmx
