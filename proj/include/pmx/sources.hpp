#pragma once

#include <utility>
#include <vector>

#include "pmx/constants.hpp"
#include "pmx/field.hpp"
#include "pmx/hamiltonian.hpp"

namespace pmx {

/// Charge/current source machinery for the semi-relativistic model.
///
/// Everything here stores probability-normalized quantities (rho integrates
/// to the particle number, j to a probability flux); the charge sources fed
/// to the field solvers are q*rho and q*j.  All time derivatives of orbital
/// bilinears are evaluated by the product rule from a caller-supplied set of
/// dPsi/dt fields, never by differencing snapshots, so the decomposition and
/// continuity identities below hold to spatial-discretization accuracy
/// independent of the time integrator.

/// Full set of source fields for one (orbitals, potentials) configuration.
/// Invariants, with lambda = q hbar / 4 m^2 c^2 and s = sum_n w_n psi^dag sigma psi:
///   q rho_full = q rho_free - div(P_spin + P_darwin)         (<= 1e-12 relative)
///   q j_full   = q j_free + curl(M) + d/dt(P_spin + P_darwin) (<= 1e-11 relative)
struct SourceBundle {
    RealScalarField rho_free;
    RealScalarField rho_full;
    RealVectorField j_free;
    RealVectorField j_full;
    RealVectorField j0;        // zeroth-order current (paramagnetic + curl M / q)
    RealVectorField j2;        // second-order current for the reduced field equations
    RealVectorField M;         // spin magnetization (q hbar / 2m) s
    RealVectorField P_spin;
    RealVectorField P_darwin;
};

// ---- orbital bilinears -----------------------------------------------------

/// rho_free = sum_n w_n psi_n^dag psi_n.  Nonnegative by construction for
/// nonnegative occupations.
RealScalarField rho_free(const OrbitalSet& orbs);

/// Total spin density s = sum_n w_n psi_n^dag sigma psi_n.
RealVectorField total_spin(const OrbitalSet& orbs);

/// Paramagnetic probability current (i hbar / 2m)[(grad psi^dag) psi
/// - psi^dag grad psi], occupation-weighted.  Equals (hbar/m) Im(psi^dag
/// grad psi) identically, so no imaginary residue can arise.
RealVectorField paramagnetic_current(const OrbitalSet& orbs, const PhysicalConstants& pc);

/// The spin-gradient bilinear W_i = eps_ijk [(d_j psi^dag) sigma_k psi
/// + psi^dag sigma_j d_k psi] is purely imaginary; this returns Im W, i.e.
/// W = i * im_w.  The vanishing real part is computed literally and asserted
/// below 1e-13 of the bilinear scale (NumericsError otherwise): an algebra
/// slip in the epsilon contraction shows up as a test failure, not as a
/// silently discarded real part.
RealVectorField im_w_bilinear(const OrbitalSet& orbs);

/// d/dt of the above bilinears via the product rule with dorbs = dPsi/dt.
RealScalarField drho_free_dt(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt);
RealVectorField dspin_dt(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt);
RealVectorField dim_w_dt(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt);

/// d(j0)/dt by the product rule: the paramagnetic pair bilinear
/// (hbar/m)[Im(dpsi^dag grad psi) + Im(psi^dag grad dpsi)] plus
/// (hbar/2m) curl(ds/dt).  Feeds the Poisson chain that supplies the time
/// derivatives of the zeroth-order scalar potential without snapshot
/// differencing.
RealVectorField dj0_dt(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt,
                       const PhysicalConstants& pc);

/// Zeroth-order current j0 = paramagnetic + (hbar/2m) curl s, the piece that
/// sources the leading Ampere solve and the potential time-derivative chain.
RealVectorField j_zero_order(const OrbitalSet& orbs, const PhysicalConstants& pc);

// ---- densities and currents ------------------------------------------------

/// Second-order probability density
///   rho = psi^dag psi + (hbar/4mc^2) div[ (hbar/2m) grad(psi^dag psi)
///         + (q/m) A x s + (hbar/2m) im_w ],
/// the last bracket being -(i hbar/2m) W written through the imaginary part.
RealScalarField rho_full(const OrbitalSet& orbs, const RealVectorField& A,
                         const PhysicalConstants& pc);

/// Free current: paramagnetic - (q/m) A rho_free + (q hbar / 4 m^2 c^2) E x s.
/// E must be the electric field consistent with the potentials in use
/// (-grad phi - dA/dt for the full model, -grad phi0 for the reduced one).
RealVectorField j_free(const OrbitalSet& orbs, const RealVectorField& A,
                       const RealVectorField& E, const PhysicalConstants& pc);

/// Full second-order current: j_free + (hbar/2m) curl s
///   - (hbar/4mc^2) d/dt[ (hbar/2m) grad rho + (q/m) A x s + (hbar/2m) im_w ].
/// The time derivative expands by the product rule using dorbs_dt (and dA_dt
/// for the A x s factor; pass nullptr for a static vector potential).
RealVectorField j_full(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt,
                       const RealVectorField& A, const RealVectorField& E,
                       const PhysicalConstants& pc,
                       const RealVectorField* dA_dt = nullptr);

// ---- bound-charge moments --------------------------------------------------

/// M = (q hbar / 2m) s.
RealVectorField magnetization(const OrbitalSet& orbs, const PhysicalConstants& pc);

/// P_spin = -(q hbar / 4 m c^2) [ (q/m) A x s + (hbar/2m) im_w ].
RealVectorField polarization_spin(const OrbitalSet& orbs, const RealVectorField& A,
                                  const PhysicalConstants& pc);

/// P_darwin = -(q hbar^2 / 8 m^2 c^2) grad rho_free.
RealVectorField polarization_darwin(const OrbitalSet& orbs, const PhysicalConstants& pc);

/// d/dt (P_spin + P_darwin) by the product rule; dA_dt as in j_full.
RealVectorField polarization_dt(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt,
                                const RealVectorField& A, const PhysicalConstants& pc,
                                const RealVectorField* dA_dt = nullptr);

// ---- order-separated currents ----------------------------------------------

/// Currents split by order in 1/c for the reduced (electric-limit) field
/// equations:
///   j0 = paramagnetic + (hbar/2m) curl s
///   j2 = -(q/m) A2 rho_free - (q hbar / 4 m^2 c^2) grad(phi0) x s
///        + (1/q) dP/dt, with the A x s part of P_spin dropped (it is beyond
///        second order when A itself is second order).
/// The Ampere-type solve uses q (j0 + j2); continuity holds for
/// d(rho_free)/dt + div(j0 + j2^free) = 0 under the reduced Hamiltonian.
std::pair<RealVectorField, RealVectorField> ordered_currents(
    const OrbitalSet& orbs, const OrbitalSet& dorbs_dt, const RealVectorField& A2,
    const RealScalarField& phi0, const PhysicalConstants& pc);

// ---- relativistic mass-correction current ----------------------------------

/// Current correction sourced by the (p - qA)^4 / 8 m^3 c^2 mass term,
/// assembled term for term:
///   (q hbar^2/4 m^3 c^2) [ (grad psi^dag) div(A psi) + div(A psi^dag)(grad psi)
///                        + (A.grad psi^dag)(grad psi) + (grad psi^dag)(A.grad psi) ]
///   - (q hbar^2/4 m^3 c^2) grad{ div(A rho) }
///   + (q^3/m^3 c^2) A^2 A rho
///   + (i hbar q^2/2 m^3 c^2) A [ psi^dag (A.grad psi) - (A.grad psi^dag) psi ]
///   - (i hbar q^2/2 m^3 c^2) A^2 [ (grad psi^dag) psi - psi^dag grad psi ]
///   - (q hbar^2/4 m^3 c^2) [ psi^dag lap psi + (lap psi^dag) psi ] A.
/// Every term carries at least one power of A, so the result vanishes
/// identically (exact zeros) when A = 0.
RealVectorField j_rel_mass_correction(const OrbitalSet& orbs, const RealVectorField& A,
                                      const PhysicalConstants& pc);

// ---- bundle ----------------------------------------------------------------

/// Computes the complete bundle for a self-consistent configuration where A
/// is the second-order vector potential and phi0 the zeroth-order scalar
/// potential; E = -grad phi0 - dA_dt is formed internally.
SourceBundle compute_sources(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt,
                             const RealVectorField& A, const RealScalarField& phi0,
                             const PhysicalConstants& pc,
                             const RealVectorField* dA_dt = nullptr);

// ---- continuity ------------------------------------------------------------

struct ContinuityReport {
    RealScalarField residual;   // d(rho_free)/dt + div j_free, pointwise
    double residual_l2 = 0.0;   // L2 norm of the residual over the box
    double flux_l2 = 0.0;       // L2 norm of div j_free (normalization scale)
    double normalized = 0.0;    // residual_l2 / max(flux_l2, tiny)
};

/// Continuity residual with explicit inputs (dorbs = dPsi/dt already known).
ContinuityReport continuity_residual(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt,
                                     const RealVectorField& A, const RealVectorField& E,
                                     const PhysicalConstants& pc);

/// Continuity residual for orbitals evolving under the given potentials:
/// dPsi/dt = -(i/hbar) H Psi with H selected by opt.model, and (A, E) chosen
/// consistently (full model: A, E = -grad phi - dA_dt; reduced model: A,
/// E = -grad phi).  A corrupted Hamiltonian (e.g. a rescaled spin-orbit
/// prefactor) surfaces here as a residual above the discretization floor.
ContinuityReport continuity_residual(const OrbitalSet& orbs, const Potentials& pot,
                                     const PhysicalConstants& pc,
                                     const HamiltonianOptions& opt);

// ---- variational consistency -----------------------------------------------

enum class VariationalMode {
    static_snapshot,  // time-frozen perturbation; d/dt source terms drop
    spacetime         // time-windowed perturbation integrated over a trajectory
};

struct VariationalResult {
    double fd_value = 0.0;       // D = [E(pot + eps*delta) - E(pot)] / eps, time-summed
    double source_value = 0.0;   // S = sum_t w_t q Int(rho_full dphi - j.dA) dV
    double abs_error = 0.0;      // |D - S|
    double relative_error = 0.0; // |D - S| / max(|S|, floor)
};

/// Checks that the sources are the functional derivatives of the field-matter
/// coupling energy: a one-sided finite difference of the energy under
/// (dphi, dA) perturbations against the direct integral of the sources.  The
/// agreement improves linearly in eps (one-sided truncation), which the
/// convergence tests exploit.
///
/// static_snapshot: each sample is checked with a frozen perturbation
/// (no dA/dt channel); the current entering S is j without its d/dt terms.
/// spacetime: trapezoid quadrature over the trajectory with spacing dt; the
/// perturbation's time derivative and dPsi/dt are formed by second-order
/// differences of the supplied samples, so the window should be smooth and
/// vanish near both endpoints.
VariationalResult variational_check(const std::vector<SpinorField>& psi_traj,
                                    const std::vector<Potentials>& pot_traj,
                                    const std::vector<RealScalarField>& dphi_traj,
                                    const std::vector<RealVectorField>& dA_traj,
                                    double epsilon, double dt, const PhysicalConstants& pc,
                                    VariationalMode mode,
                                    const HamiltonianOptions& opt = HamiltonianOptions{});

}  // namespace pmx
