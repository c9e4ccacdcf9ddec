#pragma once

#include <array>

#include "pmx/constants.hpp"
#include "pmx/field.hpp"

namespace pmx {

/// Electromagnetic state of the order-expanded Maxwell sector on the periodic
/// box.  The expansion is the electric limit: at leading order the magnetic
/// field is absent (there is no A0 or B0 slot at all, so the invariant
/// "B0 = 0 identically" holds structurally), electrostatics enters through
/// phi0, and the magnetic response first appears at second order through A2.
/// E and B members are derived caches filled by fields_from_potentials; B2 is
/// a spectral curl and therefore divergence free to rounding.
///
/// The solves on a torus only determine potentials up to their zero mode.
/// Each solve projects that mode out and reports the source mean it removed;
/// background_neutralized records whether a compensating uniform background
/// (jellium) was requested for a net-charged rho0.
struct EMState {
    RealScalarField phi0;
    RealScalarField phi2;
    RealVectorField A2;

    RealVectorField E0;  ///< -grad phi0
    RealVectorField E2;  ///< -grad phi2 - dA2/dt
    RealVectorField B2;  ///< curl A2

    bool background_neutralized = false;
    double subtracted_mean_phi0 = 0.0;
    double subtracted_mean_phi2 = 0.0;
    std::array<double, 3> subtracted_mean_A2{0.0, 0.0, 0.0};

    EMState() = default;
    explicit EMState(const Grid& g)
        : phi0(g), phi2(g), A2(g), E0(g), E2(g), B2(g) {}

    static EMState zero(const Grid& g) { return EMState(g); }
};

/// Periodic Poisson solve -lap(u) = source with the zero mode projected out,
/// so mean(u) = 0.  A periodic problem has no solution for a source with
/// nonzero mean; with neutralize = false such a source (|mean| * volume above
/// an absolute tolerance of 1e-10) raises NumericsError, while
/// neutralize = true subtracts the mean as a uniform compensating background
/// and reports it through subtracted_mean.  Either way the reported value is
/// the exact mean removed before inversion.
RealScalarField solve_poisson(const RealScalarField& source, bool neutralize,
                              double* subtracted_mean = nullptr);

/// Component-wise vector version.  Vector sources (currents) are neutralized
/// per component on request; the three removed means are reported together.
RealVectorField solve_poisson(const RealVectorField& source, bool neutralize,
                              std::array<double, 3>* subtracted_means = nullptr);

/// Zeroth-order electrostatics: -lap phi0 = (q/eps0) rho0.
RealScalarField solve_phi0(const RealScalarField& rho0, const PhysicalConstants& pc,
                           bool neutralize, double* subtracted_mean = nullptr);

/// Second-order scalar potential: -lap phi2 = (q/eps0) rho2 - c^-2 d2(phi0)/dt2.
/// rho2 is the second-order charge correction (a total divergence, hence
/// neutral up to rounding); the d'Alembertian remnant of phi0 enters as the
/// retardation source.  Obtain d2phi0_dt2 from d2phi0_dt2_chain rather than
/// by differencing snapshots.
RealScalarField solve_phi2(const RealScalarField& rho2,
                           const RealScalarField& d2phi0_dt2,
                           const PhysicalConstants& pc, bool neutralize,
                           double* subtracted_mean = nullptr);

/// Second-order vector potential: -lap A2 = (q / eps0 c^2) j.  The zero mode
/// of the current (a net drift) sources no periodic A2; the k = 0 component
/// of the solve is undetermined on the torus, so it is set to zero and the
/// dropped source means are reported.  Callers choose which current to feed:
/// j0 + j2_free for the reduced model, j0 + j2 for the full internal model.
RealVectorField solve_A2(const RealVectorField& j, const PhysicalConstants& pc,
                         std::array<double, 3>* subtracted_means = nullptr);

/// Fill the derived field caches: E0 = -grad phi0, E2 = -grad phi2 - dA2_dt,
/// B2 = curl A2.
void fields_from_potentials(EMState& st, const RealVectorField& dA2_dt);

/// Residual of the order-expanded Lorentz gauge condition
/// div A2 + c^-2 dphi0/dt.
struct GaugeReport {
    double residual_l2 = 0.0;  ///< ||div A2 + c^-2 dphi0/dt||_2
    double scale = 0.0;        ///< ||div A2||_2 + ||c^-2 dphi0/dt||_2
    double normalized = 0.0;   ///< residual_l2 / max(scale, floor)
};

GaugeReport gauge_residual(const RealVectorField& A2,
                           const RealScalarField& dphi0_dt,
                           const PhysicalConstants& pc);

/// Time derivatives of phi0 through the Poisson chain instead of snapshot
/// differencing: d/dt(-lap phi0) = (q/eps0) drho0/dt = -(q/eps0) div j0 by
/// continuity of the free sector, so dphi0/dt solves the same Poisson problem
/// with source -(q/eps0) div j0; the second derivative repeats the chain with
/// dj0/dt.  A spectral divergence has no zero mode, so these solves never
/// need a background.  When A2 is fed by j0 alone, the chain value makes the
/// discrete gauge residual vanish to rounding at any resolution, because
/// -lap(div A2) and -lap(c^-2 dphi0/dt) are then equal and opposite fields
/// with their zero modes removed.
RealScalarField dphi0_dt_chain(const RealVectorField& j0, const PhysicalConstants& pc);
RealScalarField d2phi0_dt2_chain(const RealVectorField& dj0dt, const PhysicalConstants& pc);

/// Diagnostic fallback (b - a)/dt for cross-checking the chain derivatives
/// against actually evolved snapshots.  First-order accurate only; not used
/// in the production solves.
RealScalarField snapshot_time_derivative(const RealScalarField& a,
                                         const RealScalarField& b, double dt);

}  // namespace pmx
