#include "pmx/maxwell.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "pmx/errors.hpp"
#include "pmx/spectral.hpp"

namespace pmx {
namespace {

// A source whose integral exceeds this (absolute, in source units times
// volume) has genuine net charge rather than rounding residue.  The neutral
// sources that reach these solves (rho2 as a total divergence, spectral
// divergences of currents) integrate to ~1e-13 at worst; deliberately charged
// test densities integrate to O(1).
constexpr double kNetSourceTol = 1e-10;

// Floor for the normalized gauge residual denominator, so an identically
// static configuration reports 0 instead of 0/0.
constexpr double kGaugeScaleFloor = 1e-30;

}  // namespace

RealScalarField solve_poisson(const RealScalarField& source, bool neutralize,
                              double* subtracted_mean) {
    check_finite(source, "solve_poisson: source");
    if (!neutralize) {
        const double net = mean(source) * source.grid.volume();
        if (std::abs(net) > kNetSourceTol) {
            std::ostringstream os;
            os << "solve_poisson: periodic problem has no solution for net source "
               << net << " (|mean|*V tolerance " << kNetSourceTol
               << "); enable the neutralizing background to subtract it";
            throw NumericsError(os.str());
        }
    }
    double removed = 0.0;
    RealScalarField u = spectral::inverse_laplacian(source, &removed);
    if (subtracted_mean) *subtracted_mean = removed;
    return u;
}

RealVectorField solve_poisson(const RealVectorField& source, bool neutralize,
                              std::array<double, 3>* subtracted_means) {
    RealVectorField out(source.grid);
    for (int k = 0; k < 3; ++k) {
        RealScalarField comp(source.grid);
        comp.v = source.comp[k];
        double removed = 0.0;
        RealScalarField u = solve_poisson(comp, neutralize, &removed);
        out.comp[k] = std::move(u.v);
        if (subtracted_means) (*subtracted_means)[k] = removed;
    }
    return out;
}

RealScalarField solve_phi0(const RealScalarField& rho0, const PhysicalConstants& pc,
                           bool neutralize, double* subtracted_mean) {
    RealScalarField rhs = rho0;
    scale(pc.charge / pc.eps0, rhs);
    return solve_poisson(rhs, neutralize, subtracted_mean);
}

RealScalarField solve_phi2(const RealScalarField& rho2,
                           const RealScalarField& d2phi0_dt2,
                           const PhysicalConstants& pc, bool neutralize,
                           double* subtracted_mean) {
    check_same_grid(rho2.grid, d2phi0_dt2.grid, "solve_phi2");
    RealScalarField rhs = rho2;
    scale(pc.charge / pc.eps0, rhs);
    axpy(-1.0 / (pc.c * pc.c), d2phi0_dt2, rhs);
    return solve_poisson(rhs, neutralize, subtracted_mean);
}

RealVectorField solve_A2(const RealVectorField& j, const PhysicalConstants& pc,
                         std::array<double, 3>* subtracted_means) {
    RealVectorField rhs = j;
    scale(pc.charge / (pc.eps0 * pc.c * pc.c), rhs);
    // Always neutralize: the k = 0 mode of A2 is undetermined on the torus.
    return solve_poisson(rhs, true, subtracted_means);
}

void fields_from_potentials(EMState& st, const RealVectorField& dA2_dt) {
    check_same_grid(st.phi0.grid, dA2_dt.grid, "fields_from_potentials: dA2_dt");
    st.E0 = spectral::gradient(st.phi0);
    scale(-1.0, st.E0);
    st.E2 = spectral::gradient(st.phi2);
    scale(-1.0, st.E2);
    axpy(-1.0, dA2_dt, st.E2);
    st.B2 = spectral::curl(st.A2);
}

GaugeReport gauge_residual(const RealVectorField& A2,
                           const RealScalarField& dphi0_dt,
                           const PhysicalConstants& pc) {
    check_same_grid(A2.grid, dphi0_dt.grid, "gauge_residual");
    const double inv_c2 = 1.0 / (pc.c * pc.c);
    RealScalarField div_a = spectral::divergence(A2);
    GaugeReport rep;
    rep.scale = l2_norm(div_a) + inv_c2 * l2_norm(dphi0_dt);
    axpy(inv_c2, dphi0_dt, div_a);
    rep.residual_l2 = l2_norm(div_a);
    rep.normalized = rep.residual_l2 / std::max(rep.scale, kGaugeScaleFloor);
    return rep;
}

RealScalarField dphi0_dt_chain(const RealVectorField& j0, const PhysicalConstants& pc) {
    RealScalarField src = spectral::divergence(j0);
    scale(-pc.charge / pc.eps0, src);
    // The divergence has no zero mode, so the neutrality check is vacuous.
    return solve_poisson(src, false);
}

RealScalarField d2phi0_dt2_chain(const RealVectorField& dj0dt,
                                 const PhysicalConstants& pc) {
    RealScalarField src = spectral::divergence(dj0dt);
    scale(-pc.charge / pc.eps0, src);
    return solve_poisson(src, false);
}

RealScalarField snapshot_time_derivative(const RealScalarField& a,
                                         const RealScalarField& b, double dt) {
    check_same_grid(a.grid, b.grid, "snapshot_time_derivative");
    if (!(dt > 0.0)) throw std::invalid_argument("snapshot_time_derivative: dt <= 0");
    RealScalarField out = b;
    axpy(-1.0, a, out);
    scale(1.0 / dt, out);
    return out;
}

}  // namespace pmx
