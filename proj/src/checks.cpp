#include "pmx/checks.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>

#include "pmx/dynamics.hpp"
#include "pmx/errors.hpp"
#include "pmx/hamiltonian.hpp"
#include "pmx/maxwell.hpp"
#include "pmx/random_fields.hpp"
#include "pmx/sources.hpp"
#include "pmx/spectral.hpp"
#include "pmx/spinor.hpp"

namespace pmx {
namespace {

// Contract bounds.  The measured suites sit with comfortable margin under
// each: identities at a few 1e-13, the erf profile near 3e-6, hermiticity in
// the low 1e-12 range, drift ratios in the 50s.
constexpr double kBoundRhoIdentity = 1e-12;
constexpr double kBoundCurrentIdentity = 1e-11;
constexpr double kBoundIdentityTime = 30.0;  // seconds
constexpr double kBoundContinuityStatic = 1e-8;
constexpr double kMutationFloor = 1e-4;
constexpr double kBoundScalingRatio = 1e-9;
constexpr double kScalingPieceFloor = 1e-5;
constexpr double kBoundCosine = 1e-12;
constexpr double kBoundGaussErf = 1e-5;
constexpr double kGaussErfInteriorRadius = 3.5;
constexpr double kBoundRoundTrip = 1e-11;
constexpr double kBoundHermiticity = 1e-10;
constexpr double kBoundEnergyImag = 1e-8;
constexpr double kBoundNeutrality = 1e-12;
// Halving dt must shrink the one-step norm defect by at least 2^5; the
// kinetic-tail structure of the stability function actually delivers ~2^6.
constexpr double kBoundDriftRatio = 32.0;

// ---- self-contained analytic builders --------------------------------------

double periodized_gaussian_1d(double x, double center, double width, double L) {
    double s = 0.0;
    for (int j = -2; j <= 2; ++j) {
        const double d = x - center + j * L;
        s += std::exp(-d * d / (2.0 * width * width));
    }
    return s;
}

RealScalarField gaussian_scalar(const Grid& g, std::array<double, 3> center,
                                double width) {
    RealScalarField f(g);
    const auto& n = g.n();
    std::size_t idx = 0;
    for (int iz = 0; iz < n[2]; ++iz)
        for (int iy = 0; iy < n[1]; ++iy)
            for (int ix = 0; ix < n[0]; ++ix, ++idx)
                f.v[idx] =
                    periodized_gaussian_1d(g.coord(0, ix), center[0], width, g.box()[0]) *
                    periodized_gaussian_1d(g.coord(1, iy), center[1], width, g.box()[1]) *
                    periodized_gaussian_1d(g.coord(2, iz), center[2], width, g.box()[2]);
    return f;
}

SpinorField gaussian_spinor(const Grid& g, std::array<double, 3> center, double width,
                            std::array<int, 3> k_mode, std::array<cplx, 2> chi) {
    SpinorField psi(g);
    const auto& n = g.n();
    const std::array<double, 3> k{2.0 * M_PI * k_mode[0] / g.box()[0],
                                  2.0 * M_PI * k_mode[1] / g.box()[1],
                                  2.0 * M_PI * k_mode[2] / g.box()[2]};
    std::size_t idx = 0;
    for (int iz = 0; iz < n[2]; ++iz)
        for (int iy = 0; iy < n[1]; ++iy)
            for (int ix = 0; ix < n[0]; ++ix, ++idx) {
                const double x = g.coord(0, ix), y = g.coord(1, iy), z = g.coord(2, iz);
                const double env = periodized_gaussian_1d(x, center[0], width, g.box()[0]) *
                                   periodized_gaussian_1d(y, center[1], width, g.box()[1]) *
                                   periodized_gaussian_1d(z, center[2], width, g.box()[2]);
                const double phase = k[0] * x + k[1] * y + k[2] * z;
                const cplx val = env * cplx(std::cos(phase), std::sin(phase));
                psi.comp[0][idx] = chi[0] * val;
                psi.comp[1][idx] = chi[1] * val;
            }
    scale(1.0 / std::sqrt(norm2(psi)), psi);
    return psi;
}

/// dPsi/dt = -(i/hbar) H psi for every orbital, occupations carried over.
OrbitalSet schrodinger_dt(const OrbitalSet& orbs, const PreparedPotentials& pp,
                          const HamiltonianOptions& opt, const PhysicalConstants& pc) {
    OrbitalSet d;
    const cplx mih(0.0, -1.0 / pc.hbar);
    for (const Orbital& o : orbs.orbitals) {
        SpinorField h = apply_h(o.psi, pp, opt, pc);
        SpinorField dp(o.psi.grid);
        axpy(mih, h, dp);
        d.orbitals.push_back({std::move(dp), o.occupation});
    }
    return d;
}

double rel_l2_diff(const RealScalarField& a, const RealScalarField& b) {
    RealScalarField d = a;
    axpy(-1.0, b, d);
    return l2_norm(d) / std::max(l2_norm(b), 1e-300);
}

double rel_l2_diff(const RealVectorField& a, const RealVectorField& b) {
    RealVectorField d = a;
    axpy(-1.0, b, d);
    return l2_norm(d) / std::max(l2_norm(b), 1e-300);
}

void note(std::ostream* progress, const std::string& line) {
    if (progress) *progress << line << std::endl;
}

// ---- check groups ----------------------------------------------------------

/// Free/bound decomposition identities over randomized band-limited states on
/// grids between 16^3 and 24^3, with the monopole-free bound charge tracked in
/// the same pass.
void check_decomposition(std::vector<CheckResult>& out, std::ostream* progress) {
    note(progress, "[1/6] free/bound decomposition over 20 random states");
    const auto t0 = std::chrono::steady_clock::now();
    const PhysicalConstants pc;
    const HamiltonianOptions opt;

    double worst_rho = 0.0, worst_j = 0.0, worst_neutral = 0.0;
    for (int rep = 0; rep < 20; ++rep) {
        const int nn = 16 + 4 * (rep % 3);  // 16, 20, 24
        const Grid g({nn, nn, nn}, {9.0, 9.0, 9.0});
        const std::uint64_t seed = 101 + 17 * static_cast<std::uint64_t>(rep);
        OrbitalSet orbs;
        orbs.orbitals.push_back({random_spinor(g, seed), 1.0});
        if (rep % 2 == 1) orbs.orbitals.push_back({random_spinor(g, seed + 7), 0.7});

        Potentials pot{random_scalar(g, seed + 13, 0.6), random_vector(g, seed + 17, 0.5),
                       random_vector(g, seed + 19, 0.4), std::nullopt};
        const PreparedPotentials pp = prepare(pot);
        const OrbitalSet dorbs = schrodinger_dt(orbs, pp, opt, pc);
        RealVectorField efield(g);
        axpy(-1.0, pp.F, efield);

        const RealScalarField rho = rho_free(orbs);
        const RealScalarField rho2 = rho_full(orbs, pot.A, pc);

        // q rho_full = q rho_free - div(P_spin + P_darwin)
        RealVectorField p = polarization_spin(orbs, pot.A, pc);
        axpy(1.0, polarization_darwin(orbs, pc), p);
        RealScalarField rhs_rho = rho;
        axpy(-1.0 / pc.charge, spectral::divergence(p), rhs_rho);
        worst_rho = std::max(worst_rho, rel_l2_diff(rho2, rhs_rho));

        // q j_full = q j_free + curl M + d/dt(P_spin + P_darwin)
        const RealVectorField lhs_j = j_full(orbs, dorbs, pot.A, efield, pc, &pot.dA_dt);
        RealVectorField rhs_j = j_free(orbs, pot.A, efield, pc);
        axpy(1.0 / pc.charge, spectral::curl(magnetization(orbs, pc)), rhs_j);
        axpy(1.0 / pc.charge, polarization_dt(orbs, dorbs, pot.A, pc, &pot.dA_dt), rhs_j);
        worst_j = std::max(worst_j, rel_l2_diff(lhs_j, rhs_j));

        worst_neutral =
            std::max(worst_neutral, std::abs(integral(rho2) - integral(rho)) /
                                        std::max(1.0, std::abs(integral(rho))));
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    out.push_back({"free_bound_rho_identity", worst_rho <= kBoundRhoIdentity, worst_rho,
                   kBoundRhoIdentity, true, "20 states, grids 16^3..24^3"});
    out.push_back({"free_bound_current_identity", worst_j <= kBoundCurrentIdentity, worst_j,
                   kBoundCurrentIdentity, true, "same states"});
    out.push_back({"free_bound_identity_time", secs <= kBoundIdentityTime, secs,
                   kBoundIdentityTime, true, "seconds for the 20-state sweep"});
    out.push_back({"bound_charge_neutrality", worst_neutral <= kBoundNeutrality,
                   worst_neutral, kBoundNeutrality, true,
                   "|int rho_full - int rho_free| relative"});
}

/// Static continuity closure for a resolved packet under the full operator
/// with every potential on, plus the low-c stress and the mutation trap: a
/// 10% spin-orbit corruption has to surface far above the clean floor.
void check_continuity(std::vector<CheckResult>& out, std::ostream* progress) {
    note(progress, "[2/6] static continuity closure and the mutation trap");
    const double L = 12.0;
    const Grid g({40, 40, 40}, {L, L, L});
    const PhysicalConstants pc;

    OrbitalSet orbs;
    orbs.orbitals.push_back({gaussian_spinor(g, {6.0, 6.0, 6.0}, 1.45, {1, 1, 0},
                                             {cplx(0.9), cplx(0.0, 0.436)}),
                             1.0});
    // The well is off the packet center on purpose: concentric gaussians have
    // parallel gradients, which would silence the grad(phi) x grad(psi)
    // channel the corruption below must light up.
    RealScalarField phi = gaussian_scalar(g, {7.4, 5.2, 6.6}, 1.6);
    scale(-10.0, phi);
    const Potentials pot{std::move(phi), random_vector(g, 131, 0.4),
                         random_vector(g, 137, 0.3), std::nullopt};

    const double lab = continuity_residual(orbs, pot, pc, HamiltonianOptions{}).normalized;
    PhysicalConstants pc5 = pc;
    pc5.c = 5.0;  // every 1/c^2 channel magnified 750-fold
    const double slow = continuity_residual(orbs, pot, pc5, HamiltonianOptions{}).normalized;
    const double worst = std::max(lab, slow);
    out.push_back({"continuity_static_full", worst <= kBoundContinuityStatic, worst,
                   kBoundContinuityStatic, true,
                   "normalized; lab c and c = 5 (" + std::to_string(lab) + " / " +
                       std::to_string(slow) + ")"});

    HamiltonianOptions bad;
    bad.soc_scale = 1.1;
    const double trapped = continuity_residual(orbs, pot, pc5, bad).normalized;
    out.push_back({"continuity_soc_mutation_trap", trapped >= kMutationFloor, trapped,
                   kMutationFloor, false, "spin-orbit term scaled by 1.1"});
}

/// Doubling c shrinks every second-order source correction by exactly four:
/// pointwise on the density and current pieces, bitwise on the pieces that
/// scale through their prefactor alone.  The mass-correction current must
/// vanish identically without a vector potential.
void check_scaling(std::vector<CheckResult>& out, std::ostream* progress) {
    note(progress, "[3/6] 1/c^2 scaling of the source corrections");
    const Grid g({24, 24, 24}, {9.0, 9.0, 9.0});
    OrbitalSet orbs;
    orbs.orbitals.push_back({random_spinor(g, 301), 1.0});
    orbs.orbitals.push_back({random_spinor(g, 307), 0.7});
    OrbitalSet dorbs;
    dorbs.orbitals.push_back({random_spinor(g, 311), 1.0});
    dorbs.orbitals.push_back({random_spinor(g, 313), 0.7});
    const RealVectorField A = random_vector(g, 317, 0.5);
    const RealVectorField E = random_vector(g, 331, 0.4);
    const RealVectorField dA = random_vector(g, 337, 0.3);
    const RealScalarField rho = rho_free(orbs);
    const RealVectorField curl_m_over_q = [&] {
        PhysicalConstants pc;  // M carries no c; any c works here
        RealVectorField cm = spectral::curl(magnetization(orbs, pc));
        scale(1.0 / pc.charge, cm);
        return cm;
    }();

    double worst_rho = 0.0, worst_j = 0.0, worst_bitwise = 0.0;
    std::size_t least_counted = std::numeric_limits<std::size_t>::max();
    for (double c0 : {20.0, 137.035999}) {
        PhysicalConstants pc1, pc2;
        pc1.c = c0;
        pc2.c = 2.0 * c0;

        RealScalarField pr1 = rho_full(orbs, A, pc1);
        axpy(-1.0, rho, pr1);
        RealScalarField pr2 = rho_full(orbs, A, pc2);
        axpy(-1.0, rho, pr2);
        const double thr_rho = kScalingPieceFloor * max_abs(rho);
        std::size_t counted = 0;
        for (std::size_t i = 0; i < pr1.v.size(); ++i)
            if (std::abs(pr1.v[i]) >= thr_rho) {
                worst_rho = std::max(worst_rho, std::abs(pr1.v[i] / pr2.v[i] - 4.0));
                ++counted;
            }
        least_counted = std::min(least_counted, counted);

        auto j_piece = [&](const PhysicalConstants& pc) {
            RealVectorField p = j_full(orbs, dorbs, A, E, pc, &dA);
            axpy(-1.0, j_free(orbs, A, E, pc), p);
            axpy(-1.0, curl_m_over_q, p);
            return p;
        };
        const RealVectorField pj1 = j_piece(pc1);
        const RealVectorField pj2 = j_piece(pc2);
        const double thr_j = kScalingPieceFloor * max_abs(j_free(orbs, A, E, pc1));
        counted = 0;
        for (int comp = 0; comp < 3; ++comp)
            for (std::size_t i = 0; i < pj1.comp[comp].size(); ++i)
                if (std::abs(pj1.comp[comp][i]) >= thr_j) {
                    worst_j = std::max(worst_j,
                                       std::abs(pj1.comp[comp][i] / pj2.comp[comp][i] - 4.0));
                    ++counted;
                }
        least_counted = std::min(least_counted, counted);

        auto bitwise_quarter = [&](const RealVectorField& a, const RealVectorField& b) {
            for (int comp = 0; comp < 3; ++comp)
                for (std::size_t i = 0; i < a.comp[comp].size(); ++i)
                    worst_bitwise = std::max(
                        worst_bitwise, std::abs(a.comp[comp][i] - 4.0 * b.comp[comp][i]));
        };
        bitwise_quarter(polarization_darwin(orbs, pc1), polarization_darwin(orbs, pc2));
        bitwise_quarter(polarization_spin(orbs, A, pc1), polarization_spin(orbs, A, pc2));
        bitwise_quarter(j_rel_mass_correction(orbs, A, pc1),
                        j_rel_mass_correction(orbs, A, pc2));
    }

    const bool enough = least_counted >= 1000;
    out.push_back({"c_doubling_density_ratio",
                   enough && worst_rho <= kBoundScalingRatio, worst_rho, kBoundScalingRatio,
                   true, "pointwise |ratio - 4|, >= " + std::to_string(least_counted) +
                             " points per sweep"});
    out.push_back({"c_doubling_current_ratio", enough && worst_j <= kBoundScalingRatio,
                   worst_j, kBoundScalingRatio, true, "pointwise |ratio - 4|"});
    out.push_back({"c_doubling_prefactor_bitwise", worst_bitwise == 0.0, worst_bitwise, 0.0,
                   true, "polarizations and mass-correction current quarter exactly"});

    const PhysicalConstants pc;
    const double jr0 = max_abs(j_rel_mass_correction(orbs, RealVectorField(g), pc));
    out.push_back({"mass_correction_current_zero_without_A", jr0 == 0.0, jr0, 0.0, true,
                   "every term carries a power of A"});
}

/// Poisson solver contracts: single-mode eigen-inversion, the erf profile of
/// a Gaussian charge in a padded box, and the Laplacian round trip.
void check_poisson(std::vector<CheckResult>& out, std::ostream* progress) {
    note(progress, "[4/6] Poisson solver contracts");
    const PhysicalConstants pc;
    {
        const double L = 2.0 * M_PI;
        const Grid g({16, 16, 16}, {L, L, L});
        RealScalarField rho0(g);
        const auto& n = g.n();
        std::size_t idx = 0;
        for (int iz = 0; iz < n[2]; ++iz)
            for (int iy = 0; iy < n[1]; ++iy)
                for (int ix = 0; ix < n[0]; ++ix, ++idx)
                    rho0.v[idx] = std::cos(g.coord(0, ix));
        double removed = 0.0;
        const RealScalarField phi = solve_phi0(rho0, pc, false, &removed);
        // -lap phi = (q/eps0) cos(x) with k^2 = 1 gives phi = -4 pi cos(x).
        RealScalarField expected = rho0;
        scale(pc.charge / pc.eps0, expected);
        double err = 0.0;
        for (std::size_t i = 0; i < phi.v.size(); ++i)
            err = std::max(err, std::abs(phi.v[i] - expected.v[i]));
        err = std::max(err / (4.0 * M_PI), std::abs(removed));
        out.push_back({"poisson_cosine_eigenfunction", err <= kBoundCosine, err,
                       kBoundCosine, true, "16^3, box 2 pi"});
    }
    {
        const double L = 40.0, sigma = 1.0;
        const Grid g({80, 80, 80}, {L, L, L});
        const std::array<double, 3> center{20.0, 20.0, 20.0};
        RealScalarField rho = gaussian_scalar(g, center, sigma);
        scale(1.0 / integral(rho), rho);  // unit total charge
        const RealScalarField phi = solve_phi0(rho, pc, true);

        // Free-space erf profile plus the parabola sourced by the uniform
        // neutralizing background; the undetermined constant is fitted as the
        // interior mean.  The leftover is the degree-4 lattice harmonic of
        // the periodic images, ~3e-6 at r = 3.5 in an L = 40 box.
        const double alpha = pc.charge / pc.eps0 / (6.0 * g.volume());
        auto model_no_c = [&](double r) {
            const double coulomb = (r < 1e-9)
                                       ? std::sqrt(2.0 / M_PI)
                                       : std::erf(r / (sigma * std::sqrt(2.0))) / r;
            return pc.charge / (4.0 * M_PI * pc.eps0) * coulomb + alpha * r * r;
        };
        std::vector<double> resid;
        const auto& n = g.n();
        std::size_t idx = 0;
        Accum rsum;
        for (int iz = 0; iz < n[2]; ++iz)
            for (int iy = 0; iy < n[1]; ++iy)
                for (int ix = 0; ix < n[0]; ++ix, ++idx) {
                    const double dx = std::remainder(g.coord(0, ix) - center[0], L);
                    const double dy = std::remainder(g.coord(1, iy) - center[1], L);
                    const double dz = std::remainder(g.coord(2, iz) - center[2], L);
                    const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
                    if (r > kGaussErfInteriorRadius) continue;
                    resid.push_back(phi.v[idx] - model_no_c(r));
                    rsum.add(resid.back());
                }
        const double c_fit = rsum.get() / static_cast<double>(resid.size());
        double worst = 0.0;
        for (double rv : resid) worst = std::max(worst, std::abs(rv - c_fit));
        out.push_back({"poisson_gaussian_erf", worst <= kBoundGaussErf, worst,
                       kBoundGaussErf, true,
                       "80^3 padded box, ball r <= 3.5, " +
                           std::to_string(resid.size()) + " points"});
    }
    {
        const Grid g({24, 24, 24}, {7.0, 7.0, 7.0});
        const RealScalarField f = random_scalar(g, 301);
        const RealScalarField u = solve_poisson(f, true);
        RealScalarField minus_lap = spectral::laplacian(u);
        scale(-1.0, minus_lap);
        RealScalarField centered = f;
        const double fm = mean(f);
        for (double& x : centered.v) x -= fm;
        const double round_trip = rel_l2_diff(minus_lap, centered);
        out.push_back({"poisson_laplacian_round_trip", round_trip <= kBoundRoundTrip,
                       round_trip, kBoundRoundTrip, true, "-lap(solve(f)) vs centered f"});
    }
}

/// Hermiticity of the full operator over random pairs, and the imaginary
/// residue of the energy expectation along a short self-consistent run with
/// the complete second-order sector active.
void check_hermiticity(std::vector<CheckResult>& out, std::ostream* progress) {
    note(progress, "[5/6] hermiticity and the energy imaginary residue");
    const PhysicalConstants pc;
    {
        const Grid g({16, 16, 16}, {8.0, 8.0, 8.0});
        const Potentials pot{random_scalar(g, 511, 0.8), random_vector(g, 517, 0.5),
                             random_vector(g, 523, 0.4), std::nullopt};
        const PreparedPotentials pp = prepare(pot);
        const double defect = hermiticity_defect(g, pp, HamiltonianOptions{}, pc, 50, 901);
        out.push_back({"hermiticity_defect", defect <= kBoundHermiticity, defect,
                       kBoundHermiticity, true, "50 random band-limited pairs"});
    }
    {
        SimulationConfig cfg;
        cfg.grid_n = {16, 16, 16};
        cfg.box = {6.0, 6.0, 6.0};
        cfg.variant = Variant::full_internal;
        cfg.dt = 1e-3;
        cfg.n_steps = 12;
        cfg.scenario.id = "two_orbital_atom";
        cfg.scenario.imag_time_dt = 0.05;
        cfg.scenario.imag_time_steps = 400;
        const Grid g = cfg.make_grid();
        const HamiltonianOptions opt = options_for(cfg);

        SimulationState st = init_scenario(cfg);
        double worst = 0.0;
        for (int s = 0; s <= cfg.n_steps; ++s) {
            const ExternalFields ext = external_fields(cfg, g, st.time);
            const FieldSolution fs = solve_fields(st.orbitals, cfg, ext);
            const PreparedPotentials pp = prepare(fs.total);
            Accum re, im;
            for (const Orbital& o : st.orbitals.orbitals) {
                const cplx e = l2_inner(o.psi, apply_h(o.psi, pp, opt, pc));
                re.add(o.occupation * e.real());
                im.add(o.occupation * e.imag());
            }
            worst = std::max(worst,
                             std::abs(im.get()) / std::max(std::abs(re.get()), 1.0));
            if (s < cfg.n_steps) step(st, cfg);
        }
        out.push_back({"energy_imag_residue", worst <= kBoundEnergyImag, worst,
                       kBoundEnergyImag, true,
                       "13 states of a full-variant self-consistent run"});
    }
}

/// One-step norm drift of the RK4 propagator: halving dt must shrink the
/// defect by at least 2^5 (the structural limit for this operator is ~2^6).
void check_norm_drift(std::vector<CheckResult>& out, std::ostream* progress) {
    note(progress, "[6/6] one-step norm-drift order");
    SimulationConfig cfg;
    cfg.grid_n = {16, 16, 16};
    cfg.box = {8.0, 8.0, 8.0};
    cfg.scenario.id = "gaussian_packet";
    cfg.scenario.sigma = 1.0;
    cfg.scenario.k0 = {1, 0, 0};
    cfg.interactions_off = true;
    cfg.nuclei.resize(1);
    cfg.nuclei[0].position = {4.0, 4.0, 4.0};  // packet crosses the well

    auto drift = [&](double dt) {
        SimulationConfig c = cfg;
        c.dt = dt;
        SimulationState st = init_scenario(c);
        step(st, c);
        return std::abs(norm2(st.orbitals.orbitals[0].psi) - 1.0);
    };
    const double da = drift(4e-2), db = drift(2e-2), dc = drift(1e-2);
    const double r1 = da / db, r2 = db / dc;
    const double measured = std::min(r1, r2);
    out.push_back({"norm_drift_step_order", measured >= kBoundDriftRatio, measured,
                   kBoundDriftRatio, false,
                   "halving ratios " + std::to_string(r1) + ", " + std::to_string(r2) +
                       " (drifts " + std::to_string(da) + " -> " + std::to_string(dc) +
                       ")"});
}

}  // namespace

std::vector<CheckResult> run_check_suite(std::ostream* progress) {
    std::vector<CheckResult> out;
    check_decomposition(out, progress);
    check_continuity(out, progress);
    check_scaling(out, progress);
    check_poisson(out, progress);
    check_hermiticity(out, progress);
    check_norm_drift(out, progress);
    return out;
}

bool report_checks(const std::vector<CheckResult>& results, std::ostream& os) {
    bool all = true;
    for (const CheckResult& r : results) {
        all = all && r.pass;
        os << (r.pass ? "PASS " : "FAIL ") << r.name << "  measured=" << r.measured
           << (r.at_most ? "  bound<=" : "  bound>=") << r.bound;
        if (!r.detail.empty()) os << "  (" << r.detail << ")";
        os << '\n';
    }
    os.flush();
    return all;
}

}  // namespace pmx
