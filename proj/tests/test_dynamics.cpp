#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "pmx/dynamics.hpp"
#include "pmx/errors.hpp"
#include "pmx/hamiltonian.hpp"
#include "pmx/sources.hpp"
#include "pmx/spectral.hpp"
#include "test_util.hpp"

using namespace pmx;

namespace {

// Scenario initialization contracts.
constexpr double kTolInitNorm = 1e-10;       // normalization guarantee of init_scenario
constexpr double kTolPlaneWaveP = 1e-12;     // <p> of an on-grid plane wave is exact
constexpr double kTolPacketMoments = 1e-10;  // packet tails at the box edge are ~1e-16

// Imaginary-time relaxation: the fixed point of the split-step map is its own
// reference; a further relaxation leg must not move the energy.
constexpr double kGroundEnergyCeiling = -0.4;
constexpr double kTolGroundStationary = 1e-8;
// Regression pins: values measured by this binary on the reference build.
// The slack covers libm and reduction-order variation across toolchains.
constexpr double kGroundEnergyPinned = -0.413969194598959;
constexpr double kAtomEnergyPinned = -0.358756121886229;  // bookkept two-orbital total
constexpr double kTolEnergyPin = 1e-7;

// Free plane-wave propagation: RK4 phase error per step is (E dt)^5/120,
// ~1e-22 here, so the budget is pure accumulated rounding.
constexpr double kTolPlaneWaveFidelity = 1e-10;

// Larmor precession against cos(t) carries the RK4 truncation of the
// two-level problem (~1e-11 over one period at dt = 2pi/1000); the contract
// budget is 1e-6.  The simulator and the independent two-level integrator
// discretize the same reduced ODE with the same stepper, so they must agree
// far tighter than either agrees with the exact cosine.
constexpr double kTolLarmorCos = 1e-6;
constexpr double kTolLarmorOracle = 1e-9;
constexpr double kTolSpinNorm = 1e-8;
constexpr double kTolUniformSelfFields = 1e-12;  // FFT floor for a uniform state

// Convergence-order windows, asserted on log2 of dt-halving error ratios.
// Accumulated error at a fixed horizon is fourth order; the one-step defect
// against a resolved reference is fifth order.  The one-step norm defect of
// the RK4 stability function is sixth order (|R(ix)|^2 = 1 - x^6/72 + ...),
// so halving dt shrinks it by ~64; anything >= 4th order honors the contract
// and the measured ratio is printed.
constexpr double kOrderAccumLo = 3.8, kOrderAccumHi = 4.2;
constexpr double kOrderLocalLo = 4.5, kOrderLocalHi = 5.5;
constexpr double kNormDriftRatioLo = 12.0, kNormDriftRatioHi = 80.0;

// Galilean boost: the boosted packet is the rest packet times an on-grid
// plane wave, so the momentum shift is exact and the width histories match
// to the (sixth-order-small) asymmetry of the per-mode RK4 norm defect.
constexpr double kTolBoostMomentum = 1e-12;
constexpr double kTolBoostWidth = 1e-9;

// Interactions-off runs must reproduce a bare RK4 loop written out longhand
// here; both paths do the same arithmetic on the same operator.
constexpr double kTolDecoupled = 1e-12;
constexpr double kTolFrozenEnergyDrift = 1e-9;

// Self-consistent run budgets.  Lagged field freezing adds a one-sided
// energy increment of 1/2 <delta rho, K delta rho> per step (K the static
// interaction kernel), which accumulates to O(dt) over the run; the midpoint
// corrector cancels it, so the two modes carry different budgets and the
// corrected drift must sit strictly below the lagged one.
constexpr double kTolEnergyDrift = 1e-6;        // one-corrector, 1000 steps at dt = 1e-3
constexpr double kTolLaggedEnergyDrift = 1e-4;  // lagged mode, same run (measured 2.4e-5)
constexpr double kTolContinuityRun = 1e-7;      // normalized residual at output steps
constexpr double kTolRunNorm = 1e-8;

// Laser closed forms.
constexpr double kTolLaserDerivative = 1e-12;  // analytic vs analytic
constexpr double kTolLaserFd = 1e-9;           // finite-difference cross-check
constexpr double kTolFluence = 1e-8;           // closed form vs quadrature

std::array<double, 3> momentum_expectation(const OrbitalSet& orbs,
                                           const PhysicalConstants& pc) {
    const RealVectorField j = paramagnetic_current(orbs, pc);
    const double dv = orbs.grid().cell_volume();
    std::array<double, 3> p{};
    for (int c = 0; c < 3; ++c) {
        Accum a;
        for (double v : j.comp[c]) a.add(v);
        p[c] = pc.mass * a.get() * dv;
    }
    return p;
}

std::array<double, 3> spin_expectation(const OrbitalSet& orbs) {
    const RealVectorField s = total_spin(orbs);
    const double dv = orbs.grid().cell_volume();
    std::array<double, 3> out{};
    for (int c = 0; c < 3; ++c) {
        Accum a;
        for (double v : s.comp[c]) a.add(v);
        out[c] = a.get() * dv;
    }
    return out;
}

/// Density-weighted first moment (no wrapping; callers keep packets interior).
std::array<double, 3> position_expectation(const SpinorField& psi) {
    const Grid& g = psi.grid;
    const auto& n = g.n();
    const double dv = g.cell_volume();
    Accum mx, my, mz;
    std::size_t idx = 0;
    for (int iz = 0; iz < n[2]; ++iz)
        for (int iy = 0; iy < n[1]; ++iy)
            for (int ix = 0; ix < n[0]; ++ix, ++idx) {
                const double rho =
                    std::norm(psi.comp[0][idx]) + std::norm(psi.comp[1][idx]);
                mx.add(rho * g.coord(0, ix));
                my.add(rho * g.coord(1, iy));
                mz.add(rho * g.coord(2, iz));
            }
    return {mx.get() * dv, my.get() * dv, mz.get() * dv};
}

/// Second moments about a given (possibly moving) center, minimum-image.
std::array<double, 3> width_squared(const SpinorField& psi,
                                    const std::array<double, 3>& center) {
    const Grid& g = psi.grid;
    const auto& n = g.n();
    const double dv = g.cell_volume();
    Accum wx, wy, wz;
    std::size_t idx = 0;
    for (int iz = 0; iz < n[2]; ++iz)
        for (int iy = 0; iy < n[1]; ++iy)
            for (int ix = 0; ix < n[0]; ++ix, ++idx) {
                const double rho =
                    std::norm(psi.comp[0][idx]) + std::norm(psi.comp[1][idx]);
                const double dx = std::remainder(g.coord(0, ix) - center[0], g.box()[0]);
                const double dy = std::remainder(g.coord(1, iy) - center[1], g.box()[1]);
                const double dz = std::remainder(g.coord(2, iz) - center[2], g.box()[2]);
                wx.add(rho * dx * dx);
                wy.add(rho * dy * dy);
                wz.add(rho * dz * dz);
            }
    return {wx.get() * dv, wy.get() * dv, wz.get() * dv};
}

/// Bare RK4 loop on i hbar dpsi/dt = H psi, written out independently of the
/// integrator inside the library so decoupling tests compare two code paths.
SpinorField bare_rk4(SpinorField psi, const PreparedPotentials& pp,
                     const HamiltonianOptions& opt, const PhysicalConstants& pc,
                     double dt, int n_steps) {
    const cplx mih(0.0, -1.0 / pc.hbar);
    for (int s = 0; s < n_steps; ++s) {
        SpinorField k1(psi.grid), k2(psi.grid), k3(psi.grid), k4(psi.grid);
        axpy(mih, apply_h(psi, pp, opt, pc), k1);
        SpinorField tmp = psi;
        axpy(cplx(0.5 * dt, 0.0), k1, tmp);
        axpy(mih, apply_h(tmp, pp, opt, pc), k2);
        tmp = psi;
        axpy(cplx(0.5 * dt, 0.0), k2, tmp);
        axpy(mih, apply_h(tmp, pp, opt, pc), k3);
        tmp = psi;
        axpy(cplx(dt, 0.0), k3, tmp);
        axpy(mih, apply_h(tmp, pp, opt, pc), k4);
        axpy(cplx(dt / 6.0, 0.0), k1, psi);
        axpy(cplx(dt / 3.0, 0.0), k2, psi);
        axpy(cplx(dt / 3.0, 0.0), k3, psi);
        axpy(cplx(dt / 6.0, 0.0), k4, psi);
    }
    return psi;
}

SimulationConfig base_config() {
    SimulationConfig cfg;
    cfg.variant = Variant::minimal;
    cfg.mode = SelfConsistency::lagged;
    return cfg;
}

}  // namespace

TEST_CASE("scenario initialization meets its stated moments") {
    SimulationConfig cfg = base_config();
    cfg.grid_n = {16, 16, 16};
    cfg.box = {8.0, 8.0, 8.0};

    SUBCASE("plane wave: unit norm and <p> = hbar k") {
        cfg.scenario.id = "plane_wave";
        cfg.scenario.k0 = {1, 0, 2};
        SimulationState st = init_scenario(cfg);
        REQUIRE(st.orbitals.size() == 1);
        CHECK(std::abs(norm2(st.orbitals.orbitals[0].psi) - 1.0) <= kTolInitNorm);
        const auto p = momentum_expectation(st.orbitals, cfg.constants);
        const double kx = 2.0 * M_PI / cfg.box[0];
        MESSAGE("plane-wave <p> = (" << p[0] << ", " << p[1] << ", " << p[2] << ")");
        CHECK(std::abs(p[0] - cfg.constants.hbar * kx) <= kTolPlaneWaveP);
        CHECK(std::abs(p[1]) <= kTolPlaneWaveP);
        CHECK(std::abs(p[2] - cfg.constants.hbar * 2.0 * kx) <= kTolPlaneWaveP);
    }

    SUBCASE("gaussian packet: centered, at rest, normalized") {
        cfg.grid_n = {24, 24, 24};
        cfg.box = {12.0, 12.0, 12.0};
        cfg.scenario.id = "gaussian_packet";
        cfg.scenario.sigma = 1.0;
        cfg.scenario.k0 = {0, 0, 0};
        SimulationState st = init_scenario(cfg);
        const SpinorField& psi = st.orbitals.orbitals[0].psi;
        CHECK(std::abs(norm2(psi) - 1.0) <= kTolInitNorm);
        const auto r = position_expectation(psi);
        const auto p = momentum_expectation(st.orbitals, cfg.constants);
        for (int c = 0; c < 3; ++c) {
            CHECK(std::abs(r[c] - 0.5 * cfg.box[c]) <= kTolPacketMoments);
            CHECK(std::abs(p[c]) <= kTolPlaneWaveP);
        }
    }

    SUBCASE("config errors") {
        cfg.scenario.id = "frobnicate";
        CHECK_THROWS_AS(init_scenario(cfg), ConfigError);
        cfg.scenario.id = "gaussian_packet";
        cfg.scenario.sigma = 0.5;  // under two cells of h = 0.5
        CHECK_THROWS_AS(init_scenario(cfg), ConfigError);
        cfg.scenario.sigma = 1.0;
        cfg.dt = 0.0;
        CHECK_THROWS_AS(init_scenario(cfg), ConfigError);
    }
}

TEST_CASE("imaginary-time relaxation finds a bound, stationary ground state") {
    const Grid g({24, 24, 24}, {12.0, 12.0, 12.0});
    const PhysicalConstants pc;
    std::vector<Nucleus> nuclei(1);
    nuclei[0].position = {6.0, 6.0, 6.0};
    const RealScalarField phi_ext = nuclear_potential(nuclei, g, pc);

    double e1 = 0.0;
    const SpinorField ground = imaginary_time_ground_state(phi_ext, pc, 0.05, 1500,
                                                           nullptr, &e1);
    {
        std::ostringstream os;
        os.precision(15);
        os << "soft-core ground-state energy = " << e1;
        MESSAGE(os.str());
    }
    CHECK(std::abs(norm2(ground) - 1.0) <= kTolInitNorm);
    CHECK(e1 < kGroundEnergyCeiling);
    CHECK(std::abs(e1 - kGroundEnergyPinned) <= kTolEnergyPin);

    double e2 = 0.0;
    imaginary_time_ground_state(phi_ext, pc, 0.05, 200, &ground, &e2);
    MESSAGE("energy change under further relaxation = " << std::abs(e2 - e1));
    CHECK(std::abs(e2 - e1) <= kTolGroundStationary);

    CHECK_THROWS_AS(imaginary_time_ground_state(phi_ext, pc, 0.0, 10), ConfigError);
}

TEST_CASE("free plane wave accumulates the analytic phase") {
    SimulationConfig cfg = base_config();
    cfg.grid_n = {16, 16, 16};
    cfg.box = {2.0 * M_PI, 2.0 * M_PI, 2.0 * M_PI};
    cfg.scenario.id = "plane_wave";
    cfg.scenario.k0 = {1, 0, 0};  // |k| = 1, E = hbar^2 k^2 / 2m = 0.5
    cfg.interactions_off = true;
    cfg.dt = 1e-3;

    SimulationState st = init_scenario(cfg);
    const SpinorField initial = st.orbitals.orbitals[0].psi;
    for (int s = 0; s < 100; ++s) step(st, cfg);

    const double energy = 0.5;
    const cplx phase = std::polar(1.0, -energy * st.time / cfg.constants.hbar);
    SpinorField exact = initial;
    for (auto& comp : exact.comp)
        for (auto& v : comp) v *= phase;

    const double fidelity = std::abs(l2_inner(exact, st.orbitals.orbitals[0].psi));
    MESSAGE("plane-wave fidelity defect = " << 1.0 - fidelity
            << ", state defect = " << testutil::max_diff(st.orbitals.orbitals[0].psi, exact));
    CHECK(1.0 - fidelity <= kTolPlaneWaveFidelity);
    CHECK(testutil::max_diff(st.orbitals.orbitals[0].psi, exact) <= kTolPlaneWaveFidelity);
}

TEST_CASE("Larmor precession tracks cos(t) and the two-level oracle") {
    SimulationConfig cfg = base_config();
    cfg.grid_n = {8, 8, 8};
    cfg.box = {8.0, 8.0, 8.0};
    cfg.scenario.id = "uniform_spin_sample";
    cfg.scenario.spin = {1.0, 0.0, 0.0};
    cfg.scenario.b_field = {0.0, 0.0, 1.0};
    const int n_steps = 1000;
    cfg.dt = 2.0 * M_PI / n_steps;

    SimulationState st = init_scenario(cfg);
    {
        // uniform density and spin: the self-consistent fields cancel to the
        // FFT floor even with interactions on
        const ExternalFields ext = external_fields(cfg, st.orbitals.grid(), 0.0);
        const DiagnosticsSample d0 = measure_diagnostics(st, cfg, ext);
        CHECK(std::abs(d0.spin[0] - 1.0) <= 1e-12);
        CHECK(std::abs(d0.spin[1]) <= 1e-12);
        CHECK(std::abs(d0.spin[2]) <= 1e-12);
        CHECK(max_abs(st.em.phi0) <= kTolUniformSelfFields);
        CHECK(max_abs(st.em.A2) <= kTolUniformSelfFields);
    }

    // q = -1, B = +z: H_zeeman = (hbar/2) sigma_z, so <sigma_x>(t) = cos(t)
    const std::array<std::array<cplx, 2>, 2> h_two_level{
        std::array<cplx, 2>{cplx(0.5, 0.0), cplx(0.0, 0.0)},
        std::array<cplx, 2>{cplx(0.0, 0.0), cplx(-0.5, 0.0)}};
    const std::array<cplx, 2> chi0{cplx(1.0 / std::sqrt(2.0), 0.0),
                                   cplx(1.0 / std::sqrt(2.0), 0.0)};

    double worst_cos = 0.0, worst_len = 0.0, worst_oracle = 0.0;
    for (int s = 1; s <= n_steps; ++s) {
        step(st, cfg);
        const auto sp = spin_expectation(st.orbitals);
        worst_cos = std::max(worst_cos, std::abs(sp[0] - std::cos(st.time)));
        const double len = std::sqrt(sp[0] * sp[0] + sp[1] * sp[1] + sp[2] * sp[2]);
        worst_len = std::max(worst_len, std::abs(len - 1.0));
        if (s % 100 == 0) {
            const auto chi = oracle::two_level_rk4(h_two_level, chi0,
                                                   cfg.constants.hbar, st.time, s);
            const double sx_oracle = 2.0 * std::real(std::conj(chi[0]) * chi[1]);
            worst_oracle = std::max(worst_oracle, std::abs(sp[0] - sx_oracle));
        }
    }
    MESSAGE("Larmor: max |<sx> - cos t| = " << worst_cos
            << ", max | |<sigma>| - 1 | = " << worst_len
            << ", max defect vs two-level RK4 = " << worst_oracle);
    CHECK(worst_cos <= kTolLarmorCos);
    CHECK(worst_len <= kTolSpinNorm);
    CHECK(worst_oracle <= kTolLarmorOracle);
}

TEST_CASE("RK4 convergence orders: accumulated, local, and norm drift") {
    SimulationConfig cfg = base_config();
    cfg.grid_n = {16, 16, 16};
    cfg.box = {8.0, 8.0, 8.0};
    cfg.scenario.id = "gaussian_packet";
    cfg.scenario.sigma = 1.0;
    cfg.scenario.k0 = {1, 0, 0};
    cfg.interactions_off = true;
    cfg.nuclei.resize(1);
    cfg.nuclei[0].position = {4.0, 4.0, 4.0};  // packet crosses the well

    auto evolve = [&](double dt, int n) {
        SimulationConfig c = cfg;
        c.dt = dt;
        SimulationState st = init_scenario(c);
        for (int s = 0; s < n; ++s) step(st, c);
        return st.orbitals.orbitals[0].psi;
    };
    auto l2_of_diff = [](const SpinorField& a, const SpinorField& b) {
        SpinorField d = a;
        axpy(cplx(-1.0, 0.0), b, d);
        return std::sqrt(norm2(d));
    };

    SUBCASE("accumulated error at a fixed horizon is fourth order") {
        const double t_final = 0.1;
        const SpinorField ref = evolve(1.25e-4, 800);
        const double e4 = l2_of_diff(evolve(4e-3, 25), ref);
        const double e2 = l2_of_diff(evolve(2e-3, 50), ref);
        const double e1 = l2_of_diff(evolve(1e-3, 100), ref);
        const double o21 = std::log2(e4 / e2), o10 = std::log2(e2 / e1);
        MESSAGE("accumulated errors " << e4 << " / " << e2 << " / " << e1
                << " at t = " << t_final << ", measured orders " << o21 << ", " << o10);
        CHECK(o21 >= kOrderAccumLo);
        CHECK(o21 <= kOrderAccumHi);
        CHECK(o10 >= kOrderAccumLo);
        CHECK(o10 <= kOrderAccumHi);
    }

    SUBCASE("one-step error is fifth order") {
        auto local_err = [&](double dt) {
            const SpinorField one = evolve(dt, 1);
            const SpinorField ref = evolve(dt / 16.0, 16);
            return l2_of_diff(one, ref);
        };
        const double ea = local_err(2e-2), eb = local_err(1e-2);
        const double order = std::log2(ea / eb);
        MESSAGE("one-step errors " << ea << " / " << eb << ", measured order " << order);
        CHECK(order >= kOrderLocalLo);
        CHECK(order <= kOrderLocalHi);
    }

    SUBCASE("one-step norm drift shrinks by at least the fourth-order factor") {
        auto drift = [&](double dt) { return std::abs(norm2(evolve(dt, 1)) - 1.0); };
        const double da = drift(4e-2), db = drift(2e-2), dc = drift(1e-2);
        MESSAGE("one-step norm drifts " << da << " / " << db << " / " << dc
                << ", halving ratios " << da / db << ", " << db / dc);
        CHECK(da / db >= kNormDriftRatioLo);
        CHECK(da / db <= kNormDriftRatioHi);
        CHECK(db / dc >= kNormDriftRatioLo);
        CHECK(db / dc <= kNormDriftRatioHi);
    }
}

TEST_CASE("an on-grid boost shifts momentum exactly and leaves widths alone") {
    SimulationConfig cfg = base_config();
    // Wide box: the min-image second moment is evaluated about a moving center,
    // so the remainder() cut plane sweeps through the tail. Edge density must sit
    // at the double floor or the sweep shows up as a fake width change.
    cfg.grid_n = {24, 24, 24};
    cfg.box = {12.0, 12.0, 12.0};
    cfg.scenario.id = "gaussian_packet";
    cfg.scenario.sigma = 1.2;
    cfg.interactions_off = true;
    cfg.dt = 5e-4;
    const int n_steps = 200;
    const double t_final = n_steps * cfg.dt;
    const double hk = cfg.constants.hbar * 2.0 * M_PI / cfg.box[0];

    auto run = [&](std::array<int, 3> k0) {
        SimulationConfig c = cfg;
        c.scenario.k0 = k0;
        SimulationState st = init_scenario(c);
        for (int s = 0; s < n_steps; ++s) step(st, c);
        return st;
    };
    SimulationState rest = run({0, 0, 0});
    SimulationState boosted = run({1, 0, 0});

    const auto p_rest = momentum_expectation(rest.orbitals, cfg.constants);
    const auto p_boost = momentum_expectation(boosted.orbitals, cfg.constants);
    MESSAGE("boost momenta: rest px = " << p_rest[0] << ", boosted px = " << p_boost[0]
            << ", hbar k = " << hk);
    CHECK(std::abs(p_boost[0] - p_rest[0] - hk) <= kTolBoostMomentum);
    CHECK(std::abs(p_rest[0]) <= kTolBoostMomentum);
    CHECK(std::abs(p_boost[1]) <= kTolBoostMomentum);
    CHECK(std::abs(p_boost[2]) <= kTolBoostMomentum);

    const std::array<double, 3> c_rest{6.0, 6.0, 6.0};
    const std::array<double, 3> c_boost{6.0 + hk / cfg.constants.mass * t_final, 6.0, 6.0};
    const auto w_rest = width_squared(rest.orbitals.orbitals[0].psi, c_rest);
    const auto w_boost = width_squared(boosted.orbitals.orbitals[0].psi, c_boost);
    for (int c = 0; c < 3; ++c) {
        MESSAGE("axis " << c << ": rest width^2 = " << w_rest[c]
                << ", boosted width^2 = " << w_boost[c]);
        CHECK(std::abs(w_boost[c] - w_rest[c]) <= kTolBoostWidth);
    }
}

TEST_CASE("interactions off reduces the run to bare propagation") {
    SimulationConfig cfg = base_config();
    cfg.grid_n = {16, 16, 16};
    cfg.box = {8.0, 8.0, 8.0};
    cfg.scenario.id = "gaussian_packet";
    cfg.scenario.sigma = 1.0;
    cfg.scenario.k0 = {0, 0, 1};
    cfg.interactions_off = true;
    cfg.nuclei.resize(1);
    cfg.nuclei[0].position = {4.0, 4.0, 4.0};
    cfg.dt = 1e-3;
    cfg.n_steps = 50;
    cfg.output_cadence = 10;

    const SimulationState run = run_selfconsistent(cfg);

    const Grid g = cfg.make_grid();
    Potentials pot = Potentials::zero(g);
    pot.phi = nuclear_potential(cfg.nuclei, g, cfg.constants);
    const PreparedPotentials pp = prepare(pot);
    const HamiltonianOptions opt = options_for(cfg);
    const SpinorField initial = init_scenario(cfg).orbitals.orbitals[0].psi;
    const SpinorField bare =
        bare_rk4(initial, pp, opt, cfg.constants, cfg.dt, cfg.n_steps);

    MESSAGE("decoupling defect = " << testutil::max_diff(run.orbitals.orbitals[0].psi, bare));
    CHECK(testutil::max_diff(run.orbitals.orbitals[0].psi, bare) <= kTolDecoupled);

    REQUIRE(!run.diagnostics.empty());
    const double e0 = run.diagnostics.front().energy_total;
    for (const DiagnosticsSample& d : run.diagnostics) {
        CHECK(std::abs(d.energy_total - e0) <= kTolFrozenEnergyDrift);
        CHECK(d.max_field_amplitude == 0.0);  // self-consistent sector untouched
        CHECK(std::abs(d.norm_total - 1.0) <= kTolRunNorm);
    }
}

TEST_CASE("two-orbital self-consistent run conserves its bookkept energy") {
    SimulationConfig cfg = base_config();
    cfg.grid_n = {20, 20, 20};
    cfg.box = {10.0, 10.0, 10.0};
    cfg.scenario.id = "two_orbital_atom";
    cfg.scenario.n_orbitals = 2;
    cfg.dt = 1e-3;
    cfg.n_steps = 1000;
    cfg.output_cadence = 50;

    auto drift_of = [](const SimulationState& st) {
        const double e0 = st.diagnostics.front().energy_total;
        double worst = 0.0;
        for (const DiagnosticsSample& d : st.diagnostics)
            worst = std::max(worst, std::abs(d.energy_total - e0) / std::abs(e0));
        return worst;
    };

    cfg.mode = SelfConsistency::lagged;
    const SimulationState lagged = run_selfconsistent(cfg);
    cfg.mode = SelfConsistency::one_corrector;
    const SimulationState corrected = run_selfconsistent(cfg);

    const double drift_lagged = drift_of(lagged);
    const double drift_corr = drift_of(corrected);
    {
        std::ostringstream os;
        os.precision(15);
        os << "energy drift over " << cfg.n_steps << " steps: lagged = " << drift_lagged
           << ", one-corrector = " << drift_corr
           << " (E0 = " << lagged.diagnostics.front().energy_total << ")";
        MESSAGE(os.str());
    }

    CHECK(drift_corr <= kTolEnergyDrift);
    CHECK(drift_lagged <= kTolLaggedEnergyDrift);
    CHECK(drift_corr < drift_lagged);  // the corrector removes the field lag
    CHECK(std::abs(lagged.diagnostics.front().energy_total - kAtomEnergyPinned) <=
          kTolEnergyPin);

    // The normalized continuity contract is not asserted on this run. The
    // soft-core orbital's spectrum decays on the core scale (a = 0.3 against
    // h = 0.5), so quadratic products in the paramagnetic flux alias at the
    // percent level; on top of that the spin-paired ground state starts
    // current-free, making the flux normalization degenerate near t = 0.
    // The resolved-packet run below owns that contract; here the series is
    // only required to stay finite while norm and energy hold.
    double worst_continuity = 0.0;
    for (const DiagnosticsSample& d : lagged.diagnostics) {
        worst_continuity = std::max(worst_continuity, d.continuity_residual);
        CHECK(std::isfinite(d.continuity_residual));
        CHECK(std::abs(d.norm_total - 2.0) <= kTolRunNorm);
        CHECK(std::isfinite(d.gauge_residual));
    }
    MESSAGE("worst continuity residual along the lagged run = " << worst_continuity);
}

TEST_CASE("resolved interacting packet keeps the continuity ledger clean") {
    // Continuity of the discrete flow is exact only up to aliasing of the
    // quadratic flux products, which scales with the state's band-edge mass.
    // This run keeps the packet spectrum far inside the half band (sigma = 1.5
    // on h = 0.375), where the measured residual plateaus near 2e-8.
    SimulationConfig cfg = base_config();
    cfg.grid_n = {20, 20, 20};
    cfg.box = {7.5, 7.5, 7.5};
    cfg.scenario.id = "gaussian_packet";
    cfg.scenario.sigma = 1.5;
    cfg.scenario.k0 = {1, 0, 0};
    cfg.variant = Variant::minimal;
    cfg.mode = SelfConsistency::lagged;
    cfg.dt = 1e-3;
    cfg.n_steps = 1000;
    cfg.output_cadence = 25;

    const SimulationState st = run_selfconsistent(cfg);
    REQUIRE(st.diagnostics.size() == 41);

    double worst_cont = 0.0, worst_norm = 0.0;
    for (const DiagnosticsSample& d : st.diagnostics) {
        worst_cont = std::max(worst_cont, d.continuity_residual);
        worst_norm = std::max(worst_norm, std::abs(d.norm_total - 1.0));
        CHECK(d.continuity_residual <= kTolContinuityRun);
        CHECK(std::abs(d.norm_total - 1.0) <= kTolRunNorm);
    }
    const double e0 = st.diagnostics.front().energy_total;
    double worst_drift = 0.0;
    for (const DiagnosticsSample& d : st.diagnostics)
        worst_drift = std::max(worst_drift, std::abs(d.energy_total - e0) / std::abs(e0));
    MESSAGE("resolved packet: worst continuity = " << worst_cont
            << ", worst norm defect = " << worst_norm
            << ", lagged energy drift = " << worst_drift);
    CHECK(worst_drift <= kTolLaggedEnergyDrift);
}

TEST_CASE("laser closed forms: window, derivative, fluence") {
    LaserConfig laser;
    laser.amplitude = 0.08;
    laser.omega = 1.2;
    laser.duration = 20.0;
    laser.polarization = {0.0, 0.0, 1.0};

    SUBCASE("pulse vanishes outside its window") {
        for (double t : {-1.0, 0.0, 20.0, 21.5}) {
            const auto a = laser_A(laser, t);
            const auto da = laser_dA_dt(laser, t);
            for (int c = 0; c < 3; ++c) {
                CHECK(a[c] == 0.0);
                CHECK(da[c] == 0.0);
            }
        }
    }

    SUBCASE("analytic derivative matches an independently written product rule") {
        double worst_closed = 0.0, worst_fd = 0.0;
        for (int i = 1; i < 100; ++i) {
            const double t = laser.duration * i / 100.0;
            const double envelope = std::sin(M_PI * t / laser.duration);
            const double expected =
                laser.amplitude *
                ((M_PI / laser.duration) * std::sin(2.0 * M_PI * t / laser.duration) *
                     std::cos(laser.omega * t) -
                 laser.omega * envelope * envelope * std::sin(laser.omega * t));
            const auto da = laser_dA_dt(laser, t);
            worst_closed = std::max(worst_closed, std::abs(da[2] - expected));
            const double h = 1e-5;
            const double fd = (laser_A(laser, t + h)[2] - laser_A(laser, t - h)[2]) /
                              (2.0 * h);
            worst_fd = std::max(worst_fd, std::abs(da[2] - fd));
            CHECK(da[0] == 0.0);
            CHECK(da[1] == 0.0);
        }
        MESSAGE("derivative defects: closed form " << worst_closed << ", fd " << worst_fd);
        CHECK(worst_closed <= kTolLaserDerivative);
        CHECK(worst_fd <= kTolLaserFd);
    }

    SUBCASE("fluence closed form agrees with quadrature of E^2") {
        // Simpson rule on E = -dA/dt sampled from the implementation itself
        const int n = 40000;  // even
        const double h = laser.duration / n;
        Accum s;
        for (int i = 0; i <= n; ++i) {
            const double t = i * h;
            const auto da = laser_dA_dt(laser, t);
            const double e2 = da[0] * da[0] + da[1] * da[1] + da[2] * da[2];
            const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
            s.add(w * e2);
        }
        const double quad = s.get() * h / 3.0;
        const double closed = laser_fluence(laser);
        MESSAGE("fluence: closed form " << closed << ", quadrature " << quad);
        CHECK(std::abs(closed - quad) <= kTolFluence * std::abs(quad));
    }
}

TEST_CASE("instability aborts with the step index named") {
    SimulationConfig cfg = base_config();
    cfg.grid_n = {16, 16, 16};
    cfg.box = {8.0, 8.0, 8.0};
    cfg.scenario.id = "gaussian_packet";
    cfg.scenario.sigma = 1.0;
    cfg.interactions_off = true;
    cfg.dt = 10.0;  // far beyond the RK4 stability reach

    std::ostringstream captured;
    std::streambuf* old = std::cerr.rdbuf(captured.rdbuf());
    SimulationState st = init_scenario(cfg);
    std::cerr.rdbuf(old);
    CHECK(captured.str().find("stability") != std::string::npos);

    bool threw = false;
    try {
        for (int s = 0; s < 200; ++s) step(st, cfg);
    } catch (const NumericsError& e) {
        threw = true;
        MESSAGE("abort message: " << std::string(e.what()));
        CHECK(std::string(e.what()).find("step") != std::string::npos);
    }
    CHECK(threw);
}

TEST_CASE("full variants populate the second-order sector") {
    SimulationConfig cfg = base_config();
    // h = 0.375 keeps the packet resolved so the continuity rows stay at the
    // aliasing floor rather than the h = 0.5 percent-of-flux level.
    cfg.grid_n = {16, 16, 16};
    cfg.box = {6.0, 6.0, 6.0};
    cfg.scenario.id = "gaussian_packet";
    cfg.scenario.sigma = 1.2;
    cfg.scenario.k0 = {1, 1, 0};
    cfg.scenario.spin = {1.0, 0.0, 1.0};
    cfg.variant = Variant::full_internal;
    cfg.dt = 1e-4;
    cfg.n_steps = 10;
    cfg.output_cadence = 5;

    const SimulationState st = run_selfconsistent(cfg);
    CHECK(l2_norm(st.em.phi2) > 0.0);
    CHECK(l2_norm(st.em.E2) > 0.0);
    for (const DiagnosticsSample& d : st.diagnostics) {
        CHECK(std::isfinite(d.energy_total));
        CHECK(std::abs(d.norm_total - 1.0) <= kTolRunNorm);
        CHECK(d.continuity_residual <= 1e-6);  // smoke bound for the full model
    }

    SUBCASE("neglect flag drops only the self dA2/dt") {
        SimulationState seed = init_scenario(cfg);
        for (int s = 0; s < 5; ++s) step(seed, cfg);
        const ExternalFields ext = external_fields(cfg, seed.orbitals.grid(), seed.time);
        SimulationConfig keep = cfg, drop = cfg;
        drop.neglect_self_A_in_corrections = true;
        const FieldSolution with_da = solve_fields(seed.orbitals, keep, ext);
        const FieldSolution without_da = solve_fields(seed.orbitals, drop, ext);
        CHECK(testutil::max_diff(with_da.total.phi, without_da.total.phi) == 0.0);
        CHECK(testutil::max_diff(with_da.total.A, without_da.total.A) == 0.0);
        CHECK(l2_norm(without_da.self_part.dA_dt) == 0.0);
        CHECK(l2_norm(with_da.self_part.dA_dt) > 0.0);
    }

    SUBCASE("external laser enters the totals uniformly") {
        SimulationConfig ext_cfg = cfg;
        ext_cfg.variant = Variant::with_external;
        ext_cfg.laser.amplitude = 0.05;
        ext_cfg.laser.omega = 1.0;
        ext_cfg.laser.duration = 0.05;
        const Grid g = ext_cfg.make_grid();
        const double t = 0.01;
        const ExternalFields ext = external_fields(ext_cfg, g, t);
        const auto a = laser_A(ext_cfg.laser, t);
        const auto da = laser_dA_dt(ext_cfg.laser, t);
        auto worst_off = [](const RealVectorField& f, int c, double value) {
            double worst = 0.0;
            for (double v : f.comp[c]) worst = std::max(worst, std::abs(v - value));
            return worst;
        };
        for (int c = 0; c < 3; ++c) {
            CHECK(worst_off(ext.A, c, a[c]) <= 1e-15);
            CHECK(worst_off(ext.dA_dt, c, da[c]) <= 1e-15);
        }
        SimulationState run = init_scenario(ext_cfg);
        for (int s = 0; s < 5; ++s) step(run, ext_cfg);
        CHECK(std::abs(norm2(run.orbitals.orbitals[0].psi) - 1.0) <= kTolRunNorm);
    }
}
