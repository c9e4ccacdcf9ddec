#pragma once

#include <array>
#include <functional>
#include <string>
#include <vector>

#include "pmx/constants.hpp"
#include "pmx/field.hpp"
#include "pmx/hamiltonian.hpp"
#include "pmx/maxwell.hpp"
#include "pmx/sources.hpp"

namespace pmx {

/// Model variants of the coupled orbital-field system:
///  - full_internal: full corrected Hamiltonian, fields purely internal
///    (phi0 + phi2, A2 with its chain time derivative).
///  - with_external: full_internal plus prescribed external fields (dipole
///    laser, static soft-core nuclei).
///  - minimal: reduced local Hamiltonian; fields are phi0 and A2 only.
enum class Variant { full_internal, with_external, minimal };

/// How the self-consistent fields are held during a time step: lagged freezes
/// them at the step start; one_corrector recomputes them once from an Euler
/// half-step predictor and runs the step with midpoint fields.
enum class SelfConsistency { lagged, one_corrector };

/// Dipole-approximation laser pulse: A(t) = A0 sin^2(pi t / tau) cos(omega t)
/// along the polarization direction for t in [0, tau], zero outside; spatially
/// uniform, so B_ext = 0 and E_ext = -dA/dt exactly.
struct LaserConfig {
    double amplitude = 0.0;
    double omega = 0.0;
    double duration = 0.0;
    std::array<double, 3> polarization{1.0, 0.0, 0.0};
};

struct Nucleus {
    std::array<double, 3> position{0.0, 0.0, 0.0};
    double charge = 1.0;
    double softening = 0.3;
};

struct ScenarioConfig {
    /// One of: gaussian_packet, plane_wave, two_orbital_atom,
    /// uniform_spin_sample.
    std::string id = "gaussian_packet";
    double sigma = 1.0;                            ///< packet width
    std::array<int, 3> k0{0, 0, 0};                ///< carrier / plane-wave mode
    std::array<double, 3> spin{0.0, 0.0, 1.0};     ///< spinor direction
    std::array<double, 3> b_field{0.0, 0.0, 0.0};  ///< uniform direct B override
    int n_orbitals = 2;                            ///< two_orbital_atom only
    double imag_time_dt = 0.05;
    int imag_time_steps = 1500;
};

struct SimulationConfig {
    std::array<int, 3> grid_n{16, 16, 16};
    std::array<double, 3> box{8.0, 8.0, 8.0};
    PhysicalConstants constants;
    Variant variant = Variant::minimal;
    double dt = 1e-3;
    int n_steps = 100;
    SelfConsistency mode = SelfConsistency::lagged;
    ScenarioConfig scenario;
    LaserConfig laser;
    std::vector<Nucleus> nuclei;
    int output_cadence = 10;
    std::string output_dir = "out";
    /// eps0 -> infinity switch: self-consistent fields are identically zero
    /// and the run must reduce to bare single-orbital propagation.
    bool interactions_off = false;
    /// Drop the self-consistent dA2/dt from the second-order Hamiltonian
    /// terms (it enters them one order beyond the working accuracy); external
    /// field derivatives are always kept.  Off by default: the full operator
    /// is the reference behavior.
    bool neglect_self_A_in_corrections = false;

    Grid make_grid() const { return Grid(grid_n, box); }
};

/// One diagnostics record, sampled at the output cadence.
struct DiagnosticsSample {
    int step = 0;
    double time = 0.0;
    double norm_total = 0.0;
    double energy_total = 0.0;
    double continuity_residual = 0.0;     ///< normalized, from the model Hamiltonian
    double continuity_residual_l2 = 0.0;  ///< absolute L2 of the same residual field
    double gauge_residual = 0.0;          ///< normalized Lorentz-gauge defect
    double poisson_subtracted_mean = 0.0;
    std::array<double, 3> spin{0.0, 0.0, 0.0};  ///< box-integrated spin density
    double max_field_amplitude = 0.0;  ///< max over |E0|, |E2|, |B2| caches
};

struct SimulationState {
    double time = 0.0;
    int step_index = 0;
    OrbitalSet orbitals;
    EMState em;
    /// Cached bundle and the times the caches were computed at (-1 = never).
    SourceBundle sources;
    double sources_time = -1.0;
    double em_time = -1.0;
    double gauge_residual = 0.0;
    double phi0_subtracted_mean = 0.0;
    std::vector<DiagnosticsSample> diagnostics;
};

/// Prescribed external fields at time t: static soft-core nuclear potential
/// plus the spatially uniform laser vector potential and its exact analytic
/// time derivative (never finite-differenced).
struct ExternalFields {
    RealScalarField phi;
    RealVectorField A;
    RealVectorField dA_dt;
};

/// Static soft-core nuclear potential, minimum-image distances on the torus:
/// phi(r) = sum_i Z_i |q| / (4 pi eps0 sqrt(|r - R_i|^2 + a_i^2)).
RealScalarField nuclear_potential(const std::vector<Nucleus>& nuclei, const Grid& g,
                                  const PhysicalConstants& pc);

/// Uniform laser vector potential amplitude and its time derivative at t.
std::array<double, 3> laser_A(const LaserConfig& laser, double t);
std::array<double, 3> laser_dA_dt(const LaserConfig& laser, double t);

/// Closed-form pulse fluence integral(E^2 dt) over the sin^2 envelope,
/// E = -dA/dt.  Not valid exactly at the removable resonance
/// omega = pi / duration (generic parameters assumed).
double laser_fluence(const LaserConfig& laser);

ExternalFields external_fields(const SimulationConfig& cfg, const Grid& g, double t);

/// Lowest eigenstate of kinetic + q phi_ext by split-step imaginary-time
/// relaxation with per-step renormalization (the relativistic correction
/// terms are diagnostics-level here and are not part of the relaxation
/// operator).  Starts from a symmetric Gaussian unless an initial guess is
/// supplied; reports the final kinetic + potential energy on request.
SpinorField imaginary_time_ground_state(const RealScalarField& phi_ext,
                                        const PhysicalConstants& pc, double dtau,
                                        int n_steps, const SpinorField* initial = nullptr,
                                        double* energy_out = nullptr);

/// Scenario initialization.  Orbitals come out normalized to 1 within 1e-10.
/// Throws ConfigError for unknown ids, non-positive dt, or a packet width
/// under two cells.  two_orbital_atom synthesizes a single Z = 1, a = 0.3
/// nucleus at the box center when cfg.nuclei is empty.
SimulationState init_scenario(const SimulationConfig& cfg);

/// Field solve for a given orbital configuration: rho0 -> phi0 (always with
/// the neutralizing background); A2 from j0 + j2_free with one stateless
/// fixed-point pass for the A2-dependent part of j2_free; the full_internal
/// and with_external variants add phi2 (second-order charge + retardation
/// chain) and the dA2/dt chain.  Returns the total potentials entering the
/// Hamiltonian, the self-consistent part alone (for energy bookkeeping), and
/// the updated EM state.
struct FieldSolution {
    EMState em;
    Potentials total;
    Potentials self_part;
    double gauge_normalized = 0.0;
    double phi0_subtracted_mean = 0.0;
};
FieldSolution solve_fields(const OrbitalSet& orbs, const SimulationConfig& cfg,
                           const ExternalFields& ext);

/// Hamiltonian options implied by the config variant.
HamiltonianOptions options_for(const SimulationConfig& cfg);

/// Total energy diagnostic: <H(total potentials)> minus half the linear
/// coupling energy of the self-consistent potentials, which removes the
/// double counting of the pair interaction.  Exact bookkeeping for the
/// minimal model (whose Hamiltonian is linear in the potentials); for the
/// full variants the diamagnetic A^2 term makes this a monitored quantity
/// rather than an exactly conserved one.
double total_energy(const OrbitalSet& orbs, const Potentials& total,
                    const Potentials& self_part, const HamiltonianOptions& opt,
                    const PhysicalConstants& pc);

/// One classical RK4 step on every orbital with potentials frozen per the
/// self-consistency mode.  No renormalization is applied; norm drift is a
/// diagnostic.  Throws NumericsError naming the step index when amplitudes
/// stop being finite.  phi_ext_cache avoids rebuilding the static nuclear
/// potential each step; pass nullptr to let the step build it.
void step(SimulationState& st, const SimulationConfig& cfg,
          const RealScalarField* phi_ext_cache = nullptr);

/// Full run: init, per-step field updates and RK4, diagnostics rows at the
/// output cadence (step 0 and the final step always included).  The observer,
/// when set, fires once per recorded row with the state frozen at that row;
/// serialization hooks snapshot and CSV writes there.
using RunObserver = std::function<void(const SimulationState&, const DiagnosticsSample&)>;
SimulationState run_selfconsistent(const SimulationConfig& cfg,
                                   const RunObserver& observer = {});

/// Diagnostics snapshot of the current state (recomputes fields and the
/// cached source bundle at the state's time).
DiagnosticsSample measure_diagnostics(SimulationState& st, const SimulationConfig& cfg,
                                      const ExternalFields& ext);

}  // namespace pmx
