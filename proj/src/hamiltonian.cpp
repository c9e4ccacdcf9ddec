#include "pmx/hamiltonian.hpp"

#include <cmath>

#include "pmx/errors.hpp"
#include "pmx/random_fields.hpp"
#include "pmx/spectral.hpp"
#include "pmx/spinor.hpp"

namespace pmx {
namespace {

bool any_nonzero(const RealVectorField& f) {
    for (const auto& c : f.comp)
        for (double x : c)
            if (x != 0.0) return true;
    return false;
}

/// out += coeff * s(r) * psi, with a real scalar coefficient field.
void add_scalar_times(SpinorField& out, const cplx& coeff, const RealScalarField& s,
                      const SpinorField& psi) {
    const std::size_t n = out.grid.size();
    for (int c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < n; ++i) out.comp[c][i] += coeff * s.v[i] * psi.comp[c][i];
}

/// out += coeff * psi.
void add_times(SpinorField& out, const cplx& coeff, const SpinorField& psi) {
    const std::size_t n = out.grid.size();
    for (int c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < n; ++i) out.comp[c][i] += coeff * psi.comp[c][i];
}

/// out += coeff * |A|^2 psi.
void add_a2_times(SpinorField& out, double coeff, const RealVectorField& A,
                  const SpinorField& psi) {
    const std::size_t n = out.grid.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double a2 = A.comp[0][i] * A.comp[0][i] + A.comp[1][i] * A.comp[1][i] +
                          A.comp[2][i] * A.comp[2][i];
        out.comp[0][i] += coeff * a2 * psi.comp[0][i];
        out.comp[1][i] += coeff * a2 * psi.comp[1][i];
    }
}

/// out += coeff * sum_a A_a (d_a psi).
void add_a_dot_grad(SpinorField& out, const cplx& coeff, const RealVectorField& A,
                    const std::array<SpinorField, 3>& grad) {
    const std::size_t n = out.grid.size();
    for (int c = 0; c < 2; ++c)
        for (std::size_t i = 0; i < n; ++i) {
            const cplx g = A.comp[0][i] * grad[0].comp[c][i] +
                           A.comp[1][i] * grad[1].comp[c][i] +
                           A.comp[2][i] * grad[2].comp[c][i];
            out.comp[c][i] += coeff * g;
        }
}

/// Spinor-valued cross product (F x G)_i = eps_ijk F_j G_k with real F.
std::array<SpinorField, 3> cross_real_spinor(const RealVectorField& F,
                                             const std::array<SpinorField, 3>& G) {
    const Grid& g = F.grid;
    std::array<SpinorField, 3> out{SpinorField(g), SpinorField(g), SpinorField(g)};
    const std::size_t n = g.size();
    const int J[3] = {1, 2, 0};
    const int K[3] = {2, 0, 1};
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 2; ++c)
            for (std::size_t p = 0; p < n; ++p)
                out[i].comp[c][p] = F.comp[J[i]][p] * G[K[i]].comp[c][p] -
                                    F.comp[K[i]][p] * G[J[i]].comp[c][p];
    return out;
}

/// G_a = (p psi)_a - q A_a psi = -i hbar (d_a psi) - q A_a psi.
std::array<SpinorField, 3> kinetic_momentum(const std::array<SpinorField, 3>& grad,
                                            const RealVectorField* A, double hbar, double q,
                                            const SpinorField& psi) {
    const Grid& g = psi.grid;
    std::array<SpinorField, 3> G{SpinorField(g), SpinorField(g), SpinorField(g)};
    const std::size_t n = g.size();
    const cplx mih(0.0, -hbar);
    for (int a = 0; a < 3; ++a)
        for (int c = 0; c < 2; ++c)
            for (std::size_t p = 0; p < n; ++p) {
                cplx v = mih * grad[a].comp[c][p];
                if (A) v -= q * A->comp[a][p] * psi.comp[c][p];
                G[a].comp[c][p] = v;
            }
    return G;
}

}  // namespace

PreparedPotentials prepare(const Potentials& pot) {
    check_same_grid(pot.phi.grid, pot.A.grid, "prepare");
    check_same_grid(pot.phi.grid, pot.dA_dt.grid, "prepare");
    check_finite(pot.phi, "prepare(phi)");
    check_finite(pot.A, "prepare(A)");
    check_finite(pot.dA_dt, "prepare(dA_dt)");

    PreparedPotentials pp;
    pp.pot = pot;
    pp.grad_phi = spectral::gradient(pot.phi);
    pp.lap_phi = spectral::laplacian(pot.phi);
    pp.has_A = any_nonzero(pot.A);
    pp.has_dA = any_nonzero(pot.dA_dt);

    if (pot.direct_B) {
        check_same_grid(pot.phi.grid, pot.direct_B->grid, "prepare");
        check_finite(*pot.direct_B, "prepare(direct_B)");
        pp.B = *pot.direct_B;
    } else if (pp.has_A) {
        pp.B = spectral::curl(pot.A);
    } else {
        pp.B = RealVectorField(pot.phi.grid);
    }

    pp.div_A = pp.has_A ? spectral::divergence(pot.A) : RealScalarField(pot.phi.grid);
    if (pp.has_dA) {
        pp.curl_dA = spectral::curl(pot.dA_dt);
        pp.div_dA = spectral::divergence(pot.dA_dt);
    } else {
        pp.curl_dA = RealVectorField(pot.phi.grid);
        pp.div_dA = RealScalarField(pot.phi.grid);
    }

    pp.F = pp.grad_phi;
    if (pp.has_dA) axpy(1.0, pot.dA_dt, pp.F);
    return pp;
}

SpinorField apply_h(const SpinorField& psi, const PreparedPotentials& pp,
                    const HamiltonianOptions& opt, const PhysicalConstants& pc) {
    if (opt.model == Model::minimal) return apply_h_minimal(psi, pp, opt, pc);
    check_same_grid(psi.grid, pp.pot.phi.grid, "apply_h");
    check_finite(psi, "apply_h");

    const double hbar = pc.hbar, m = pc.mass, q = pc.charge, c = pc.c;
    const double lam = q * hbar / (4.0 * m * m * c * c);   // SOC strength
    const double beta = q * hbar / (8.0 * m * m * c * c);  // completion / Darwin / hbar

    const bool need_grad = pp.has_A || opt.include_soc;
    const SpinorField lap = spectral::spinor_laplacian(psi);
    std::array<SpinorField, 3> grad;
    if (need_grad) grad = spectral::spinor_gradient(psi);

    SpinorField out(psi.grid);

    // (p - qA)^2 / 2m
    add_times(out, cplx(-hbar * hbar / (2.0 * m), 0.0), lap);
    if (pp.has_A) {
        add_scalar_times(out, cplx(0.0, hbar * q / (2.0 * m)), pp.div_A, psi);
        add_a_dot_grad(out, cplx(0.0, hbar * q / m), pp.pot.A, grad);
        add_a2_times(out, q * q / (2.0 * m), pp.pot.A, psi);
    }

    add_scalar_times(out, cplx(q, 0.0), pp.pot.phi, psi);
    if (opt.include_rest_mass) add_times(out, cplx(m * c * c, 0.0), psi);

    if (opt.include_zeeman) {
        SpinorField z = sigma_dot(pp.B, psi);
        add_times(out, cplx(-q * hbar / (2.0 * m), 0.0), z);
    }

    if (opt.include_darwin) {
        add_scalar_times(out, cplx(hbar * beta, 0.0), pp.lap_phi, psi);
        if (pp.has_dA) add_scalar_times(out, cplx(hbar * beta, 0.0), pp.div_dA, psi);
    }

    if (opt.include_soc) {
        const RealVectorField* A = pp.has_A ? &pp.pot.A : nullptr;
        const auto G = kinetic_momentum(grad, A, hbar, q, psi);
        const auto V = cross_real_spinor(pp.F, G);
        SpinorField sv = sigma_dot(V);
        add_times(out, cplx(lam * opt.soc_scale, 0.0), sv);
        if (pp.has_dA) {
            SpinorField comp = sigma_dot(pp.curl_dA, psi);
            add_times(out, cplx(0.0, hbar * beta), comp);
        }
    }

    return out;
}

SpinorField apply_h(const SpinorField& psi, const Potentials& pot,
                    const HamiltonianOptions& opt, const PhysicalConstants& pc) {
    return apply_h(psi, prepare(pot), opt, pc);
}

SpinorField apply_h_minimal(const SpinorField& psi, const PreparedPotentials& pp,
                            const HamiltonianOptions& opt, const PhysicalConstants& pc) {
    check_same_grid(psi.grid, pp.pot.phi.grid, "apply_h_minimal");
    check_finite(psi, "apply_h_minimal");

    const double hbar = pc.hbar, m = pc.mass, q = pc.charge, c = pc.c;
    const double lam = q * hbar / (4.0 * m * m * c * c);

    const bool need_grad = pp.has_A || opt.include_soc;
    const SpinorField lap = spectral::spinor_laplacian(psi);
    std::array<SpinorField, 3> grad;
    if (need_grad) grad = spectral::spinor_gradient(psi);

    SpinorField out(psi.grid);
    add_times(out, cplx(-hbar * hbar / (2.0 * m), 0.0), lap);
    add_scalar_times(out, cplx(q, 0.0), pp.pot.phi, psi);
    if (opt.include_rest_mass) add_times(out, cplx(m * c * c, 0.0), psi);

    // -(q/2m)(p.A + A.p); the diamagnetic q^2 A^2/2m sits beyond this order.
    if (pp.has_A) {
        add_scalar_times(out, cplx(0.0, hbar * q / (2.0 * m)), pp.div_A, psi);
        add_a_dot_grad(out, cplx(0.0, hbar * q / m), pp.pot.A, grad);
    }

    if (opt.include_zeeman) {
        SpinorField z = sigma_dot(pp.B, psi);
        add_times(out, cplx(-q * hbar / (2.0 * m), 0.0), z);
    }

    if (opt.include_darwin) add_scalar_times(out, cplx(hbar * q * hbar / (8.0 * m * m * c * c), 0.0), pp.lap_phi, psi);

    if (opt.include_soc) {
        const auto G = kinetic_momentum(grad, nullptr, hbar, q, psi);
        const auto V = cross_real_spinor(pp.grad_phi, G);
        SpinorField sv = sigma_dot(V);
        add_times(out, cplx(lam * opt.soc_scale, 0.0), sv);
    }

    return out;
}

SpinorField apply_h_minimal(const SpinorField& psi, const Potentials& pot,
                            const HamiltonianOptions& opt, const PhysicalConstants& pc) {
    return apply_h_minimal(psi, prepare(pot), opt, pc);
}

double energy_expectation(const OrbitalSet& orbs, const PreparedPotentials& pp,
                          const HamiltonianOptions& opt, const PhysicalConstants& pc,
                          double imag_tol) {
    Accum re, im;
    for (const Orbital& orb : orbs.orbitals) {
        const SpinorField h = apply_h(orb.psi, pp, opt, pc);
        const cplx e = l2_inner(orb.psi, h);
        re.add(orb.occupation * e.real());
        im.add(orb.occupation * e.imag());
    }
    const double real = re.get();
    const double imag = im.get();
    if (std::abs(imag) > imag_tol * std::max(std::abs(real), 1.0))
        throw NumericsError("energy_expectation: imaginary residue " + std::to_string(imag) +
                            " exceeds tolerance, hermiticity is broken");
    return real;
}

double hermiticity_defect(const Grid& g, const PreparedPotentials& pp,
                          const HamiltonianOptions& opt, const PhysicalConstants& pc,
                          int n_pairs, std::uint64_t seed) {
    double worst = 0.0;
    for (int p = 0; p < n_pairs; ++p) {
        const SpinorField a = random_spinor(g, seed + 2 * p);
        const SpinorField b = random_spinor(g, seed + 2 * p + 1);
        const SpinorField ha = apply_h(a, pp, opt, pc);
        const SpinorField hb = apply_h(b, pp, opt, pc);
        const cplx lhs = l2_inner(a, hb);
        const cplx rhs = std::conj(l2_inner(b, ha));
        const double scale =
            std::max({std::sqrt(norm2(ha)), std::sqrt(norm2(hb)), 1e-300});
        worst = std::max(worst, std::abs(lhs - rhs) / scale);
    }
    return worst;
}

}  // namespace pmx
