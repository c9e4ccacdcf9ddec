#include "pmx/sources.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

#include "pmx/errors.hpp"
#include "pmx/spectral.hpp"
#include "pmx/spinor.hpp"

namespace pmx {

namespace {

/// Nominally real bilinears are evaluated in complex arithmetic and their
/// vanishing part must stay below this fraction of the ingredient scale.
/// Rounding alone sits near 1e-16 relative; 1e-13 leaves three decades of
/// slack while still catching any sign or index slip in the contractions.
constexpr double kImagResidueTol = 1e-13;

/// Floors for normalized diagnostics; only guard against division by zero on
/// degenerate (all-zero) inputs, far below any physical scale.
constexpr double kFluxFloor = 1e-30;
constexpr double kVariationalFloor = 1e-30;

void check_orbital_match(const OrbitalSet& orbs, const OrbitalSet& dorbs) {
    if (orbs.size() != dorbs.size())
        throw std::invalid_argument("sources: orbital/derivative count mismatch");
    for (std::size_t n = 0; n < orbs.size(); ++n)
        check_same_grid(orbs.orbitals[n].psi.grid, dorbs.orbitals[n].psi.grid,
                        "sources: dorbs grid");
}

/// sigma_j applied to a two-component value.
inline void sigma_times(int j, const cplx& s0, const cplx& s1, cplx& o0, cplx& o1) {
    switch (j) {
        case 0:
            o0 = s1;
            o1 = s0;
            break;
        case 1:  // -i s1, +i s0
            o0 = cplx(s1.imag(), -s1.real());
            o1 = cplx(-s0.imag(), s0.real());
            break;
        default:
            o0 = s0;
            o1 = -s1;
            break;
    }
}

struct WPairRef {
    const SpinorField* bra;
    const std::array<SpinorField, 3>* grad_bra;
    const SpinorField* ket;
    const std::array<SpinorField, 3>* grad_ket;
};

/// Accumulates weight * Im(W) into out, where
///   W_i = eps_ijk sum_pairs [ (d_j bra)^dag sigma_k ket + bra^dag sigma_j d_k ket ].
/// For the pair (psi, psi), and for the product-rule pair sum
/// (dpsi, psi) + (psi, dpsi), W is purely imaginary; the leftover real part is
/// pure rounding and is asserted against the largest contracted term.
void accumulate_im_w(const std::vector<WPairRef>& pairs, double weight, const Grid& g,
                     RealVectorField& out) {
    const std::size_t n = g.size();
    double max_re = 0.0;
    double max_term = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        cplx w[3] = {cplx(0.0, 0.0), cplx(0.0, 0.0), cplx(0.0, 0.0)};
        for (const WPairRef& pr : pairs) {
            const cplx b0 = pr.bra->comp[0][p];
            const cplx b1 = pr.bra->comp[1][p];
            cplx sk[3][2];
            for (int k = 0; k < 3; ++k)
                sigma_times(k, pr.ket->comp[0][p], pr.ket->comp[1][p], sk[k][0], sk[k][1]);
            const auto term = [&](int j, int k) {
                const cplx dbj0 = (*pr.grad_bra)[j].comp[0][p];
                const cplx dbj1 = (*pr.grad_bra)[j].comp[1][p];
                cplx sj0, sj1;
                sigma_times(j, (*pr.grad_ket)[k].comp[0][p], (*pr.grad_ket)[k].comp[1][p],
                            sj0, sj1);
                const cplx t = std::conj(dbj0) * sk[k][0] + std::conj(dbj1) * sk[k][1] +
                               std::conj(b0) * sj0 + std::conj(b1) * sj1;
                max_term = std::max(max_term, std::abs(t));
                return t;
            };
            w[0] += term(1, 2) - term(2, 1);
            w[1] += term(2, 0) - term(0, 2);
            w[2] += term(0, 1) - term(1, 0);
        }
        for (int i = 0; i < 3; ++i) {
            max_re = std::max(max_re, std::abs(w[i].real()));
            out.comp[i][p] += weight * w[i].imag();
        }
    }
    if (max_re > kImagResidueTol * std::max(1.0, max_term))
        throw NumericsError("spin-gradient bilinear developed a real part " +
                            std::to_string(max_re) + " (scale " + std::to_string(max_term) +
                            "); the epsilon contraction is inconsistent");
}

/// out += coeff * (a x b), pointwise.
void add_cross(double coeff, const RealVectorField& a, const RealVectorField& b,
               RealVectorField& out) {
    const std::size_t n = out.grid.size();
    for (std::size_t p = 0; p < n; ++p) {
        const double ax = a.comp[0][p], ay = a.comp[1][p], az = a.comp[2][p];
        const double bx = b.comp[0][p], by = b.comp[1][p], bz = b.comp[2][p];
        out.comp[0][p] += coeff * (ay * bz - az * by);
        out.comp[1][p] += coeff * (az * bx - ax * bz);
        out.comp[2][p] += coeff * (ax * by - ay * bx);
    }
}

/// The d/dt of the bracket multiplying -(hbar/4mc^2) in the current, split as
///   (hbar/2m) grad(drho) + (q/m)(dA x s + A x ds) + (hbar/2m) d(im_w),
/// shared between j_full and polarization_dt so both sides of the
/// decomposition identity exercise the same product-rule expansion but
/// different prefactor assembly.
RealVectorField bracket_dt(const OrbitalSet& orbs, const OrbitalSet& dorbs,
                           const RealVectorField& A, const PhysicalConstants& pc,
                           const RealVectorField* dA_dt) {
    const Grid& g = orbs.grid();
    const double half_hm = pc.hbar / (2.0 * pc.mass);
    const double qm = pc.charge / pc.mass;

    RealVectorField out = spectral::gradient(drho_free_dt(orbs, dorbs));
    scale(half_hm, out);

    const RealVectorField sdot = dspin_dt(orbs, dorbs);
    add_cross(qm, A, sdot, out);
    if (dA_dt != nullptr) {
        check_same_grid(g, dA_dt->grid, "sources: dA_dt");
        add_cross(qm, *dA_dt, total_spin(orbs), out);
    }

    axpy(half_hm, dim_w_dt(orbs, dorbs), out);
    return out;
}

}  // namespace

// ---- orbital bilinears -----------------------------------------------------

RealScalarField rho_free(const OrbitalSet& orbs) {
    RealScalarField out(orbs.grid());
    for (const Orbital& o : orbs.orbitals) {
        check_same_grid(out.grid, o.psi.grid, "rho_free");
        axpy(o.occupation, probability_density(o.psi), out);
    }
    return out;
}

RealVectorField total_spin(const OrbitalSet& orbs) {
    RealVectorField out(orbs.grid());
    for (const Orbital& o : orbs.orbitals) {
        check_same_grid(out.grid, o.psi.grid, "total_spin");
        axpy(o.occupation, spin_density(o.psi), out);
    }
    return out;
}

RealVectorField paramagnetic_current(const OrbitalSet& orbs, const PhysicalConstants& pc) {
    const Grid& g = orbs.grid();
    RealVectorField out(g);
    const double hm = pc.hbar / pc.mass;
    for (const Orbital& o : orbs.orbitals) {
        const auto grad = spectral::spinor_gradient(o.psi);
        const double w = o.occupation * hm;
        for (int k = 0; k < 3; ++k) {
            for (std::size_t p = 0; p < g.size(); ++p) {
                // (i hbar/2m)[(d psi)^dag psi - psi^dag d psi] = (hbar/m) Im(psi^dag d psi)
                const cplx z = std::conj(o.psi.comp[0][p]) * grad[k].comp[0][p] +
                               std::conj(o.psi.comp[1][p]) * grad[k].comp[1][p];
                out.comp[k][p] += w * z.imag();
            }
        }
    }
    return out;
}

RealVectorField im_w_bilinear(const OrbitalSet& orbs) {
    const Grid& g = orbs.grid();
    RealVectorField out(g);
    for (const Orbital& o : orbs.orbitals) {
        const auto grad = spectral::spinor_gradient(o.psi);
        accumulate_im_w({{&o.psi, &grad, &o.psi, &grad}}, o.occupation, g, out);
    }
    return out;
}

RealScalarField drho_free_dt(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt) {
    check_orbital_match(orbs, dorbs_dt);
    const Grid& g = orbs.grid();
    RealScalarField out(g);
    for (std::size_t n = 0; n < orbs.size(); ++n) {
        const SpinorField& psi = orbs.orbitals[n].psi;
        const SpinorField& dpsi = dorbs_dt.orbitals[n].psi;
        const double w = orbs.orbitals[n].occupation;
        for (std::size_t p = 0; p < g.size(); ++p) {
            // (dpsi^dag psi + psi^dag dpsi) = 2 Re(psi^dag dpsi), exactly real.
            const cplx z = std::conj(psi.comp[0][p]) * dpsi.comp[0][p] +
                           std::conj(psi.comp[1][p]) * dpsi.comp[1][p];
            out.v[p] += w * 2.0 * z.real();
        }
    }
    return out;
}

RealVectorField dspin_dt(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt) {
    check_orbital_match(orbs, dorbs_dt);
    const Grid& g = orbs.grid();
    RealVectorField out(g);
    for (std::size_t n = 0; n < orbs.size(); ++n) {
        const SpinorField& psi = orbs.orbitals[n].psi;
        const SpinorField& dpsi = dorbs_dt.orbitals[n].psi;
        const double w = orbs.orbitals[n].occupation;
        for (std::size_t p = 0; p < g.size(); ++p) {
            for (int i = 0; i < 3; ++i) {
                // dpsi^dag sigma psi + psi^dag sigma dpsi = 2 Re(psi^dag sigma dpsi)
                // because sigma_i is Hermitian; real by construction.
                cplx o0, o1;
                sigma_times(i, dpsi.comp[0][p], dpsi.comp[1][p], o0, o1);
                const cplx z = std::conj(psi.comp[0][p]) * o0 + std::conj(psi.comp[1][p]) * o1;
                out.comp[i][p] += w * 2.0 * z.real();
            }
        }
    }
    return out;
}

RealVectorField dim_w_dt(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt) {
    check_orbital_match(orbs, dorbs_dt);
    const Grid& g = orbs.grid();
    RealVectorField out(g);
    for (std::size_t n = 0; n < orbs.size(); ++n) {
        const SpinorField& psi = orbs.orbitals[n].psi;
        const SpinorField& dpsi = dorbs_dt.orbitals[n].psi;
        const auto grad = spectral::spinor_gradient(psi);
        const auto dgrad = spectral::spinor_gradient(dpsi);
        accumulate_im_w({{&dpsi, &dgrad, &psi, &grad}, {&psi, &grad, &dpsi, &dgrad}},
                        orbs.orbitals[n].occupation, g, out);
    }
    return out;
}

RealVectorField dj0_dt(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt,
                       const PhysicalConstants& pc) {
    check_orbital_match(orbs, dorbs_dt);
    const Grid& g = orbs.grid();
    RealVectorField out(g);
    const double hm = pc.hbar / pc.mass;
    for (std::size_t n = 0; n < orbs.size(); ++n) {
        const SpinorField& psi = orbs.orbitals[n].psi;
        const SpinorField& dpsi = dorbs_dt.orbitals[n].psi;
        const auto grad = spectral::spinor_gradient(psi);
        const auto dgrad = spectral::spinor_gradient(dpsi);
        const double w = orbs.orbitals[n].occupation * hm;
        for (int k = 0; k < 3; ++k) {
            for (std::size_t p = 0; p < g.size(); ++p) {
                const cplx z =
                    std::conj(dpsi.comp[0][p]) * grad[k].comp[0][p] +
                    std::conj(dpsi.comp[1][p]) * grad[k].comp[1][p] +
                    std::conj(psi.comp[0][p]) * dgrad[k].comp[0][p] +
                    std::conj(psi.comp[1][p]) * dgrad[k].comp[1][p];
                out.comp[k][p] += w * z.imag();
            }
        }
    }
    axpy(pc.hbar / (2.0 * pc.mass), spectral::curl(dspin_dt(orbs, dorbs_dt)), out);
    return out;
}

RealVectorField j_zero_order(const OrbitalSet& orbs, const PhysicalConstants& pc) {
    RealVectorField j = paramagnetic_current(orbs, pc);
    axpy(pc.hbar / (2.0 * pc.mass), spectral::curl(total_spin(orbs)), j);
    return j;
}

// ---- densities and currents ------------------------------------------------

RealScalarField rho_full(const OrbitalSet& orbs, const RealVectorField& A,
                         const PhysicalConstants& pc) {
    const Grid& g = orbs.grid();
    check_same_grid(g, A.grid, "rho_full: A");
    check_finite(A, "rho_full: A");

    const double half_hm = pc.hbar / (2.0 * pc.mass);
    const double qm = pc.charge / pc.mass;

    RealVectorField bracket = spectral::gradient(rho_free(orbs));
    scale(half_hm, bracket);
    add_cross(qm, A, total_spin(orbs), bracket);
    axpy(half_hm, im_w_bilinear(orbs), bracket);

    RealScalarField out = rho_free(orbs);
    axpy(pc.hbar / (4.0 * pc.mass * pc.c * pc.c), spectral::divergence(bracket), out);
    return out;
}

RealVectorField j_free(const OrbitalSet& orbs, const RealVectorField& A,
                       const RealVectorField& E, const PhysicalConstants& pc) {
    const Grid& g = orbs.grid();
    check_same_grid(g, A.grid, "j_free: A");
    check_same_grid(g, E.grid, "j_free: E");
    check_finite(A, "j_free: A");
    check_finite(E, "j_free: E");

    RealVectorField out = paramagnetic_current(orbs, pc);
    const RealScalarField rho = rho_free(orbs);
    const double qm = pc.charge / pc.mass;
    for (int k = 0; k < 3; ++k)
        for (std::size_t p = 0; p < g.size(); ++p)
            out.comp[k][p] -= qm * A.comp[k][p] * rho.v[p];
    add_cross(pc.soc_prefactor(), E, total_spin(orbs), out);
    return out;
}

RealVectorField j_full(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt,
                       const RealVectorField& A, const RealVectorField& E,
                       const PhysicalConstants& pc, const RealVectorField* dA_dt) {
    RealVectorField out = j_free(orbs, A, E, pc);

    RealVectorField curl_s = spectral::curl(total_spin(orbs));
    axpy(pc.hbar / (2.0 * pc.mass), curl_s, out);

    axpy(-pc.hbar / (4.0 * pc.mass * pc.c * pc.c),
         bracket_dt(orbs, dorbs_dt, A, pc, dA_dt), out);
    return out;
}

// ---- bound-charge moments --------------------------------------------------

RealVectorField magnetization(const OrbitalSet& orbs, const PhysicalConstants& pc) {
    RealVectorField out = total_spin(orbs);
    scale(pc.zeeman_prefactor(), out);
    return out;
}

RealVectorField polarization_spin(const OrbitalSet& orbs, const RealVectorField& A,
                                  const PhysicalConstants& pc) {
    const Grid& g = orbs.grid();
    check_same_grid(g, A.grid, "polarization_spin: A");

    const double pref = -pc.charge * pc.hbar / (4.0 * pc.mass * pc.c * pc.c);
    RealVectorField out(g);
    add_cross(pref * pc.charge / pc.mass, A, total_spin(orbs), out);
    axpy(pref * pc.hbar / (2.0 * pc.mass), im_w_bilinear(orbs), out);
    return out;
}

RealVectorField polarization_darwin(const OrbitalSet& orbs, const PhysicalConstants& pc) {
    RealVectorField out = spectral::gradient(rho_free(orbs));
    scale(-pc.charge * pc.hbar * pc.hbar / (8.0 * pc.mass * pc.mass * pc.c * pc.c), out);
    return out;
}

RealVectorField polarization_dt(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt,
                                const RealVectorField& A, const PhysicalConstants& pc,
                                const RealVectorField* dA_dt) {
    // d/dt P = -(q hbar/4mc^2) * d/dt[bracket]; same bracket as in j_full.
    RealVectorField out = bracket_dt(orbs, dorbs_dt, A, pc, dA_dt);
    scale(-pc.charge * pc.hbar / (4.0 * pc.mass * pc.c * pc.c), out);
    return out;
}

// ---- order-separated currents ----------------------------------------------

std::pair<RealVectorField, RealVectorField> ordered_currents(
    const OrbitalSet& orbs, const OrbitalSet& dorbs_dt, const RealVectorField& A2,
    const RealScalarField& phi0, const PhysicalConstants& pc) {
    const Grid& g = orbs.grid();
    check_same_grid(g, A2.grid, "ordered_currents: A2");
    check_same_grid(g, phi0.grid, "ordered_currents: phi0");
    check_finite(A2, "ordered_currents: A2");
    check_finite(phi0, "ordered_currents: phi0");

    RealVectorField j0 = paramagnetic_current(orbs, pc);
    axpy(pc.hbar / (2.0 * pc.mass), spectral::curl(total_spin(orbs)), j0);

    // j2 = -(q/m) A2 rho - lambda grad(phi0) x s + (1/q) dP/dt, where the
    // A x s part of P_spin is dropped: with A itself second order that term
    // is fourth order in 1/c.
    RealVectorField j2(g);
    const RealScalarField rho = rho_free(orbs);
    const double qm = pc.charge / pc.mass;
    for (int k = 0; k < 3; ++k)
        for (std::size_t p = 0; p < g.size(); ++p)
            j2.comp[k][p] = -qm * A2.comp[k][p] * rho.v[p];
    add_cross(-pc.soc_prefactor(), spectral::gradient(phi0), total_spin(orbs), j2);

    const double hb = pc.hbar;
    const double m = pc.mass;
    const double c2 = pc.c * pc.c;
    axpy(-hb * hb / (8.0 * m * m * c2),
         spectral::gradient(drho_free_dt(orbs, dorbs_dt)), j2);
    axpy(-hb / (4.0 * m * c2) * hb / (2.0 * m), dim_w_dt(orbs, dorbs_dt), j2);

    return {std::move(j0), std::move(j2)};
}

// ---- relativistic mass-correction current ----------------------------------

RealVectorField j_rel_mass_correction(const OrbitalSet& orbs, const RealVectorField& A,
                                      const PhysicalConstants& pc) {
    const Grid& g = orbs.grid();
    check_same_grid(g, A.grid, "j_rel: A");
    check_finite(A, "j_rel: A");

    const double m3c2 = pc.mass * pc.mass * pc.mass * pc.c * pc.c;
    const double q = pc.charge;
    const double hb = pc.hbar;
    const double pref_h2 = q * hb * hb / (4.0 * m3c2);   // the hbar^2-weighted groups
    const double pref_a2p = q * q * hb / (2.0 * m3c2);   // A^2 x paramagnetic-type groups

    // Occupation-weighted bilinear accumulators.
    RealVectorField acc_grad_pair(g);  // terms with (grad psi)^dag against div(A psi), A.grad psi
    RealScalarField acc_a_para(g);     // 2 Im(psi^dag A.grad psi)
    RealVectorField acc_para(g);       // 2 Im(psi^dag grad psi)
    RealScalarField acc_lap(g);        // 2 Re(psi^dag lap psi)

    for (const Orbital& o : orbs.orbitals) {
        const double w = o.occupation;
        const auto grad = spectral::spinor_gradient(o.psi);
        const SpinorField lap = spectral::spinor_laplacian(o.psi);

        // div(A psi) = sum_k d_k(A_k psi), spectral derivative of the product.
        SpinorField div_apsi(g);
        for (int k = 0; k < 3; ++k) {
            SpinorField prod(g);
            for (int cpn = 0; cpn < 2; ++cpn)
                for (std::size_t p = 0; p < g.size(); ++p)
                    prod.comp[cpn][p] = A.comp[k][p] * o.psi.comp[cpn][p];
            const SpinorField d = spectral::spinor_derivative(prod, k);
            for (int cpn = 0; cpn < 2; ++cpn)
                for (std::size_t p = 0; p < g.size(); ++p)
                    div_apsi.comp[cpn][p] += d.comp[cpn][p];
        }

        for (std::size_t p = 0; p < g.size(); ++p) {
            const cplx a = o.psi.comp[0][p], b = o.psi.comp[1][p];
            // A.grad psi at this point.
            cplx ag0(0.0, 0.0), ag1(0.0, 0.0);
            for (int k = 0; k < 3; ++k) {
                ag0 += A.comp[k][p] * grad[k].comp[0][p];
                ag1 += A.comp[k][p] * grad[k].comp[1][p];
            }
            for (int k = 0; k < 3; ++k) {
                const cplx dk0 = grad[k].comp[0][p], dk1 = grad[k].comp[1][p];
                // (grad psi)^dag div(A psi) + h.c. and (grad psi)^dag (A.grad psi) + h.c.
                const cplx t = std::conj(dk0) * (div_apsi.comp[0][p] + ag0) +
                               std::conj(dk1) * (div_apsi.comp[1][p] + ag1);
                acc_grad_pair.comp[k][p] += w * 2.0 * t.real();
                const cplx zp = std::conj(a) * dk0 + std::conj(b) * dk1;
                acc_para.comp[k][p] += w * 2.0 * zp.imag();
            }
            const cplx za = std::conj(a) * ag0 + std::conj(b) * ag1;
            acc_a_para.v[p] += w * 2.0 * za.imag();
            const cplx zl = std::conj(a) * lap.comp[0][p] + std::conj(b) * lap.comp[1][p];
            acc_lap.v[p] += w * 2.0 * zl.real();
        }
    }

    const RealScalarField rho = rho_free(orbs);

    // grad{ div(A rho) }, both derivatives spectral.
    RealVectorField a_rho(g);
    for (int k = 0; k < 3; ++k)
        for (std::size_t p = 0; p < g.size(); ++p)
            a_rho.comp[k][p] = A.comp[k][p] * rho.v[p];
    const RealVectorField grad_div_arho = spectral::gradient(spectral::divergence(a_rho));

    RealVectorField out(g);
    const double pref_a3 = q * q * q / m3c2;
    for (std::size_t p = 0; p < g.size(); ++p) {
        const double a2 = A.comp[0][p] * A.comp[0][p] + A.comp[1][p] * A.comp[1][p] +
                          A.comp[2][p] * A.comp[2][p];
        for (int k = 0; k < 3; ++k) {
            double v = pref_h2 * (acc_grad_pair.comp[k][p] - grad_div_arho.comp[k][p]);
            v += pref_a3 * a2 * A.comp[k][p] * rho.v[p];
            // i A (psi^dag A.grad psi - h.c.) and -i A^2 ((grad psi^dag) psi - h.c.):
            // both brackets are 2i Im(...), so i*(...) is real.
            v -= pref_a2p * A.comp[k][p] * acc_a_para.v[p];
            v -= pref_a2p * a2 * acc_para.comp[k][p];
            v -= pref_h2 * acc_lap.v[p] * A.comp[k][p];
            out.comp[k][p] = v;
        }
    }
    return out;
}

// ---- bundle ----------------------------------------------------------------

SourceBundle compute_sources(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt,
                             const RealVectorField& A, const RealScalarField& phi0,
                             const PhysicalConstants& pc, const RealVectorField* dA_dt) {
    const Grid& g = orbs.grid();
    check_same_grid(g, A.grid, "compute_sources: A");
    check_same_grid(g, phi0.grid, "compute_sources: phi0");

    RealVectorField E = spectral::gradient(phi0);
    scale(-1.0, E);
    if (dA_dt != nullptr) axpy(-1.0, *dA_dt, E);

    SourceBundle b;
    b.rho_free = rho_free(orbs);
    b.rho_full = rho_full(orbs, A, pc);
    b.j_free = j_free(orbs, A, E, pc);
    b.j_full = j_full(orbs, dorbs_dt, A, E, pc, dA_dt);
    b.M = magnetization(orbs, pc);
    b.P_spin = polarization_spin(orbs, A, pc);
    b.P_darwin = polarization_darwin(orbs, pc);
    auto ordered = ordered_currents(orbs, dorbs_dt, A, phi0, pc);
    b.j0 = std::move(ordered.first);
    b.j2 = std::move(ordered.second);
    return b;
}

// ---- continuity ------------------------------------------------------------

ContinuityReport continuity_residual(const OrbitalSet& orbs, const OrbitalSet& dorbs_dt,
                                     const RealVectorField& A, const RealVectorField& E,
                                     const PhysicalConstants& pc) {
    ContinuityReport rep;
    rep.residual = drho_free_dt(orbs, dorbs_dt);
    const RealScalarField div_j = spectral::divergence(j_free(orbs, A, E, pc));
    axpy(1.0, div_j, rep.residual);
    rep.residual_l2 = l2_norm(rep.residual);
    rep.flux_l2 = l2_norm(div_j);
    rep.normalized = rep.residual_l2 / std::max(rep.flux_l2, kFluxFloor);
    return rep;
}

ContinuityReport continuity_residual(const OrbitalSet& orbs, const Potentials& pot,
                                     const PhysicalConstants& pc,
                                     const HamiltonianOptions& opt) {
    const Grid& g = orbs.grid();
    const PreparedPotentials pp = prepare(pot);

    OrbitalSet dorbs;
    dorbs.orbitals.reserve(orbs.size());
    const cplx minus_i_over_h(0.0, -1.0 / pc.hbar);
    for (const Orbital& o : orbs.orbitals) {
        SpinorField dpsi = apply_h(o.psi, pp, opt, pc);
        for (auto& cpn : dpsi.comp)
            for (cplx& z : cpn) z *= minus_i_over_h;
        dorbs.orbitals.push_back({std::move(dpsi), o.occupation});
    }

    // The (A, E) pair must match the generator: the reduced model couples to
    // A with the static E = -grad phi0, the full one to E = -grad phi - dA/dt.
    RealVectorField E(g);
    if (opt.model == Model::minimal)
        axpy(-1.0, pp.grad_phi, E);
    else
        axpy(-1.0, pp.F, E);
    return continuity_residual(orbs, dorbs, pot.A, E, pc);
}

// ---- variational consistency -----------------------------------------------

namespace {

/// Second-order time derivative of a sampled trajectory: centered in the
/// interior, one-sided three-point at the ends.
template <typename FieldT, typename AxpyView>
FieldT sampled_time_derivative(const std::vector<FieldT>& traj, std::size_t t, double dt,
                               const AxpyView& do_axpy) {
    const std::size_t n = traj.size();
    FieldT out(traj[t].grid);
    const double inv = 1.0 / (2.0 * dt);
    if (t == 0) {
        do_axpy(-3.0 * inv, traj[0], out);
        do_axpy(4.0 * inv, traj[1], out);
        do_axpy(-1.0 * inv, traj[2], out);
    } else if (t + 1 == n) {
        do_axpy(3.0 * inv, traj[n - 1], out);
        do_axpy(-4.0 * inv, traj[n - 2], out);
        do_axpy(1.0 * inv, traj[n - 3], out);
    } else {
        do_axpy(inv, traj[t + 1], out);
        do_axpy(-inv, traj[t - 1], out);
    }
    return out;
}

/// Sources truncated consistently with the Hamiltonian term toggles.  Each
/// term family of H owns a source piece: the Darwin term owns the grad(rho)
/// part of the density bracket and of dP/dt; the spin-orbit block owns the
/// A x s and im_w parts plus the E x s drift; the Zeeman term owns curl(M).
/// With every toggle on these reduce to rho_full / j_full, which the caller
/// uses directly in that case so the production paths stay under test.
RealScalarField toggled_rho(const OrbitalSet& orbs, const RealVectorField& A,
                            const HamiltonianOptions& opt, const PhysicalConstants& pc) {
    const Grid& g = orbs.grid();
    const double half_hm = pc.hbar / (2.0 * pc.mass);
    RealVectorField bracket(g);
    if (opt.include_darwin) {
        RealVectorField grad_rho = spectral::gradient(rho_free(orbs));
        axpy(half_hm, grad_rho, bracket);
    }
    if (opt.include_soc) {
        add_cross(pc.charge / pc.mass, A, total_spin(orbs), bracket);
        axpy(half_hm, im_w_bilinear(orbs), bracket);
    }
    RealScalarField out = rho_free(orbs);
    axpy(pc.hbar / (4.0 * pc.mass * pc.c * pc.c), spectral::divergence(bracket), out);
    return out;
}

RealVectorField toggled_j(const OrbitalSet& orbs, const OrbitalSet* dorbs,
                          const RealVectorField& A, const RealVectorField& E,
                          const PhysicalConstants& pc, const HamiltonianOptions& opt,
                          const RealVectorField* dA_dt) {
    const Grid& g = orbs.grid();
    const double half_hm = pc.hbar / (2.0 * pc.mass);
    const double qm = pc.charge / pc.mass;

    RealVectorField out = paramagnetic_current(orbs, pc);
    const RealScalarField rho = rho_free(orbs);
    for (int k = 0; k < 3; ++k)
        for (std::size_t p = 0; p < g.size(); ++p)
            out.comp[k][p] -= qm * A.comp[k][p] * rho.v[p];
    if (opt.include_zeeman) axpy(half_hm, spectral::curl(total_spin(orbs)), out);
    if (opt.include_soc) add_cross(pc.soc_prefactor(), E, total_spin(orbs), out);

    if (dorbs != nullptr) {
        RealVectorField dbracket(g);
        if (opt.include_darwin) {
            RealVectorField grad_drho = spectral::gradient(drho_free_dt(orbs, *dorbs));
            axpy(half_hm, grad_drho, dbracket);
        }
        if (opt.include_soc) {
            add_cross(qm, A, dspin_dt(orbs, *dorbs), dbracket);
            if (dA_dt != nullptr) add_cross(qm, *dA_dt, total_spin(orbs), dbracket);
            axpy(half_hm, dim_w_dt(orbs, *dorbs), dbracket);
        }
        axpy(-pc.hbar / (4.0 * pc.mass * pc.c * pc.c), dbracket, out);
    }
    return out;
}

}  // namespace

VariationalResult variational_check(const std::vector<SpinorField>& psi_traj,
                                    const std::vector<Potentials>& pot_traj,
                                    const std::vector<RealScalarField>& dphi_traj,
                                    const std::vector<RealVectorField>& dA_traj,
                                    double epsilon, double dt, const PhysicalConstants& pc,
                                    VariationalMode mode, const HamiltonianOptions& opt) {
    if (epsilon <= 0.0)
        throw std::invalid_argument("variational_check: epsilon must be positive");
    const std::size_t nt = psi_traj.size();
    if (nt == 0 || pot_traj.size() != nt || dphi_traj.size() != nt || dA_traj.size() != nt)
        throw std::invalid_argument("variational_check: trajectory length mismatch");
    const bool spacetime = (mode == VariationalMode::spacetime);
    if (spacetime && (nt < 3 || dt <= 0.0))
        throw std::invalid_argument(
            "variational_check: spacetime mode needs dt > 0 and at least 3 samples");
    if (opt.model == Model::minimal)
        throw std::invalid_argument(
            "variational_check: the reduced model has its own truncated sources; "
            "only the full Hamiltonian is checked here");

    const Grid& g = psi_traj[0].grid;
    const auto axpy_r = [](double a, const RealVectorField& x, RealVectorField& y) {
        axpy(a, x, y);
    };
    const auto axpy_s = [](double a, const SpinorField& x, SpinorField& y) {
        axpy(cplx(a, 0.0), x, y);
    };

    Accum d_acc;
    Accum s_acc;
    for (std::size_t t = 0; t < nt; ++t) {
        const double w = !spacetime ? 1.0 : ((t == 0 || t + 1 == nt) ? 0.5 * dt : dt);

        OrbitalSet orbs;
        orbs.orbitals.push_back({psi_traj[t], 1.0});
        const PreparedPotentials pp0 = prepare(pot_traj[t]);

        // One-sided difference of the coupling energy along the perturbation.
        Potentials pert = pot_traj[t];
        axpy(epsilon, dphi_traj[t], pert.phi);
        axpy(epsilon, dA_traj[t], pert.A);
        if (spacetime)
            axpy(epsilon, sampled_time_derivative(dA_traj, t, dt, axpy_r), pert.dA_dt);
        const double e0 = energy_expectation(orbs, pp0, opt, pc);
        const double e1 = energy_expectation(orbs, prepare(pert), opt, pc);
        d_acc.add(w * (e1 - e0) / epsilon);

        // Direct source integral q Int(rho dphi - j . dA).
        const bool full_physics =
            opt.include_darwin && opt.include_soc && opt.include_zeeman;
        RealVectorField E(g);
        axpy(-1.0, pp0.F, E);
        const RealScalarField rho = full_physics ? rho_full(orbs, pot_traj[t].A, pc)
                                                 : toggled_rho(orbs, pot_traj[t].A, opt, pc);
        RealVectorField j(g);
        if (spacetime) {
            OrbitalSet dorbs;
            dorbs.orbitals.push_back({sampled_time_derivative(psi_traj, t, dt, axpy_s), 1.0});
            j = full_physics
                    ? j_full(orbs, dorbs, pot_traj[t].A, E, pc, &pot_traj[t].dA_dt)
                    : toggled_j(orbs, &dorbs, pot_traj[t].A, E, pc, opt, &pot_traj[t].dA_dt);
        } else {
            // Frozen snapshot: the d/dt source terms drop on both sides.
            OrbitalSet frozen;
            frozen.orbitals.push_back({SpinorField(g), 1.0});
            j = full_physics ? j_full(orbs, frozen, pot_traj[t].A, E, pc, nullptr)
                             : toggled_j(orbs, nullptr, pot_traj[t].A, E, pc, opt, nullptr);
        }
        Accum cell;
        for (std::size_t p = 0; p < g.size(); ++p) {
            double v = rho.v[p] * dphi_traj[t].v[p];
            for (int k = 0; k < 3; ++k) v -= j.comp[k][p] * dA_traj[t].comp[k][p];
            cell.add(v);
        }
        s_acc.add(w * pc.charge * cell.get() * g.cell_volume());
    }

    VariationalResult res;
    res.fd_value = d_acc.get();
    res.source_value = s_acc.get();
    res.abs_error = std::abs(res.fd_value - res.source_value);
    res.relative_error = res.abs_error / std::max(std::abs(res.source_value), kVariationalFloor);
    return res;
}

}  // namespace pmx
