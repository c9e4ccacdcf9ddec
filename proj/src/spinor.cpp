#include "pmx/spinor.hpp"

#include <cmath>
#include <stdexcept>

namespace pmx {

RealVectorField spin_density(const SpinorField& psi, double imag_tol) {
    const std::size_t n = psi.grid.size();
    RealVectorField s(psi.grid);
    double max_imag = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const cplx a = psi.comp[0][i];
        const cplx b = psi.comp[1][i];
        // psi^dag sigma psi, written out per component.
        const cplx sx = std::conj(a) * b + std::conj(b) * a;
        const cplx sy = cplx(0.0, -1.0) * std::conj(a) * b + cplx(0.0, 1.0) * std::conj(b) * a;
        const cplx sz = std::conj(a) * a - std::conj(b) * b;
        max_imag = std::max({max_imag, std::abs(sx.imag()), std::abs(sy.imag()),
                             std::abs(sz.imag())});
        s.comp[0][i] = sx.real();
        s.comp[1][i] = sy.real();
        s.comp[2][i] = sz.real();
    }
    if (max_imag > imag_tol)
        throw std::domain_error("spin_density: imaginary residue above tolerance");
    return s;
}

RealScalarField probability_density(const SpinorField& psi) {
    RealScalarField rho(psi.grid);
    const std::size_t n = psi.grid.size();
    for (std::size_t i = 0; i < n; ++i)
        rho.v[i] = std::norm(psi.comp[0][i]) + std::norm(psi.comp[1][i]);
    return rho;
}

SpinorField sigma_dot(const RealVectorField& B, const SpinorField& psi) {
    check_same_grid(B.grid, psi.grid, "sigma_dot");
    SpinorField out(psi.grid);
    const std::size_t n = psi.grid.size();
    for (std::size_t i = 0; i < n; ++i) {
        const cplx a = psi.comp[0][i];
        const cplx b = psi.comp[1][i];
        const double bx = B.comp[0][i];
        const double by = B.comp[1][i];
        const double bz = B.comp[2][i];
        out.comp[0][i] = bz * a + cplx(bx, -by) * b;
        out.comp[1][i] = cplx(bx, by) * a - bz * b;
    }
    return out;
}

SpinorField sigma_dot(const std::array<SpinorField, 3>& V) {
    const Grid& g = V[0].grid;
    check_same_grid(g, V[1].grid, "sigma_dot");
    check_same_grid(g, V[2].grid, "sigma_dot");
    SpinorField out(g);
    const std::size_t n = g.size();
    for (std::size_t i = 0; i < n; ++i) {
        const cplx x0 = V[0].comp[0][i], x1 = V[0].comp[1][i];
        const cplx y0 = V[1].comp[0][i], y1 = V[1].comp[1][i];
        const cplx z0 = V[2].comp[0][i], z1 = V[2].comp[1][i];
        out.comp[0][i] = x1 - cplx(0.0, 1.0) * y1 + z0;
        out.comp[1][i] = x0 + cplx(0.0, 1.0) * y0 - z1;
    }
    return out;
}

std::array<cplx, 2> spinor_along(const std::array<double, 3>& dir) {
    const double r = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
    if (!(r > 0.0)) throw std::invalid_argument("spinor_along: zero direction");
    const double theta = std::acos(dir[2] / r);
    const double phi = std::atan2(dir[1], dir[0]);
    return {cplx(std::cos(theta / 2.0), 0.0),
            cplx(std::cos(phi), std::sin(phi)) * std::sin(theta / 2.0)};
}

}  // namespace pmx
