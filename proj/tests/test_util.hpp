#pragma once

#include <array>
#include <cmath>

#include "pmx/field.hpp"

/// Shared analytic field builders for the test suites.  Kept independent of
/// the library's scenario initializers so the two can cross-check each other.
namespace testutil {

using pmx::cplx;
using pmx::Grid;
using pmx::RealScalarField;
using pmx::RealVectorField;
using pmx::SpinorField;

/// 1D Gaussian periodized over [0, L) by summing +-2 images.
inline double periodized_gaussian_1d(double x, double center, double width, double L) {
    double s = 0.0;
    for (int j = -2; j <= 2; ++j) {
        const double d = x - center + j * L;
        s += std::exp(-d * d / (2.0 * width * width));
    }
    return s;
}

/// Smooth periodic 3D Gaussian (product of periodized 1D factors), amplitude 1
/// before normalization.
inline RealScalarField gaussian_scalar(const Grid& g, std::array<double, 3> center,
                                       double width) {
    RealScalarField f(g);
    const auto& n = g.n();
    std::size_t idx = 0;
    for (int iz = 0; iz < n[2]; ++iz) {
        const double fz = periodized_gaussian_1d(g.coord(2, iz), center[2], width, g.box()[2]);
        for (int iy = 0; iy < n[1]; ++iy) {
            const double fy =
                fz * periodized_gaussian_1d(g.coord(1, iy), center[1], width, g.box()[1]);
            for (int ix = 0; ix < n[0]; ++ix, ++idx)
                f.v[idx] =
                    fy * periodized_gaussian_1d(g.coord(0, ix), center[0], width, g.box()[0]);
        }
    }
    return f;
}

/// Gaussian spinor packet with an on-grid plane-wave phase (modes are integer
/// triplets) and a fixed spinor direction; normalized to unit L2 norm.
inline SpinorField gaussian_spinor(const Grid& g, std::array<double, 3> center, double width,
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
    const double nn = std::sqrt(pmx::norm2(psi));
    pmx::scale(1.0 / nn, psi);
    return psi;
}

/// Unit-norm plane wave with spinor chi: chi * exp(i k.r) / sqrt(V).
inline SpinorField plane_wave(const Grid& g, std::array<int, 3> k_mode,
                              std::array<cplx, 2> chi) {
    SpinorField psi(g);
    const auto& n = g.n();
    const std::array<double, 3> k{2.0 * M_PI * k_mode[0] / g.box()[0],
                                  2.0 * M_PI * k_mode[1] / g.box()[1],
                                  2.0 * M_PI * k_mode[2] / g.box()[2]};
    const double amp = 1.0 / std::sqrt(g.volume());
    std::size_t idx = 0;
    for (int iz = 0; iz < n[2]; ++iz)
        for (int iy = 0; iy < n[1]; ++iy)
            for (int ix = 0; ix < n[0]; ++ix, ++idx) {
                const double phase = k[0] * g.coord(0, ix) + k[1] * g.coord(1, iy) +
                                     k[2] * g.coord(2, iz);
                const cplx val = amp * cplx(std::cos(phase), std::sin(phase));
                psi.comp[0][idx] = chi[0] * val;
                psi.comp[1][idx] = chi[1] * val;
            }
    return psi;
}

/// Max pointwise difference between two real fields.
inline double max_diff(const RealScalarField& a, const RealScalarField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.v.size(); ++i) m = std::max(m, std::abs(a.v[i] - b.v[i]));
    return m;
}

inline double max_diff(const RealVectorField& a, const RealVectorField& b) {
    double m = 0.0;
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < a.comp[c].size(); ++i)
            m = std::max(m, std::abs(a.comp[c][i] - b.comp[c][i]));
    return m;
}

inline double max_diff(const SpinorField& a, const SpinorField& b) {
    double m = 0.0;
    for (int s = 0; s < 2; ++s)
        for (std::size_t i = 0; i < a.comp[s].size(); ++i)
            m = std::max(m, std::abs(a.comp[s][i] - b.comp[s][i]));
    return m;
}

/// Relative L2 difference ||a-b|| / max(||b||, floor).
inline double rel_l2_diff(const RealScalarField& a, const RealScalarField& b,
                          double floor = 1e-300) {
    pmx::RealScalarField d = a;
    pmx::axpy(-1.0, b, d);
    return pmx::l2_norm(d) / std::max(pmx::l2_norm(b), floor);
}

inline double rel_l2_diff(const RealVectorField& a, const RealVectorField& b,
                          double floor = 1e-300) {
    pmx::RealVectorField d = a;
    pmx::axpy(-1.0, b, d);
    return pmx::l2_norm(d) / std::max(pmx::l2_norm(b), floor);
}

}  // namespace testutil
