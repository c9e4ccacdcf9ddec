#include "pmx/spectral.hpp"

#include <cmath>
#include <stdexcept>

#include "pmx/fft.hpp"

namespace pmx::spectral {
namespace {

using buffer = std::vector<cplx>;

buffer to_complex(const std::vector<double>& v) {
    buffer b(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) b[i] = cplx(v[i], 0.0);
    return b;
}

void extract_real(const buffer& b, std::vector<double>& out) {
    out.resize(b.size());
    for (std::size_t i = 0; i < b.size(); ++i) out[i] = b[i].real();
}

/// Multiply spectrum in-place by i * k_axis (derivative table).
void apply_ik(const Grid& g, int axis, buffer& spec) {
    const auto& n = g.n();
    const auto& kx = g.k_deriv(0);
    const auto& ky = g.k_deriv(1);
    const auto& kz = g.k_deriv(2);
    std::size_t idx = 0;
    for (int iz = 0; iz < n[2]; ++iz)
        for (int iy = 0; iy < n[1]; ++iy)
            for (int ix = 0; ix < n[0]; ++ix, ++idx) {
                const double k = (axis == 0) ? kx[ix] : (axis == 1) ? ky[iy] : kz[iz];
                const cplx z = spec[idx];
                spec[idx] = cplx(-k * z.imag(), k * z.real());
            }
}

/// Multiply spectrum in-place by -|k|^2 (full tables, Nyquist included).
void apply_minus_k2(const Grid& g, buffer& spec) {
    const auto& n = g.n();
    const auto& kx = g.k_full(0);
    const auto& ky = g.k_full(1);
    const auto& kz = g.k_full(2);
    std::size_t idx = 0;
    for (int iz = 0; iz < n[2]; ++iz) {
        const double kz2 = kz[iz] * kz[iz];
        for (int iy = 0; iy < n[1]; ++iy) {
            const double kyz2 = ky[iy] * ky[iy] + kz2;
            for (int ix = 0; ix < n[0]; ++ix, ++idx)
                spec[idx] *= -(kx[ix] * kx[ix] + kyz2);
        }
    }
}

}  // namespace

RealVectorField gradient(const RealScalarField& f) {
    check_finite(f, "gradient");
    buffer spec = to_complex(f.v);
    fft::forward(f.grid, spec.data());
    RealVectorField out(f.grid);
    for (int a = 0; a < 3; ++a) {
        buffer d = spec;
        apply_ik(f.grid, a, d);
        fft::inverse(f.grid, d.data());
        extract_real(d, out.comp[a]);
    }
    return out;
}

RealScalarField derivative(const RealScalarField& f, int axis) {
    check_finite(f, "derivative");
    if (axis < 0 || axis > 2) throw std::invalid_argument("derivative: axis out of range");
    buffer spec = to_complex(f.v);
    fft::forward(f.grid, spec.data());
    apply_ik(f.grid, axis, spec);
    fft::inverse(f.grid, spec.data());
    RealScalarField out(f.grid);
    extract_real(spec, out.v);
    return out;
}

RealScalarField divergence(const RealVectorField& f) {
    check_finite(f, "divergence");
    const Grid& g = f.grid;
    buffer acc(g.size(), cplx(0.0, 0.0));
    for (int a = 0; a < 3; ++a) {
        buffer spec = to_complex(f.comp[a]);
        fft::forward(g, spec.data());
        apply_ik(g, a, spec);
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += spec[i];
    }
    fft::inverse(g, acc.data());
    RealScalarField out(g);
    extract_real(acc, out.v);
    return out;
}

RealVectorField curl(const RealVectorField& f) {
    check_finite(f, "curl");
    const Grid& g = f.grid;
    std::array<buffer, 3> spec;
    for (int a = 0; a < 3; ++a) {
        spec[a] = to_complex(f.comp[a]);
        fft::forward(g, spec[a].data());
    }
    RealVectorField out(g);
    // (curl F)_i = eps_ijk d_j F_k
    const int J[3] = {1, 2, 0};
    const int K[3] = {2, 0, 1};
    for (int i = 0; i < 3; ++i) {
        buffer a = spec[K[i]];
        apply_ik(g, J[i], a);
        buffer b = spec[J[i]];
        apply_ik(g, K[i], b);
        for (std::size_t p = 0; p < a.size(); ++p) a[p] -= b[p];
        fft::inverse(g, a.data());
        extract_real(a, out.comp[i]);
    }
    return out;
}

RealScalarField laplacian(const RealScalarField& f) {
    check_finite(f, "laplacian");
    buffer spec = to_complex(f.v);
    fft::forward(f.grid, spec.data());
    apply_minus_k2(f.grid, spec);
    fft::inverse(f.grid, spec.data());
    RealScalarField out(f.grid);
    extract_real(spec, out.v);
    return out;
}

RealScalarField inverse_laplacian(const RealScalarField& f, double* subtracted_mean) {
    check_finite(f, "inverse_laplacian");
    const Grid& g = f.grid;
    buffer spec = to_complex(f.v);
    fft::forward(g, spec.data());

    if (subtracted_mean)
        *subtracted_mean = spec[0].real() / static_cast<double>(g.size());
    spec[0] = cplx(0.0, 0.0);

    const auto& n = g.n();
    const auto& kx = g.k_full(0);
    const auto& ky = g.k_full(1);
    const auto& kz = g.k_full(2);
    std::size_t idx = 0;
    for (int iz = 0; iz < n[2]; ++iz) {
        const double kz2 = kz[iz] * kz[iz];
        for (int iy = 0; iy < n[1]; ++iy) {
            const double kyz2 = ky[iy] * ky[iy] + kz2;
            for (int ix = 0; ix < n[0]; ++ix, ++idx) {
                const double k2 = kx[ix] * kx[ix] + kyz2;
                if (k2 > 0.0) spec[idx] /= k2;
            }
        }
    }
    fft::inverse(g, spec.data());
    RealScalarField out(g);
    extract_real(spec, out.v);
    return out;
}

std::array<SpinorField, 3> spinor_gradient(const SpinorField& psi) {
    check_finite(psi, "spinor_gradient");
    const Grid& g = psi.grid;
    std::array<SpinorField, 3> out{SpinorField(g), SpinorField(g), SpinorField(g)};
    for (int s = 0; s < 2; ++s) {
        buffer spec = psi.comp[s];
        fft::forward(g, spec.data());
        for (int a = 0; a < 3; ++a) {
            buffer d = spec;
            apply_ik(g, a, d);
            fft::inverse(g, d.data());
            out[a].comp[s] = std::move(d);
        }
    }
    return out;
}

SpinorField spinor_derivative(const SpinorField& psi, int axis) {
    check_finite(psi, "spinor_derivative");
    if (axis < 0 || axis > 2)
        throw std::invalid_argument("spinor_derivative: axis out of range");
    const Grid& g = psi.grid;
    SpinorField out(g);
    for (int s = 0; s < 2; ++s) {
        buffer spec = psi.comp[s];
        fft::forward(g, spec.data());
        apply_ik(g, axis, spec);
        fft::inverse(g, spec.data());
        out.comp[s] = std::move(spec);
    }
    return out;
}

SpinorField spinor_laplacian(const SpinorField& psi) {
    check_finite(psi, "spinor_laplacian");
    const Grid& g = psi.grid;
    SpinorField out(g);
    for (int s = 0; s < 2; ++s) {
        buffer spec = psi.comp[s];
        fft::forward(g, spec.data());
        apply_minus_k2(g, spec);
        fft::inverse(g, spec.data());
        out.comp[s] = std::move(spec);
    }
    return out;
}

namespace {

void band_limit_buffer(const Grid& g, double frac, buffer& spec) {
    const auto& n = g.n();
    std::size_t idx = 0;
    for (int iz = 0; iz < n[2]; ++iz) {
        const bool cz = std::abs(g.mode(2, iz)) > frac * (n[2] / 2.0);
        for (int iy = 0; iy < n[1]; ++iy) {
            const bool cy = cz || std::abs(g.mode(1, iy)) > frac * (n[1] / 2.0);
            for (int ix = 0; ix < n[0]; ++ix, ++idx) {
                if (cy || std::abs(g.mode(0, ix)) > frac * (n[0] / 2.0))
                    spec[idx] = cplx(0.0, 0.0);
            }
        }
    }
}

}  // namespace

void band_limit(RealScalarField& f, double frac) {
    buffer spec = to_complex(f.v);
    fft::forward(f.grid, spec.data());
    band_limit_buffer(f.grid, frac, spec);
    fft::inverse(f.grid, spec.data());
    extract_real(spec, f.v);
}

void band_limit(RealVectorField& f, double frac) {
    for (int a = 0; a < 3; ++a) {
        buffer spec = to_complex(f.comp[a]);
        fft::forward(f.grid, spec.data());
        band_limit_buffer(f.grid, frac, spec);
        fft::inverse(f.grid, spec.data());
        extract_real(spec, f.comp[a]);
    }
}

void band_limit(SpinorField& f, double frac) {
    for (int s = 0; s < 2; ++s) {
        fft::forward(f.grid, f.comp[s].data());
        band_limit_buffer(f.grid, frac, f.comp[s]);
        fft::inverse(f.grid, f.comp[s].data());
    }
}

SpinorField translate(const SpinorField& psi, const std::array<double, 3>& shift) {
    check_finite(psi, "translate");
    const Grid& g = psi.grid;
    SpinorField out(g);
    const auto& n = g.n();
    for (int s = 0; s < 2; ++s) {
        buffer spec = psi.comp[s];
        fft::forward(g, spec.data());
        std::size_t idx = 0;
        for (int iz = 0; iz < n[2]; ++iz)
            for (int iy = 0; iy < n[1]; ++iy)
                for (int ix = 0; ix < n[0]; ++ix, ++idx) {
                    const double phase = g.k_deriv(0)[ix] * shift[0] +
                                         g.k_deriv(1)[iy] * shift[1] +
                                         g.k_deriv(2)[iz] * shift[2];
                    spec[idx] *= cplx(std::cos(phase), -std::sin(phase));
                }
        fft::inverse(g, spec.data());
        out.comp[s] = std::move(spec);
    }
    return out;
}

}  // namespace pmx::spectral
