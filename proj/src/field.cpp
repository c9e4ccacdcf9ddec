#include "pmx/field.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace pmx {

void check_same_grid(const Grid& a, const Grid& b, const char* what) {
    if (a != b)
        throw std::invalid_argument(std::string(what) + ": fields live on different grids");
}

cplx l2_inner(const SpinorField& a, const SpinorField& b) {
    check_same_grid(a.grid, b.grid, "l2_inner");
    Accum re, im;
    for (int s = 0; s < 2; ++s) {
        const auto& ac = a.comp[s];
        const auto& bc = b.comp[s];
        for (std::size_t i = 0; i < ac.size(); ++i) {
            const cplx t = std::conj(ac[i]) * bc[i];
            re.add(t.real());
            im.add(t.imag());
        }
    }
    const double dV = a.grid.cell_volume();
    return cplx(re.get() * dV, im.get() * dV);
}

double norm2(const SpinorField& psi) {
    Accum acc;
    for (int s = 0; s < 2; ++s)
        for (const cplx& z : psi.comp[s]) acc.add(std::norm(z));
    return acc.get() * psi.grid.cell_volume();
}

double l2_norm(const RealScalarField& f) {
    Accum acc;
    for (double x : f.v) acc.add(x * x);
    return std::sqrt(acc.get() * f.grid.cell_volume());
}

double l2_norm(const RealVectorField& f) {
    Accum acc;
    for (const auto& c : f.comp)
        for (double x : c) acc.add(x * x);
    return std::sqrt(acc.get() * f.grid.cell_volume());
}

double mean(const RealScalarField& f) {
    Accum acc;
    for (double x : f.v) acc.add(x);
    return acc.get() / static_cast<double>(f.grid.size());
}

double integral(const RealScalarField& f) {
    Accum acc;
    for (double x : f.v) acc.add(x);
    return acc.get() * f.grid.cell_volume();
}

double max_abs(const RealScalarField& f) {
    double m = 0.0;
    for (double x : f.v) m = std::max(m, std::abs(x));
    return m;
}

double max_abs(const RealVectorField& f) {
    double m = 0.0;
    const std::size_t n = f.grid.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double r2 = f.comp[0][i] * f.comp[0][i] + f.comp[1][i] * f.comp[1][i] +
                          f.comp[2][i] * f.comp[2][i];
        m = std::max(m, r2);
    }
    return std::sqrt(m);
}

void check_finite(const RealScalarField& f, const char* what) {
    for (double x : f.v)
        if (!std::isfinite(x))
            throw std::domain_error(std::string(what) + ": non-finite field value");
}

void check_finite(const RealVectorField& f, const char* what) {
    for (const auto& c : f.comp)
        for (double x : c)
            if (!std::isfinite(x))
                throw std::domain_error(std::string(what) + ": non-finite field value");
}

void check_finite(const SpinorField& f, const char* what) {
    if (!all_finite(f))
        throw std::domain_error(std::string(what) + ": non-finite field value");
}

bool all_finite(const SpinorField& f) {
    for (const auto& c : f.comp)
        for (const cplx& z : c)
            if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
    return true;
}

void axpy(double a, const RealScalarField& x, RealScalarField& y) {
    check_same_grid(x.grid, y.grid, "axpy");
    for (std::size_t i = 0; i < x.v.size(); ++i) y.v[i] += a * x.v[i];
}

void axpy(double a, const RealVectorField& x, RealVectorField& y) {
    check_same_grid(x.grid, y.grid, "axpy");
    for (int c = 0; c < 3; ++c)
        for (std::size_t i = 0; i < x.comp[c].size(); ++i) y.comp[c][i] += a * x.comp[c][i];
}

void axpy(const cplx& a, const SpinorField& x, SpinorField& y) {
    check_same_grid(x.grid, y.grid, "axpy");
    for (int s = 0; s < 2; ++s)
        for (std::size_t i = 0; i < x.comp[s].size(); ++i) y.comp[s][i] += a * x.comp[s][i];
}

void scale(double a, SpinorField& x) {
    for (auto& c : x.comp)
        for (cplx& z : c) z *= a;
}

void scale(double a, RealScalarField& x) {
    for (double& v : x.v) v *= a;
}

void scale(double a, RealVectorField& x) {
    for (auto& c : x.comp)
        for (double& v : c) v *= a;
}

}  // namespace pmx
