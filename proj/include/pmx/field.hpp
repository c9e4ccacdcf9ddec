#pragma once

#include <array>
#include <complex>
#include <vector>

#include "pmx/grid.hpp"

namespace pmx {

using cplx = std::complex<double>;

/// Compensated (Neumaier) accumulator.  All grid reductions go through this so
/// results are both accurate and bit-reproducible between identical runs.
struct Accum {
    double sum = 0.0;
    double comp = 0.0;
    void add(double x) {
        const double t = sum + x;
        if (std::abs(sum) >= std::abs(x))
            comp += (sum - t) + x;
        else
            comp += (x - t) + sum;
        sum = t;
    }
    double get() const { return sum + comp; }
};

struct RealScalarField {
    Grid grid;
    std::vector<double> v;

    RealScalarField() = default;
    explicit RealScalarField(const Grid& g) : grid(g), v(g.size(), 0.0) {}
};

struct RealVectorField {
    Grid grid;
    std::array<std::vector<double>, 3> comp;

    RealVectorField() = default;
    explicit RealVectorField(const Grid& g) : grid(g) {
        for (auto& c : comp) c.assign(g.size(), 0.0);
    }
};

/// Two-component spinor field; components stored as consecutive full-grid
/// blocks (component-major), each x-fastest.
struct SpinorField {
    Grid grid;
    std::array<std::vector<cplx>, 2> comp;

    SpinorField() = default;
    explicit SpinorField(const Grid& g) : grid(g) {
        for (auto& c : comp) c.assign(g.size(), cplx(0.0, 0.0));
    }
};

struct Orbital {
    SpinorField psi;
    double occupation = 1.0;
};

/// Occupation-weighted collection of orbitals on a common grid.
struct OrbitalSet {
    std::vector<Orbital> orbitals;

    const Grid& grid() const { return orbitals.at(0).psi.grid; }
    std::size_t size() const { return orbitals.size(); }
};

// ---- reductions ------------------------------------------------------------

/// L2 inner product <a|b> = sum conj(a).b dV (both spinor components).
/// Throws std::invalid_argument on grid mismatch.
cplx l2_inner(const SpinorField& a, const SpinorField& b);

/// Squared L2 norm, <psi|psi>.
double norm2(const SpinorField& psi);

double l2_norm(const RealScalarField& f);
double l2_norm(const RealVectorField& f);

/// Mean value over the grid.
double mean(const RealScalarField& f);

/// Integral over the box, sum(f) dV.
double integral(const RealScalarField& f);

double max_abs(const RealScalarField& f);
double max_abs(const RealVectorField& f);

// ---- elementwise helpers ---------------------------------------------------

void check_same_grid(const Grid& a, const Grid& b, const char* what);

/// Throws std::domain_error if any entry is not finite.
void check_finite(const RealScalarField& f, const char* what);
void check_finite(const RealVectorField& f, const char* what);
void check_finite(const SpinorField& f, const char* what);
bool all_finite(const SpinorField& f);

/// y += a * x
void axpy(double a, const RealScalarField& x, RealScalarField& y);
void axpy(double a, const RealVectorField& x, RealVectorField& y);
void axpy(const cplx& a, const SpinorField& x, SpinorField& y);

void scale(double a, SpinorField& x);
void scale(double a, RealScalarField& x);
void scale(double a, RealVectorField& x);

}  // namespace pmx
