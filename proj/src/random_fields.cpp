#include "pmx/random_fields.hpp"

#include <cmath>
#include <random>

#include "pmx/spectral.hpp"

namespace pmx {

RealScalarField random_scalar(const Grid& g, std::uint64_t seed, double amplitude,
                              double frac) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    RealScalarField f(g);
    for (double& x : f.v) x = dist(rng);
    spectral::band_limit(f, frac);
    const double m = max_abs(f);
    if (m > 0.0) scale(amplitude / m, f);
    return f;
}

RealVectorField random_vector(const Grid& g, std::uint64_t seed, double amplitude,
                              double frac) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    RealVectorField f(g);
    for (auto& c : f.comp)
        for (double& x : c) x = dist(rng);
    spectral::band_limit(f, frac);
    const double m = max_abs(f);
    if (m > 0.0) scale(amplitude / m, f);
    return f;
}

SpinorField random_spinor(const Grid& g, std::uint64_t seed, double frac) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> dist(0.0, 1.0);
    SpinorField psi(g);
    for (auto& c : psi.comp)
        for (cplx& z : c) z = cplx(dist(rng), dist(rng));
    spectral::band_limit(psi, frac);
    const double n = std::sqrt(norm2(psi));
    if (n > 0.0) scale(1.0 / n, psi);
    return psi;
}

}  // namespace pmx
