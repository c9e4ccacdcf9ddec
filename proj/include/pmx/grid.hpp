#pragma once

#include <array>
#include <cstddef>
#include <vector>

namespace pmx {

/// Uniform periodic grid over a rectangular box.  Storage order is x-fastest:
/// idx = ix + nx * (iy + ny * iz).
///
/// Wavenumber tables are built once at construction with the symmetric range
/// k = 2*pi*m/L, m in (-n/2, n/2].  Two tables are kept per axis:
///  - k_deriv: for odd-order derivatives; the unpaired Nyquist mode of an
///    even-sized axis is zeroed (the interpolation derivative of the real
///    Nyquist cosine vanishes at the nodes, and this keeps real fields real).
///  - k_full: for the Laplacian and Poisson inverse (squared, so the Nyquist
///    sign is irrelevant).
class Grid {
public:
    Grid() = default;
    Grid(std::array<int, 3> n, std::array<double, 3> box);

    const std::array<int, 3>& n() const { return n_; }
    const std::array<double, 3>& box() const { return box_; }

    std::size_t size() const {
        return static_cast<std::size_t>(n_[0]) * n_[1] * n_[2];
    }
    double volume() const { return box_[0] * box_[1] * box_[2]; }
    double cell_volume() const { return volume() / static_cast<double>(size()); }
    double spacing(int axis) const { return box_[axis] / n_[axis]; }

    std::size_t index(int ix, int iy, int iz) const {
        return static_cast<std::size_t>(ix) +
               static_cast<std::size_t>(n_[0]) *
                   (static_cast<std::size_t>(iy) +
                    static_cast<std::size_t>(n_[1]) * static_cast<std::size_t>(iz));
    }

    /// Coordinate of node i along axis, in [0, L).
    double coord(int axis, int i) const { return spacing(axis) * i; }

    const std::vector<double>& k_deriv(int axis) const { return k_deriv_[axis]; }
    const std::vector<double>& k_full(int axis) const { return k_full_[axis]; }

    /// Integer mode index m in (-n/2, n/2] for grid index i along axis.
    int mode(int axis, int i) const {
        const int nn = n_[axis];
        return (i <= nn / 2) ? i : i - nn;
    }

    bool operator==(const Grid& other) const {
        return n_ == other.n_ && box_ == other.box_;
    }
    bool operator!=(const Grid& other) const { return !(*this == other); }

private:
    std::array<int, 3> n_{0, 0, 0};
    std::array<double, 3> box_{0.0, 0.0, 0.0};
    std::array<std::vector<double>, 3> k_deriv_;
    std::array<std::vector<double>, 3> k_full_;
};

}  // namespace pmx
