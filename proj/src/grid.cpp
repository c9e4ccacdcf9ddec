#include "pmx/grid.hpp"

#include <cmath>
#include <stdexcept>

namespace pmx {

Grid::Grid(std::array<int, 3> n, std::array<double, 3> box) : n_(n), box_(box) {
    for (int a = 0; a < 3; ++a) {
        if (n_[a] < 1) throw std::invalid_argument("Grid: axis size must be >= 1");
        if (!(box_[a] > 0.0)) throw std::invalid_argument("Grid: box length must be > 0");
        const int nn = n_[a];
        const double dk = 2.0 * M_PI / box_[a];
        k_deriv_[a].resize(nn);
        k_full_[a].resize(nn);
        for (int i = 0; i < nn; ++i) {
            const int m = (i <= nn / 2) ? i : i - nn;
            k_full_[a][i] = dk * m;
            const bool nyquist = (nn % 2 == 0) && (i == nn / 2);
            k_deriv_[a][i] = nyquist ? 0.0 : dk * m;
        }
    }
}

}  // namespace pmx
