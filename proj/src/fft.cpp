#include "pmx/fft.hpp"

#include <fftw3.h>

#include <array>
#include <map>
#include <mutex>

namespace pmx::fft {
namespace {

struct PlanPair {
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
};

/// Plan pool keyed by grid shape.  FFTW stores dimensions slowest-first, and
/// our layout is x-fastest, so the plan is created as (nz, ny, nx).
class PlanCache {
public:
    static PlanCache& instance() {
        static PlanCache cache;
        return cache;
    }

    PlanPair get(const std::array<int, 3>& n) {
        std::lock_guard<std::mutex> lock(mu_);
        auto it = plans_.find(n);
        if (it != plans_.end()) return it->second;

        // A private buffer is used only at planning time; execution rebinds
        // the caller's buffer through fftw_execute_dft.
        const std::size_t count = static_cast<std::size_t>(n[0]) * n[1] * n[2];
        fftw_complex* buf = fftw_alloc_complex(count);
        PlanPair p;
        const unsigned flags = FFTW_ESTIMATE | FFTW_UNALIGNED;
        p.fwd = fftw_plan_dft_3d(n[2], n[1], n[0], buf, buf, FFTW_FORWARD, flags);
        p.bwd = fftw_plan_dft_3d(n[2], n[1], n[0], buf, buf, FFTW_BACKWARD, flags);
        fftw_free(buf);
        plans_[n] = p;
        return p;
    }

private:
    std::mutex mu_;
    std::map<std::array<int, 3>, PlanPair> plans_;
};

}  // namespace

void forward(const Grid& g, std::complex<double>* data) {
    PlanPair p = PlanCache::instance().get(g.n());
    auto* d = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(p.fwd, d, d);
}

void inverse(const Grid& g, std::complex<double>* data) {
    PlanPair p = PlanCache::instance().get(g.n());
    auto* d = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(p.bwd, d, d);
    const double inv_n = 1.0 / static_cast<double>(g.size());
    const std::size_t count = g.size();
    for (std::size_t i = 0; i < count; ++i) data[i] *= inv_n;
}

}  // namespace pmx::fft
