#include "snsmix/fft.hpp"

#include <fftw3.h>

#include <map>
#include <mutex>

namespace snsmix {
namespace fft {
namespace {

struct PlanPair {
    fftw_plan fwd = nullptr;
    fftw_plan bwd = nullptr;
};

std::mutex g_mutex;
std::map<int, PlanPair>& plan_cache() {
    static std::map<int, PlanPair> cache;
    return cache;
}

PlanPair& plans_for(int n) {
    std::lock_guard<std::mutex> lock(g_mutex);
    auto& cache = plan_cache();
    auto it = cache.find(n);
    if (it != cache.end()) return it->second;

    // Scratch buffer only used during planning; FFTW_UNALIGNED makes the plan
    // valid for any buffer handed to fftw_execute_dft later.
    fftw_complex* tmp = fftw_alloc_complex(static_cast<size_t>(n) * n);
    PlanPair p;
    p.fwd = fftw_plan_dft_2d(n, n, tmp, tmp, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    p.bwd = fftw_plan_dft_2d(n, n, tmp, tmp, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(tmp);
    return cache.emplace(n, p).first->second;
}

}  // namespace

void forward(int n, std::complex<double>* data) {
    auto* d = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(plans_for(n).fwd, d, d);
}

void inverse(int n, std::complex<double>* data) {
    auto* d = reinterpret_cast<fftw_complex*>(data);
    fftw_execute_dft(plans_for(n).bwd, d, d);
}

}  // namespace fft
}  // namespace snsmix
