#pragma once

#include <complex>

namespace snsmix {

// Thin cache over FFTW c2c 2D plans. Plans are created lazily per grid size
// under a mutex (the FFTW planner is not thread-safe) with FFTW_UNALIGNED so
// they can execute on arbitrary caller buffers; execution is thread-safe.
namespace fft {

/// In-place unnormalized forward DFT (e^{-i k.x} convention), n x n row-major.
void forward(int n, std::complex<double>* data);

/// In-place unnormalized inverse DFT (e^{+i k.x} convention), n x n row-major.
void inverse(int n, std::complex<double>* data);

}  // namespace fft
}  // namespace snsmix
