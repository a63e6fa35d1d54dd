#ifndef NERVEMAG_FFT_HPP
#define NERVEMAG_FFT_HPP

#include <complex>
#include <vector>

// Thin FFTW wrappers for real transforms. Not part of the public API.

namespace nervemag::detail {

/// DFT of a real series; returns the n/2+1 non-negative-frequency bins.
std::vector<std::complex<double>> rfft(const std::vector<double>& x);

/// Inverse of rfft, normalized so irfft(rfft(x), x.size()) == x.
std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum,
                          std::size_t n);

}  // namespace nervemag::detail

#endif
