#include "fft.hpp"

#include <fftw3.h>

#include <stdexcept>

namespace nervemag::detail {

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
  const std::size_t n = x.size();
  if (n == 0) throw std::invalid_argument("rfft: empty input");
  std::vector<double> in(x);
  std::vector<std::complex<double>> out(n / 2 + 1);
  fftw_plan plan = fftw_plan_dft_r2c_1d(
      static_cast<int>(n), in.data(),
      reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  return out;
}

std::vector<double> irfft(const std::vector<std::complex<double>>& spectrum,
                          std::size_t n) {
  if (spectrum.size() != n / 2 + 1)
    throw std::invalid_argument("irfft: spectrum size does not match n");
  std::vector<std::complex<double>> in(spectrum);
  std::vector<double> out(n);
  fftw_plan plan = fftw_plan_dft_c2r_1d(
      static_cast<int>(n), reinterpret_cast<fftw_complex*>(in.data()),
      out.data(), FFTW_ESTIMATE);
  fftw_execute(plan);
  fftw_destroy_plan(plan);
  for (double& v : out) v /= static_cast<double>(n);
  return out;
}

}  // namespace nervemag::detail
