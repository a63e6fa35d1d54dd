#ifndef NERVEMAG_DSP_HPP
#define NERVEMAG_DSP_HPP

#include <span>
#include <string>
#include <vector>

#include "nervemag/field.hpp"
#include "nervemag/spin_sim.hpp"

// Signal recovery: PSD estimation, free-induction-decay fitting,
// calibration scaling, regularized deconvolution, shot averaging and SNR.

namespace nervemag {

// One-sided power spectral density on the grid f_k = k/T. Interior bins
// carry the negative-frequency power (factor 2), so the rectangular-window
// sum psd * df equals the mean power of the series.
struct Spectrum {
  std::vector<double> frequency_hz;
  std::vector<double> psd; // signal^2/Hz (or T^2/Hz after calibration)
  double window_length = 0.0; // s

  double df() const { return 1.0 / window_length; }
  /// Index of the largest non-DC bin; lowest frequency wins ties.
  std::size_t peak_bin() const;
  /// Nearest bin to a frequency in Hz.
  std::size_t bin_at(double frequency_hz) const;
};

/// Periodogram (1/T)|sum x_k exp(-i w t_k) dt|^2, one-sided, no taper.
Spectrum psd(std::span<const double> x, double dt);

/// PSD of the first window_s seconds of a record (whole record if the
/// window is longer).
Spectrum psd(const DetectionRecord& record, double window_s);

// Damped-sinusoid fit S(t) = A sin(Omega t + theta) exp(-Gamma t).
// Failure is a value: check ok before using the parameters.
struct FidFit {
  bool ok = false;
  std::string message;
  double amplitude = 0.0;     // A
  double omega = 0.0;         // rad/s
  double phase = 0.0;         // theta in [-pi, pi)
  double decay_rate = 0.0;    // Gamma, 1/s
  double residual_norm = 0.0; // rms residual
};

/// Nonlinear least-squares FID fit. Initial guesses come from the PSD
/// argmax, a log-envelope decay fit and the first-sample quadrature.
FidFit fit_fid(const DetectionRecord& record);

// Conversion between PSD-peak units and field units, anchored to a stored
// calibration measurement.
struct CalibrationScale {
  double factor = 0.0;            // T*s per sqrt(PSD) unit
  double reference_fourier = 0.0; // T*s, Fourier component of the cal field
  double peak_frequency_hz = 0.0;
  std::size_t peak_bin = 0;
  double window_s = 0.0;
};

/// Pulsed-mode calibration: factor = cal_fourier / sqrt(peak PSD).
/// Throws if the calibration record has a vanishing peak.
CalibrationScale calibrate_pulsed(const DetectionRecord& cal_record,
                                  double cal_fourier, double window_s);

/// Fourier-component magnitude of a measurement record in T*s, using the
/// calibration's window and peak bin.
double measure_fourier(const CalibrationScale& scale,
                       const DetectionRecord& record);

// Continuous-mode calibration: fit of the record to the convolution of a
// known applied field with the magnetometer response.
struct ContinuousCalibration {
  bool ok = false;
  std::string message;
  double omega = 0.0;      // rad/s
  double decay_rate = 0.0; // 1/s
  double gain = 0.0;       // signal units per tesla
  double residual_norm = 0.0;
};

ContinuousCalibration calibrate_continuous(const DetectionRecord& record,
                                           const FieldWaveform& applied);

/// Noiseless convolution of a field waveform with the continuous-mode
/// response kernel (sin for z-axis fields, -cos for y).
DetectionRecord convolve_response(const FieldWaveform& field, double omega,
                                  double decay_rate, double gain);

/// Wiener-regularized deconvolution of a continuous record by the response
/// kernel, low-passed at lowpass_hz. lambda_rel scales the regularization
/// relative to max|H|^2; zero is rejected when the kernel has near-zero
/// bins. gain converts signal units back to tesla.
FieldWaveform deconvolve(const DetectionRecord& record, double omega,
                         double decay_rate, double lambda_rel,
                         double lowpass_hz, double gain,
                         FieldAxis axis = FieldAxis::z);

/// Pointwise mean of records on identical grids.
DetectionRecord average_shots(const std::vector<DetectionRecord>& records);

/// signal metric / noise standard deviation; zero noise rejected.
double snr(double signal_metric, double noise_std);

/// CSV (freq_hz,psd) with a one-line header.
void save_spectrum_csv(const Spectrum& spectrum, const std::string& path);

}  // namespace nervemag

#endif
