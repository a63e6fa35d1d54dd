#ifndef NERVEMAG_FIELD_HPP
#define NERVEMAG_FIELD_HPP

#include <complex>
#include <string>
#include <vector>

// Transverse magnetic-field waveforms seen by the magnetometer, their
// Fourier-component analysis, and the infinite-wire nerve-current model.

namespace nervemag {

enum class FieldAxis { y, z };

// Uniformly sampled transverse field B(t). Sample i sits at the midpoint
// of its cell: t_i = start_time + (i + 1/2) * dt. Integrals over the
// waveform are midpoint Riemann sums on this grid.
struct FieldWaveform {
  std::vector<double> samples; // tesla
  double dt = 1e-5;            // s
  double start_time = 0.0;     // s
  FieldAxis axis = FieldAxis::z;

  double duration() const { return static_cast<double>(samples.size()) * dt; }
  double sample_time(std::size_t i) const {
    return start_time + (static_cast<double>(i) + 0.5) * dt;
  }

  void validate() const;
};

// Parameters of the synthetic nerve-impulse template: a biphasic pulse
// (difference of two Gaussian lobes) preceded by a square stimulation
// artifact.
struct NerveTemplateParams {
  double peak_to_peak = 7.0e-12;     // T
  double duration = 2.0e-3;          // s, full width of the biphasic pulse
  double onset = 1.5e-3;             // s, start of the biphasic pulse
  double asymmetry = 0.9;            // second-lobe/first-lobe amplitude ratio
  double artifact_amplitude = 0.0;   // T
  double artifact_duration = 50e-6;  // s
  double artifact_onset = 0.3e-3;    // s, must end before the impulse onset
  double tail = 0.5e-3;              // s of zero field after the pulse

  void validate() const;
};

/// One full period of B0*sin(2*pi*f_cal*t) on the z axis.
/// dt must satisfy dt <= 1/(20*f_cal).
FieldWaveform calibration_waveform(double b0_tesla, double f_cal_hz,
                                   double dt);

/// Fourier component B(omega) = integral B(t) exp(-i*omega*t) dt over the
/// waveform support, in T*s. Midpoint Riemann sum.
std::complex<double> fourier_component(const FieldWaveform& w, double omega);

/// Nerve-impulse template on the given grid spacing.
FieldWaveform nerve_waveform(const NerveTemplateParams& params, double dt);

/// Copy of w rescaled so |B(omega)| equals the target magnitude in T*s.
FieldWaveform scale_to_fourier_component(const FieldWaveform& w, double omega,
                                         double target_magnitude);

/// All-zero waveform of the given duration.
FieldWaveform zero_waveform(double duration, double dt,
                            FieldAxis axis = FieldAxis::z);

/// Field of an infinitely long straight wire: mu0*I/(2*pi*r).
double wire_field(double current_ampere, double distance_m);

/// Current that produces field B at distance r in the wire model.
double invert_wire(double field_tesla, double distance_m);

/// Two-column CSV (time_s,field_T) with a one-line header.
void save_waveform_csv(const FieldWaveform& w, const std::string& path);
FieldWaveform load_waveform_csv(const std::string& path);

}  // namespace nervemag

#endif
