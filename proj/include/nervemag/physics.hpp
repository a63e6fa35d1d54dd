#ifndef NERVEMAG_PHYSICS_HPP
#define NERVEMAG_PHYSICS_HPP

#include <cstdint>

// Physical constants, vapor-cell ensemble bookkeeping and the magnetometer
// operating parameters shared by the simulation and analysis modules.
// All quantities are strict SI unless a suffix says otherwise.

namespace nervemag {

namespace constants {

// Cesium F=4 gyromagnetic ratio, rad/(s*T).
inline constexpr double gyromagnetic_ratio = 2.20e10;

// Vacuum permeability, T*m/A.
inline constexpr double mu0 = 4.0e-7 * 3.14159265358979323846;

// Boltzmann constant, J/K.
inline constexpr double boltzmann = 1.380649e-23;

}  // namespace constants

/// Larmor angular frequency for a bias field B_x, rad/s.
/// Throws std::invalid_argument for negative fields.
double larmor_frequency(double bias_field_tesla);

/// Inverse of larmor_frequency: bias field producing a given angular
/// frequency.
double bias_field_for_larmor(double omega_rad_per_s);

/// Total collective spin J_x = 4 * p * N_A for a spherical cell.
/// density in atoms/m^3, diameter in m, polarization in [0, 1].
double ensemble_spin(double density, double diameter, double polarization);

/// Saturated cesium vapor density at a cell temperature in [0, 60] C.
/// Standard vapor-pressure fit rescaled to 3.6e16 m^-3 at 22 C.
double density_at_temperature(double t_celsius);

// Spin-polarized vapor ensemble in a spherical cell.
struct AtomEnsemble {
  double density = 3.6e16;             // atoms/m^3
  double cell_inner_diameter = 5.3e-3; // m
  double polarization = 1.0;           // [0, 1]

  double cell_volume() const; // m^3, sphere from inner diameter
  double atom_count() const;
  double total_spin() const;  // J_x, dimensionless spin units

  void validate() const;

  // Room-temperature cell used throughout: 3.6e16 m^-3, 5.3 mm, p = 1.
  static AtomEnsemble reference_cell();
};

// Operating point of the magnetometer. larmor_omega is always
// gamma * bias_field; construct through from_bias_field or from_larmor.
struct MagnetometerConfig {
  double bias_field = 0.0;       // T
  double larmor_omega = 0.0;     // rad/s
  double relaxation_rate = 0.0;  // Gamma = 1/T2, 1/s
  double readout_coupling = 1.0; // a*S_x product, signal units per spin unit

  // White polarimeter readout noise, one-sided PSD in signal^2/Hz.
  double shot_noise_psd = 0.0;
  // Low-frequency classical noise, one-sided PSD value at 1 Hz of a 1/f
  // spectrum in signal^2/Hz. Zero disables it.
  double classical_noise_psd_1hz = 0.0;
  // Pumping-misalignment FID amplitude present identically in both probe
  // windows of the pulsed sequence, spin units on J'_z.
  double misalignment_spin = 0.0;

  static MagnetometerConfig from_bias_field(double bias_field_tesla,
                                            double relaxation_rate_per_s);
  static MagnetometerConfig from_larmor(double omega_rad_per_s,
                                        double relaxation_rate_per_s);

  // Pulsed operating point: 700 Hz Larmor, T2_dark = 15 ms. Noise levels
  // are calibrated so a single A-B shot with the reference_cell ensemble
  // has a Fourier-component floor of 5.7 pT*ms.
  static MagnetometerConfig pulsed_default();

  // Continuous operating point: 410 Hz Larmor, T2 = 0.44 ms, noise levels
  // calibrated to a 360 fT/sqrt(Hz) single-shot sensitivity.
  static MagnetometerConfig continuous_default();

  void validate() const;
};

}  // namespace nervemag

#endif
