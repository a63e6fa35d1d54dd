#ifndef NERVEMAG_METROLOGY_HPP
#define NERVEMAG_METROLOGY_HPP

#include <cstdint>
#include <string>

// Closed-form quantum-limit calculators and derived physiological
// estimators with first-order Gaussian uncertainty propagation. All
// quantities carry SI unit tags; mismatched units are construction errors.

namespace nervemag {

// SI dimension signature. Exponents are stored doubled so half-integer
// powers (per-root-hertz quantities) stay exact.
struct Unit {
  std::int8_t metre2 = 0;
  std::int8_t kilogram2 = 0;
  std::int8_t second2 = 0;
  std::int8_t ampere2 = 0;

  friend bool operator==(const Unit&, const Unit&) = default;
  Unit operator*(const Unit& rhs) const;
  Unit operator/(const Unit& rhs) const;
  std::string to_string() const;
};

namespace units {
inline constexpr Unit dimensionless{};
inline constexpr Unit metre{2, 0, 0, 0};
inline constexpr Unit second{0, 0, 2, 0};
inline constexpr Unit ampere{0, 0, 0, 2};
inline constexpr Unit tesla{0, 2, -4, -2};
inline constexpr Unit tesla_second{0, 2, -2, -2};
inline constexpr Unit metre_per_second{2, 0, -2, 0};
// T/sqrt(Hz) = T * s^(1/2)
inline constexpr Unit tesla_per_sqrt_hz{0, 2, -3, -2};
}  // namespace units

// value(sigma) pair with a unit tag. Arithmetic propagates uncertainty to
// first order assuming independent inputs.
struct Measurement {
  double value = 0.0;
  double sigma = 0.0;
  Unit unit = units::dimensionless;

  Measurement() = default;
  Measurement(double value, double sigma, Unit unit);

  Measurement operator+(const Measurement& rhs) const; // units must match
  Measurement operator-(const Measurement& rhs) const;
  Measurement operator*(const Measurement& rhs) const;
  Measurement operator/(const Measurement& rhs) const;
  Measurement operator*(double scalar) const;

  /// Compact value(sigma) display: sigma rounded to one significant
  /// digit (never carried into the next decade), value rounded to the same
  /// decimal place.
  std::string to_display_string() const;
};

/// Projection-noise limit on the pulsed Fourier component,
/// 1/(gamma*sqrt(2*J_x)), in T*s.
Measurement pn_pulsed_fourier(double total_spin);

/// Projection-noise limit on the amplitude of a sinusoidal field of
/// duration tau, 1/(gamma*sqrt(J_x/2)*tau), in T.
Measurement pn_amplitude(double total_spin, double tau);

/// Projection-noise limited continuous sensitivity,
/// 1/(gamma*sqrt(T2*J_x/2)), in T/sqrt(Hz).
Measurement pn_sensitivity_continuous(double total_spin, double t2);

/// Conduction velocity distance/delta_t with first-order propagation.
Measurement conduction_velocity(const Measurement& distance,
                                const Measurement& delta_t);

// Decomposition of a total uncertainty into projection-noise, photon-shot
// and classical contributions. Variance fractions sum to one.
struct NoiseBudget {
  double total = 0.0;              // same units as the inputs
  double pn_amplitude = 0.0;
  double shot_amplitude = 0.0;
  double classical_amplitude = 0.0;
  double pn_amplitude_fraction = 0.0; // pn/total, amplitude ratio
  double pn_variance_fraction = 0.0;
  double shot_variance_fraction = 0.0;
  double classical_variance_fraction = 0.0;
};

/// Splits total into PN (given), shot (given variance fraction) and the
/// classical remainder. Throws if the stated components exceed the total
/// in quadrature.
NoiseBudget noise_budget(double total, double pn, double shot_fraction);

}  // namespace nervemag

#endif
