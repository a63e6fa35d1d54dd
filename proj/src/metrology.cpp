#include "nervemag/metrology.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "nervemag/physics.hpp"

namespace nervemag {

Unit Unit::operator*(const Unit& rhs) const {
  return Unit{static_cast<std::int8_t>(metre2 + rhs.metre2),
              static_cast<std::int8_t>(kilogram2 + rhs.kilogram2),
              static_cast<std::int8_t>(second2 + rhs.second2),
              static_cast<std::int8_t>(ampere2 + rhs.ampere2)};
}

Unit Unit::operator/(const Unit& rhs) const {
  return Unit{static_cast<std::int8_t>(metre2 - rhs.metre2),
              static_cast<std::int8_t>(kilogram2 - rhs.kilogram2),
              static_cast<std::int8_t>(second2 - rhs.second2),
              static_cast<std::int8_t>(ampere2 - rhs.ampere2)};
}

namespace {

void append_power(std::string& out, const char* symbol, int doubled) {
  if (doubled == 0) return;
  if (!out.empty()) out += "*";
  out += symbol;
  if (doubled == 2) return;
  char buf[16];
  if (doubled % 2 == 0)
    std::snprintf(buf, sizeof buf, "^%d", doubled / 2);
  else
    std::snprintf(buf, sizeof buf, "^(%d/2)", doubled);
  out += buf;
}

}  // namespace

std::string Unit::to_string() const {
  if (*this == units::tesla) return "T";
  if (*this == units::tesla_second) return "T*s";
  if (*this == units::tesla_per_sqrt_hz) return "T/sqrt(Hz)";
  if (*this == units::metre_per_second) return "m/s";
  std::string out;
  append_power(out, "m", metre2);
  append_power(out, "kg", kilogram2);
  append_power(out, "s", second2);
  append_power(out, "A", ampere2);
  return out.empty() ? "1" : out;
}

Measurement::Measurement(double value, double sigma, Unit unit)
    : value(value), sigma(sigma), unit(unit) {
  if (sigma < 0.0)
    throw std::invalid_argument("Measurement: negative uncertainty");
}

Measurement Measurement::operator+(const Measurement& rhs) const {
  if (unit != rhs.unit)
    throw std::invalid_argument("Measurement: unit mismatch in addition");
  return {value + rhs.value, std::hypot(sigma, rhs.sigma), unit};
}

Measurement Measurement::operator-(const Measurement& rhs) const {
  if (unit != rhs.unit)
    throw std::invalid_argument("Measurement: unit mismatch in subtraction");
  return {value - rhs.value, std::hypot(sigma, rhs.sigma), unit};
}

Measurement Measurement::operator*(const Measurement& rhs) const {
  const double v = value * rhs.value;
  const double rel = std::hypot(value != 0.0 ? sigma / value : 0.0,
                                rhs.value != 0.0 ? rhs.sigma / rhs.value : 0.0);
  return {v, std::abs(v) * rel, unit * rhs.unit};
}

Measurement Measurement::operator/(const Measurement& rhs) const {
  if (rhs.value == 0.0)
    throw std::invalid_argument("Measurement: division by zero value");
  const double v = value / rhs.value;
  const double rel = std::hypot(value != 0.0 ? sigma / value : 0.0,
                                rhs.sigma / rhs.value);
  return {v, std::abs(v) * rel, unit / rhs.unit};
}

Measurement Measurement::operator*(double scalar) const {
  return {value * scalar, sigma * std::abs(scalar), unit};
}

std::string Measurement::to_display_string() const {
  char buf[96];
  const std::string u = unit.to_string();
  if (sigma <= 0.0) {
    std::snprintf(buf, sizeof buf, "%g %s", value, u.c_str());
    return buf;
  }
  // One significant digit for sigma; never carry into the next decade
  // (9.7 stays 9, not 10), matching how the source values are quoted.
  const double exponent = std::floor(std::log10(sigma));
  const double decade = std::pow(10.0, exponent);
  int digit = static_cast<int>(std::llround(sigma / decade));
  digit = std::min(digit, 9);
  const double rounded_value = std::round(value / decade) * decade;
  const int decimals = exponent < 0 ? static_cast<int>(-exponent) : 0;
  if (exponent >= 1.0) {
    std::snprintf(buf, sizeof buf, "%.0f(%.0f) %s", rounded_value,
                  digit * decade, u.c_str());
  } else {
    std::snprintf(buf, sizeof buf, "%.*f(%d) %s", decimals, rounded_value,
                  digit, u.c_str());
  }
  return buf;
}

Measurement pn_pulsed_fourier(double total_spin) {
  if (total_spin <= 0.0)
    throw std::invalid_argument("pn_pulsed_fourier: nonpositive J_x");
  const double value =
      1.0 / (constants::gyromagnetic_ratio * std::sqrt(2.0 * total_spin));
  return {value, 0.0, units::tesla_second};
}

Measurement pn_amplitude(double total_spin, double tau) {
  if (total_spin <= 0.0 || tau <= 0.0)
    throw std::invalid_argument("pn_amplitude: nonpositive input");
  const double value = 1.0 / (constants::gyromagnetic_ratio *
                              std::sqrt(0.5 * total_spin) * tau);
  return {value, 0.0, units::tesla};
}

Measurement pn_sensitivity_continuous(double total_spin, double t2) {
  if (total_spin <= 0.0 || t2 <= 0.0)
    throw std::invalid_argument("pn_sensitivity_continuous: nonpositive input");
  const double value = 1.0 / (constants::gyromagnetic_ratio *
                              std::sqrt(t2 * 0.5 * total_spin));
  return {value, 0.0, units::tesla_per_sqrt_hz};
}

Measurement conduction_velocity(const Measurement& distance,
                                const Measurement& delta_t) {
  if (distance.unit != units::metre)
    throw std::invalid_argument("conduction_velocity: distance must be in m");
  if (delta_t.unit != units::second)
    throw std::invalid_argument("conduction_velocity: delta_t must be in s");
  if (delta_t.value <= 0.0)
    throw std::invalid_argument("conduction_velocity: nonpositive delta_t");
  return distance / delta_t;
}

NoiseBudget noise_budget(double total, double pn, double shot_fraction) {
  if (total <= 0.0)
    throw std::invalid_argument("noise_budget: nonpositive total");
  if (pn < 0.0 || shot_fraction < 0.0)
    throw std::invalid_argument("noise_budget: negative component");
  NoiseBudget b;
  b.total = total;
  b.pn_amplitude = pn;
  b.pn_amplitude_fraction = pn / total;
  b.pn_variance_fraction = (pn / total) * (pn / total);
  b.shot_variance_fraction = shot_fraction;
  const double classical_var =
      1.0 - b.pn_variance_fraction - b.shot_variance_fraction;
  if (classical_var < -1e-12)
    throw std::invalid_argument(
        "noise_budget: components exceed the total in quadrature");
  b.classical_variance_fraction = std::max(0.0, classical_var);
  b.shot_amplitude = total * std::sqrt(b.shot_variance_fraction);
  b.classical_amplitude = total * std::sqrt(b.classical_variance_fraction);
  return b;
}

}  // namespace nervemag
