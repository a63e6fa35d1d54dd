#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "nervemag/physics.hpp"

using namespace nervemag;

TEST_CASE("larmor frequency is gamma times field") {
  CHECK(larmor_frequency(0.0) == 0.0);
  CHECK(larmor_frequency(1.0) == constants::gyromagnetic_ratio);
  // 0.2 uT bias gives very nearly 700 Hz precession.
  const double omega = larmor_frequency(0.2e-6);
  CHECK(omega == doctest::Approx(4.4e3));
  CHECK(omega / (2.0 * std::numbers::pi) ==
        doctest::Approx(700.0).epsilon(2e-3));
  // Linearity.
  CHECK(larmor_frequency(3.0 * 0.2e-6) == doctest::Approx(3.0 * omega));
  CHECK_THROWS_AS(larmor_frequency(-1e-6), std::invalid_argument);
}

TEST_CASE("bias field inverts the Larmor relation") {
  const double b = 0.2e-6;
  CHECK(bias_field_for_larmor(larmor_frequency(b)) ==
        doctest::Approx(b).epsilon(1e-12));
  CHECK_THROWS_AS(bias_field_for_larmor(-1.0), std::invalid_argument);
}

TEST_CASE("ensemble spin of the reference cell") {
  const AtomEnsemble ens = AtomEnsemble::reference_cell();
  const double d = 5.3e-3;
  const double volume = std::numbers::pi / 6.0 * d * d * d;
  const double expected = 4.0 * 1.0 * 3.6e16 * volume;
  CHECK(ens.cell_volume() == doctest::Approx(volume).epsilon(1e-12));
  CHECK(ens.atom_count() == doctest::Approx(3.6e16 * volume).epsilon(1e-12));
  CHECK(ens.total_spin() == doctest::Approx(expected).epsilon(1e-12));
  CHECK(ens.total_spin() == doctest::Approx(1.1225e10).epsilon(1e-4));
}

TEST_CASE("ensemble spin scales linearly with polarization and density") {
  AtomEnsemble ens = AtomEnsemble::reference_cell();
  const double full = ens.total_spin();
  ens.polarization = 0.5;
  CHECK(ens.total_spin() == doctest::Approx(0.5 * full).epsilon(1e-12));
  ens.polarization = 0.0;
  CHECK(ens.total_spin() == 0.0);
  ens.polarization = 1.0;
  ens.density *= 2.0;
  CHECK(ens.total_spin() == doctest::Approx(2.0 * full).epsilon(1e-12));
}

TEST_CASE("ensemble validation rejects bad parameters") {
  CHECK_THROWS_AS(ensemble_spin(1e16, 1e-3, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(ensemble_spin(1e16, 1e-3, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(ensemble_spin(-1e16, 1e-3, 1.0), std::invalid_argument);
  AtomEnsemble ens = AtomEnsemble::reference_cell();
  ens.cell_inner_diameter = 0.0;
  CHECK_THROWS_AS(ens.validate(), std::invalid_argument);
}

TEST_CASE("vapor density is anchored at room temperature") {
  CHECK(density_at_temperature(22.0) == doctest::Approx(3.6e16).epsilon(1e-9));
}

TEST_CASE("vapor density increases monotonically with temperature") {
  double prev = density_at_temperature(0.0);
  for (double t = 2.0; t <= 60.0; t += 2.0) {
    const double n = density_at_temperature(t);
    CHECK(n > prev);
    prev = n;
  }
}

TEST_CASE("vapor density at body temperature") {
  // Roughly 4x the room-temperature value; the quoted 1.44e17 carries a
  // 10-15% fit uncertainty.
  const double n37 = density_at_temperature(37.0);
  CHECK(n37 == doctest::Approx(1.44e17).epsilon(0.15));
  // Projection-noise sensitivity improves about twofold.
  const double ratio = std::sqrt(density_at_temperature(22.0) / n37);
  CHECK(ratio == doctest::Approx(0.5).epsilon(0.10));
}

TEST_CASE("vapor density domain is bounded") {
  CHECK_THROWS_AS(density_at_temperature(-5.0), std::invalid_argument);
  CHECK_THROWS_AS(density_at_temperature(80.0), std::invalid_argument);
}

TEST_CASE("magnetometer config construction keeps omega consistent") {
  const MagnetometerConfig cfg = MagnetometerConfig::from_bias_field(
      0.2e-6, 1.0 / 15e-3);
  CHECK(cfg.larmor_omega ==
        doctest::Approx(constants::gyromagnetic_ratio * 0.2e-6));
  const MagnetometerConfig cfg2 =
      MagnetometerConfig::from_larmor(cfg.larmor_omega, cfg.relaxation_rate);
  CHECK(cfg2.bias_field == doctest::Approx(0.2e-6).epsilon(1e-12));

  MagnetometerConfig bad = cfg;
  bad.larmor_omega *= 1.5;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.shot_noise_psd = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
  bad = cfg;
  bad.relaxation_rate = -1.0;
  CHECK_THROWS_AS(bad.validate(), std::invalid_argument);
}

TEST_CASE("zero relaxation is a valid operating point") {
  const MagnetometerConfig cfg = MagnetometerConfig::from_larmor(4.4e3, 0.0);
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("mode defaults target the published operating points") {
  const MagnetometerConfig pulsed = MagnetometerConfig::pulsed_default();
  CHECK(pulsed.larmor_omega ==
        doctest::Approx(2.0 * std::numbers::pi * 700.0));
  CHECK(pulsed.relaxation_rate == doctest::Approx(1.0 / 15e-3));
  CHECK(pulsed.shot_noise_psd > 0.0);
  CHECK(pulsed.classical_noise_psd_1hz > 0.0);

  const MagnetometerConfig cont = MagnetometerConfig::continuous_default();
  CHECK(cont.larmor_omega == doctest::Approx(2.0 * std::numbers::pi * 410.0));
  CHECK(cont.relaxation_rate == doctest::Approx(1.0 / 0.44e-3));
  CHECK_NOTHROW(pulsed.validate());
  CHECK_NOTHROW(cont.validate());
}
