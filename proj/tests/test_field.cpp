#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <complex>
#include <cstdio>
#include <numbers>
#include <stdexcept>
#include <string>

#include "nervemag/field.hpp"
#include "nervemag/physics.hpp"

using namespace nervemag;

namespace {
std::string temp_path(const char* name) {
  return std::string("/tmp/nervemag_field_test_") + name;
}
}  // namespace

TEST_CASE("calibration waveform carries B0*pi/Omega at its own frequency") {
  const double b0 = 1e-9, f = 700.0, dt = 1e-5;
  const FieldWaveform w = calibration_waveform(b0, f, dt);
  const double omega = 2.0 * std::numbers::pi * f;
  // |B(Omega)| = B0 * T/2 = B0 * pi / Omega = 0.714 nT*ms.
  const double expected = b0 * std::numbers::pi / omega;
  CHECK(std::abs(fourier_component(w, omega)) ==
        doctest::Approx(expected).epsilon(0.01));
  CHECK(expected == doctest::Approx(0.71e-12).epsilon(0.01));
  // One full period on the grid.
  CHECK(w.samples.size() ==
        static_cast<std::size_t>(std::llround(1.0 / (f * dt))));
}

TEST_CASE("calibration waveform rejects undersampling and bad amplitude") {
  CHECK_THROWS_AS(calibration_waveform(1e-9, 700.0, 1e-4),
                  std::invalid_argument);
  CHECK_THROWS_AS(calibration_waveform(-1e-9, 700.0, 1e-5),
                  std::invalid_argument);
  CHECK_THROWS_AS(calibration_waveform(1e-9, 0.0, 1e-5),
                  std::invalid_argument);
}

TEST_CASE("fourier magnitude is invariant under time shifts") {
  const double omega = 2.0 * std::numbers::pi * 700.0;
  FieldWaveform w = calibration_waveform(1e-9, 700.0, 1e-5);
  const double mag0 = std::abs(fourier_component(w, omega));
  for (double shift : {0.37e-3, 2.0e-3, -1.1e-3}) {
    FieldWaveform shifted = w;
    shifted.start_time += shift;
    const auto c = fourier_component(shifted, omega);
    CHECK(std::abs(c) == doctest::Approx(mag0).epsilon(1e-3));
    // The phase does move.
    if (shift > 0.0)
      CHECK(std::arg(c) != doctest::Approx(
                               std::arg(fourier_component(w, omega))));
  }
}

TEST_CASE("fourier component is linear in the field") {
  const double omega = 2.0 * std::numbers::pi * 700.0;
  FieldWaveform w = nerve_waveform(NerveTemplateParams{}, 1e-5);
  FieldWaveform doubled = w;
  for (double& s : doubled.samples) s *= 2.0;
  CHECK(std::abs(fourier_component(doubled, omega)) ==
        doctest::Approx(2.0 * std::abs(fourier_component(w, omega)))
            .epsilon(1e-12));
}

TEST_CASE("nerve template has the requested sampled peak-to-peak") {
  NerveTemplateParams params;
  const FieldWaveform w = nerve_waveform(params, 1e-5);
  double lo = 0.0, hi = 0.0;
  for (double s : w.samples) {
    lo = std::min(lo, s);
    hi = std::max(hi, s);
  }
  CHECK(hi - lo == doctest::Approx(params.peak_to_peak).epsilon(1e-12));
  CHECK(w.axis == FieldAxis::y);
  CHECK(w.duration() == doctest::Approx(params.onset + params.duration +
                                        params.tail));
  // Biphasic: both signs present.
  CHECK(hi > 0.0);
  CHECK(lo < 0.0);
}

TEST_CASE("nerve template is quiet before onset and after the pulse") {
  NerveTemplateParams params;
  const FieldWaveform w = nerve_waveform(params, 1e-5);
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const double t = w.sample_time(i);
    if (t < 0.5e-3 || t > params.onset + params.duration + 0.4e-3)
      CHECK(std::abs(w.samples[i]) < 1e-3 * params.peak_to_peak);
  }
}

TEST_CASE("stimulation artifact rides on the template") {
  NerveTemplateParams params;
  params.artifact_amplitude = 30e-12;
  const FieldWaveform w = nerve_waveform(params, 1e-5);
  bool seen = false;
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const double t = w.sample_time(i);
    if (t >= params.artifact_onset &&
        t < params.artifact_onset + params.artifact_duration) {
      CHECK(w.samples[i] == doctest::Approx(30e-12).epsilon(1e-3));
      seen = true;
    }
  }
  CHECK(seen);

  params.artifact_onset = 1.49e-3; // would overlap the impulse onset
  CHECK_THROWS_AS(nerve_waveform(params, 1e-5), std::invalid_argument);
}

TEST_CASE("rescaling pins the Fourier component exactly") {
  const double omega = 2.0 * std::numbers::pi * 700.0;
  const FieldWaveform w = nerve_waveform(NerveTemplateParams{}, 1e-5);
  const FieldWaveform scaled = scale_to_fourier_component(w, omega, 4.1e-15);
  CHECK(std::abs(fourier_component(scaled, omega)) ==
        doctest::Approx(4.1e-15).epsilon(1e-12));
  const FieldWaveform zero = zero_waveform(1e-3, 1e-5);
  CHECK_THROWS_AS(scale_to_fourier_component(zero, omega, 1e-15),
                  std::invalid_argument);
}

TEST_CASE("zero waveform is zero and validates its grid") {
  const FieldWaveform w = zero_waveform(2e-3, 1e-5);
  CHECK(w.samples.size() == 200);
  for (double s : w.samples) CHECK(s == 0.0);
  CHECK_THROWS_AS(zero_waveform(1e-6, 1e-5), std::invalid_argument);
}

TEST_CASE("wire model reproduces the nerve-current field") {
  // 0.16 uA at 4.5 mm -> 7.1 pT.
  const double b = wire_field(0.16e-6, 4.5e-3);
  CHECK(b == doctest::Approx(7.1e-12).epsilon(0.02));
  CHECK(invert_wire(b, 4.5e-3) == doctest::Approx(0.16e-6).epsilon(1e-12));
  // Field falls off as 1/r.
  CHECK(wire_field(0.16e-6, 9.0e-3) == doctest::Approx(b / 2.0));
  CHECK_THROWS_AS(wire_field(1e-6, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(invert_wire(1e-12, -1.0), std::invalid_argument);
}

TEST_CASE("waveform csv round trip is exact") {
  NerveTemplateParams params;
  params.artifact_amplitude = 12e-12;
  FieldWaveform w = nerve_waveform(params, 1e-5);
  w.start_time = 0.25e-3;
  const std::string path = temp_path("roundtrip.csv");
  save_waveform_csv(w, path);
  const FieldWaveform r = load_waveform_csv(path);
  REQUIRE(r.samples.size() == w.samples.size());
  for (std::size_t i = 0; i < w.samples.size(); ++i)
    CHECK(r.samples[i] == w.samples[i]); // bitwise
  CHECK(r.dt == doctest::Approx(w.dt).epsilon(1e-12));
  CHECK(r.start_time == doctest::Approx(w.start_time).epsilon(1e-9));
  CHECK(r.axis == FieldAxis::y);

  FieldWaveform z = calibration_waveform(1e-9, 700.0, 1e-5);
  save_waveform_csv(z, path);
  CHECK(load_waveform_csv(path).axis == FieldAxis::z);
}

TEST_CASE("waveform csv load rejects garbage") {
  const std::string path = temp_path("bad.csv");
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("time_s,field_T\nnot-a-row-without-comma\n", f);
    std::fclose(f);
  }
  CHECK_THROWS(load_waveform_csv(path));
  CHECK_THROWS(load_waveform_csv("/nonexistent/nowhere.csv"));
}

TEST_CASE("waveform validation") {
  FieldWaveform w;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument); // empty
  w.samples = {1.0, 2.0};
  w.dt = 0.0;
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
  w.dt = 1e-5;
  w.samples[1] = std::nan("");
  CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}
