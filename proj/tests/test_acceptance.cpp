// Acceptance gate: end-to-end checks of the physics, the signal-recovery
// pipeline and the published operating numbers, each reported as a single
// PASS/FAIL line. Exits nonzero if any check fails.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <complex>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "nervemag/dsp.hpp"
#include "nervemag/experiment.hpp"
#include "nervemag/field.hpp"
#include "nervemag/metrology.hpp"
#include "nervemag/physics.hpp"
#include "nervemag/spin_sim.hpp"

using namespace nervemag;

namespace {

const AtomEnsemble kCell = AtomEnsemble::reference_cell();
int failures = 0;

double now_s() {
  using clk = std::chrono::steady_clock;
  static const clk::time_point t0 = clk::now();
  return std::chrono::duration<double>(clk::now() - t0).count();
}

void report(int index, const char* title, bool pass, const std::string& detail) {
  std::printf("[%s] %02d %-34s %s\n", pass ? "PASS" : "FAIL", index, title,
              detail.c_str());
  if (!pass) ++failures;
}

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

bool within(double value, double target, double rel) {
  return std::abs(value - target) <= rel * std::abs(target);
}

// Independent lab-frame integrator: classic RK4 on
//   dJy/dt = gamma*Jx*Bz - Omega*Jz - Gamma*Jy
//   dJz/dt = Omega*Jy - gamma*Jx*By - Gamma*Jz
// with the field held constant over each waveform cell, then rotated by
// (J'y + i J'z) = e^{-i Omega t} (Jy + i Jz).
std::pair<double, double> rk4_lab_frame(const MagnetometerConfig& config,
                                        const FieldWaveform& waveform,
                                        int substeps) {
  const double gamma_jx = constants::gyromagnetic_ratio * kCell.total_spin();
  const double omega = config.larmor_omega;
  const double rate = config.relaxation_rate;
  double jy = 0.0, jz = 0.0;
  const double h = waveform.dt / substeps;
  for (std::size_t i = 0; i < waveform.samples.size(); ++i) {
    double by = 0.0, bz = 0.0;
    (waveform.axis == FieldAxis::y ? by : bz) = waveform.samples[i];
    const auto deriv = [&](double y, double z, double& dy, double& dz) {
      dy = gamma_jx * bz - omega * z - rate * y;
      dz = omega * y - gamma_jx * by - rate * z;
    };
    for (int s = 0; s < substeps; ++s) {
      double k1y, k1z, k2y, k2z, k3y, k3z, k4y, k4z;
      deriv(jy, jz, k1y, k1z);
      deriv(jy + 0.5 * h * k1y, jz + 0.5 * h * k1z, k2y, k2z);
      deriv(jy + 0.5 * h * k2y, jz + 0.5 * h * k2z, k3y, k3z);
      deriv(jy + h * k3y, jz + h * k3z, k4y, k4z);
      jy += h / 6.0 * (k1y + 2.0 * k2y + 2.0 * k3y + k4y);
      jz += h / 6.0 * (k1z + 2.0 * k2z + 2.0 * k3z + k4z);
    }
  }
  const double t_end = waveform.duration() + waveform.start_time;
  const std::complex<double> rot =
      std::complex<double>{jy, jz} *
      std::exp(std::complex<double>{0.0, -omega * t_end});
  return {rot.real(), rot.imag()};
}

DetectionRecord diff_pair(const MagnetometerConfig& cfg,
                          const FieldWaveform& wf, double probe,
                          std::optional<std::uint64_t> seed) {
  auto [a, b] = pulsed_sequence(cfg, kCell, wf, probe, seed);
  return subtract_records(a, b);
}

// --- checks ---------------------------------------------------------------

void check_01_calibration_component() {
  const double t0 = now_s();
  const FieldWaveform cal = calibration_waveform(1e-9, 700.0, 1e-5);
  const double mag =
      std::abs(fourier_component(cal, 2.0 * std::numbers::pi * 700.0));
  const double dt = now_s() - t0;
  const bool pass = within(mag, 0.71e-12, 0.01) && dt < 1.0;
  report(1, "calibration Fourier component", pass,
         fmt("|B(Omega)| = %.4e T*s, target 7.1e-13 +-1%% (%.2f s, limit 1 s)",
             mag, dt));
}

void check_02_projection_noise_pulsed() {
  const double t0 = now_s();
  const double jx = kCell.total_spin();
  const double analytic = pn_pulsed_fourier(jx).value;

  MagnetometerConfig cfg = MagnetometerConfig::pulsed_default();
  cfg.shot_noise_psd = 0.0;
  cfg.classical_noise_psd_1hz = 0.0;
  cfg.misalignment_spin = 0.0;
  const FieldWaveform cal = calibration_waveform(1e-9, 700.0, 1e-5);
  const DetectionRecord cal_diff = diff_pair(cfg, cal, 8e-3, std::nullopt);
  const double cal_f =
      std::abs(fourier_component(cal, cfg.larmor_omega));
  const CalibrationScale scale = calibrate_pulsed(cal_diff, cal_f, 8e-3);

  const FieldWaveform quiet = zero_waveform(4e-3, 1e-5);
  const int shots = 10000;
  double sum_sq = 0.0;
  for (int k = 0; k < shots; ++k) {
    const DetectionRecord d =
        diff_pair(cfg, quiet, 8e-3, derive_seed(20260823, k));
    const double est = measure_fourier(scale, d);
    sum_sq += est * est;
  }
  // An A-B pair carries the projection noise of both records, so the
  // per-quadrature equivalent is RMS/2.
  const double mc = std::sqrt(sum_sq / shots) / 2.0;
  const double dt = now_s() - t0;
  const bool pass = within(analytic, 0.30e-15, 0.05) &&
                    within(mc, 0.30e-15, 0.05) && dt < 120.0;
  report(2, "pulsed projection-noise floor", pass,
         fmt("analytic %.4e, MC(1e4 shots) %.4e T*s, target 3.0e-16 +-5%% "
             "(%.1f s, limit 120 s)",
             analytic, mc, dt));
}

void check_03_projection_noise_continuous() {
  const double sens = pn_sensitivity_continuous(kCell.total_spin(),
                                                0.44e-3).value;
  report(3, "continuous projection-noise limit", within(sens, 29e-15, 0.05),
         fmt("%.4e T/sqrt(Hz), target 2.9e-14 +-5%%", sens));
}

void check_04_wire_model() {
  const double b = wire_field(0.16e-6, 4.5e-3);
  const double i_back = invert_wire(b, 4.5e-3);
  const bool pass =
      within(b, 7.1e-12, 0.02) && within(i_back, 0.16e-6, 1e-9);
  report(4, "nerve-current wire model", pass,
         fmt("B = %.4e T (target 7.1e-12 +-2%%), inverted I = %.6e A", b,
             i_back));
}

void check_05_pulse_theorem() {
  const MagnetometerConfig cfg =
      MagnetometerConfig::from_larmor(2.0 * std::numbers::pi * 700.0, 0.0);
  const double b0 = 1e-9;
  const FieldWaveform pulse = calibration_waveform(b0, 700.0, 1e-5);
  const SpinTrajectory traj = evolve_mean(cfg, kCell, pulse, SpinState{});
  const double expected = constants::gyromagnetic_ratio * kCell.total_spin() *
                          std::numbers::pi * b0 / cfg.larmor_omega;
  const double got = traj.back().transverse_magnitude();
  report(5, "one-period pulse response", within(got, expected, 0.005),
         fmt("|J'perp| = %.6e, gamma*Jx*pi*B0/Omega = %.6e (+-0.5%%)", got,
             expected));
}

void check_06_psd_peak_formula() {
  bool pass = true;
  std::string worst;
  double worst_err = 0.0;
  const double duration = 10e-3;
  struct Point {
    double decay, f, dt;
  };
  for (const Point p : {Point{1.0 / 15e-3, 2000.0, 1e-5},
                        Point{1.0 / 0.44e-3, 20000.0, 2e-6}}) {
    for (const double theta :
         {0.0, std::numbers::pi / 4.0, std::numbers::pi / 2.0}) {
      const double omega = 2.0 * std::numbers::pi * p.f;
      DetectionRecord rec;
      rec.dt = p.dt;
      const auto n = static_cast<std::size_t>(std::llround(duration / p.dt));
      rec.samples.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) * p.dt;
        rec.samples[i] =
            std::sin(omega * t + theta) * std::exp(-p.decay * t);
      }
      const Spectrum sp = psd(rec, duration);
      const double measured = sp.psd[sp.bin_at(p.f)] * duration / 2.0;
      const double expected =
          std::pow(1.0 - std::exp(-p.decay * duration), 2) /
          (4.0 * p.decay * p.decay);
      const double err = std::abs(measured / expected - 1.0);
      if (err > worst_err) {
        worst_err = err;
        worst = fmt("f=%g Hz, Gamma=%g /s, theta=%.3f", p.f, p.decay, theta);
      }
      if (err > 0.05) pass = false;
    }
  }
  report(6, "damped-sinusoid PSD peak value", pass,
         fmt("worst case %s: relative error %.3f (+-5%%)", worst.c_str(),
             worst_err));
}

void check_07_continuous_round_trip() {
  const double t0 = now_s();
  ExperimentConfig cfg = ExperimentConfig::continuous_defaults();
  cfg.seed = 1;
  cfg.out_dir = "/tmp/nervemag_acceptance_continuous";
  std::filesystem::remove_all(cfg.out_dir);
  const RunReport rep = run_continuous_experiment(cfg);
  const double pp = rep.find("recovered_peak_to_peak")->value;
  const double dt = now_s() - t0;
  const bool pass = within(pp, 7e-12, 0.20) && dt < 300.0;
  report(7, "continuous deconvolution round trip", pass,
         fmt("recovered p-p %.4e T over %d averages, target 7e-12 +-20%% "
             "(%.1f s, limit 300 s)",
             pp, cfg.n_avg, dt));
}

void check_08_snr() {
  const MagnetometerConfig cfg = MagnetometerConfig::pulsed_default();
  const FieldWaveform cal = calibration_waveform(1e-9, 700.0, 1e-5);
  const DetectionRecord cal_diff = diff_pair(cfg, cal, 8e-3, std::nullopt);
  const double cal_f = std::abs(fourier_component(cal, cfg.larmor_omega));
  const CalibrationScale scale = calibrate_pulsed(cal_diff, cal_f, 8e-3);

  FieldWaveform nerve = nerve_waveform(NerveTemplateParams{}, 1e-5);
  nerve = scale_to_fourier_component(nerve, cfg.larmor_omega, 4.1e-15);
  nerve.axis = FieldAxis::z;

  const int n_avg = 1000;
  std::vector<double> mean;
  double rec_dt = 1e-5;
  for (int k = 0; k < n_avg; ++k) {
    const DetectionRecord d =
        diff_pair(cfg, nerve, 8e-3, derive_seed(77001, k));
    if (mean.empty()) {
      mean.assign(d.samples.size(), 0.0);
      rec_dt = d.dt;
    }
    for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += d.samples[i];
  }
  DetectionRecord avg;
  avg.dt = rec_dt;
  avg.samples = mean;
  for (double& v : avg.samples) v /= n_avg;
  const double signal = measure_fourier(scale, avg);

  const FieldWaveform quiet = zero_waveform(nerve.duration(), 1e-5);
  const int floor_shots = 400;
  double floor_sq = 0.0;
  for (int k = 0; k < floor_shots; ++k) {
    const DetectionRecord d =
        diff_pair(cfg, quiet, 8e-3, derive_seed(88001, k));
    const double est = measure_fourier(scale, d);
    floor_sq += est * est;
  }
  const double floor_single = std::sqrt(floor_sq / floor_shots);

  const double snr_single = signal / floor_single;
  const double snr_avg = snr_single * std::sqrt(static_cast<double>(n_avg));
  const bool pass =
      within(snr_avg, 20.0, 0.30) && within(snr_single, 0.6, 0.30);
  report(8, "nerve-impulse SNR", pass,
         fmt("SNR(1000 avg) = %.2f (target 20 +-30%%), single shot %.3f "
             "(target 0.6 +-30%%)",
             snr_avg, snr_single));
}

void check_09_conduction_velocity() {
  const Measurement v1 =
      conduction_velocity(Measurement(0.05, 0.01, units::metre),
                          Measurement(1.3e-3, 0.2e-3, units::second));
  const Measurement v2 =
      conduction_velocity(Measurement(0.07, 0.01, units::metre),
                          Measurement(1.9e-3, 0.1e-3, units::second));
  const std::string s1 = v1.to_display_string();
  const std::string s2 = v2.to_display_string();
  const bool pass = s1 == "38(9) m/s" && s2 == "37(6) m/s";
  report(9, "conduction-velocity uncertainty", pass,
         fmt("\"%s\" (want \"38(9) m/s\"), \"%s\" (want \"37(6) m/s\")",
             s1.c_str(), s2.c_str()));
}

void check_10_independent_integrator() {
  const MagnetometerConfig cfg =
      MagnetometerConfig::from_larmor(2.0 * std::numbers::pi * 700.0,
                                      1.0 / 15e-3);
  NerveTemplateParams nerve;
  nerve.tail = 6.1e-3; // pad to a 10 ms window
  FieldWaveform w_nerve_y = nerve_waveform(nerve, 1e-5);
  FieldWaveform w_nerve_z = w_nerve_y;
  w_nerve_z.axis = FieldAxis::z;
  FieldWaveform w_sine = zero_waveform(10e-3, 1e-5);
  for (std::size_t i = 0; i < w_sine.samples.size(); ++i)
    w_sine.samples[i] = 0.8e-9 * std::sin(2.0 * std::numbers::pi * 650.0 *
                                          w_sine.sample_time(i));
  double worst = 0.0;
  for (const FieldWaveform* w : {&w_nerve_y, &w_nerve_z, &w_sine}) {
    const SpinTrajectory traj = evolve_mean(cfg, kCell, *w, SpinState{});
    const auto [oy, oz] = rk4_lab_frame(cfg, *w, 40);
    const double scale = std::max(std::hypot(oy, oz), 1e-300);
    worst = std::max(worst, std::hypot(traj.back().jy_rot - oy,
                                       traj.back().jz_rot - oz) /
                                scale);
  }
  report(10, "lab-frame integrator agreement", worst <= 1e-3,
         fmt("worst relative deviation %.2e over 3 waveforms, 10 ms "
             "(limit 1e-3)",
             worst));
}

void check_11_stationary_variance() {
  const MagnetometerConfig cfg =
      MagnetometerConfig::from_larmor(2.0 * std::numbers::pi * 700.0,
                                      1.0 / 0.44e-3);
  const double t2 = 0.44e-3;
  const FieldWaveform quiet = zero_waveform(1e4 * t2, 1e-5);
  const SpinTrajectory traj = evolve_stochastic(cfg, kCell, quiet, 31415);
  double mean = 0.0;
  for (const auto& s : traj.states) mean += s.jy_rot;
  mean /= static_cast<double>(traj.states.size());
  double var = 0.0;
  for (const auto& s : traj.states)
    var += (s.jy_rot - mean) * (s.jy_rot - mean);
  var /= static_cast<double>(traj.states.size() - 1);
  const double expected = kCell.total_spin() / 2.0;
  report(11, "zero-field spin variance", within(var, expected, 0.05),
         fmt("var(J'y) = %.4e over 1e4 coherence times, Jx/2 = %.4e (+-5%%)",
             var, expected));
}

}  // namespace

int main() {
  check_01_calibration_component();
  check_02_projection_noise_pulsed();
  check_03_projection_noise_continuous();
  check_04_wire_model();
  check_05_pulse_theorem();
  check_06_psd_peak_formula();
  check_07_continuous_round_trip();
  check_08_snr();
  check_09_conduction_velocity();
  check_10_independent_integrator();
  check_11_stationary_variance();
  if (failures > 0) {
    std::printf("%d of 11 checks failed\n", failures);
    return 1;
  }
  std::printf("all 11 checks passed\n");
  return 0;
}
