// Command-line front end: simulate, calibrate and analyze magnetometer
// records from a JSON config, with deterministic seeded output.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "nervemag/dsp.hpp"
#include "nervemag/experiment.hpp"
#include "nervemag/field.hpp"
#include "nervemag/spin_sim.hpp"

namespace {

using namespace nervemag;

struct CommonOpts {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> avg;
  std::optional<std::string> out;
  std::string mode = "";
};

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_mode) {
  cmd->add_option("--config", opts.config_path, "JSON config file");
  cmd->add_option("--seed", opts.seed, "base RNG seed");
  cmd->add_option("--avg", opts.avg, "number of averaged shots");
  cmd->add_option("--out", opts.out, "output directory");
  if (with_mode)
    cmd->add_option("--mode", opts.mode, "pulsed or continuous")
        ->check(CLI::IsMember({"pulsed", "continuous"}));
}

ExperimentConfig load_config(const CommonOpts& opts, RunMode fallback_mode) {
  ExperimentConfig config;
  if (!opts.config_path.empty()) {
    config = ExperimentConfig::from_json_file(opts.config_path);
  } else {
    RunMode mode = fallback_mode;
    if (opts.mode == "pulsed") mode = RunMode::pulsed;
    if (opts.mode == "continuous") mode = RunMode::continuous;
    config = mode == RunMode::pulsed ? ExperimentConfig::pulsed_defaults()
                                     : ExperimentConfig::continuous_defaults();
  }
  if (opts.seed) config.seed = *opts.seed;
  if (opts.avg) config.n_avg = *opts.avg;
  if (opts.out) config.out_dir = *opts.out;
  config.finalize();
  return config;
}

void require_mode(const ExperimentConfig& config, RunMode mode,
                  const char* subcommand) {
  if (config.mode != mode)
    throw ConfigError(std::string("config mode does not match subcommand ") +
                      subcommand);
}

void print_report(const RunReport& report) {
  for (const auto& e : report.entries)
    std::printf("%-28s = %.12e %s  [%s]\n", e.name.c_str(), e.value,
                e.unit.c_str(), e.producer.c_str());
  for (const auto& f : report.files) std::printf("wrote %s\n", f.c_str());
}

// Calibration-only run: derive the scale (pulsed) or the response fit
// (continuous) from a noiseless record of the reference field.
RunReport run_calibrate(const ExperimentConfig& config) {
  RunReport report;
  const MagnetometerConfig& mag = config.magnetometer;
  const double pi = 3.14159265358979323846;
  const double cal_f =
      config.waveform.cal_frequency_hz.value_or(mag.larmor_omega / (2.0 * pi));
  if (config.mode == RunMode::pulsed) {
    const FieldWaveform cal_wf = calibration_waveform(
        config.waveform.cal_amplitude, cal_f, config.waveform.dt);
    auto [a, b] = pulsed_sequence(mag, config.ensemble, cal_wf,
                                  config.analysis.probe_duration_s);
    const DetectionRecord diff = subtract_records(a, b);
    const double window = std::min(config.analysis.pulsed_window_s,
                                   config.analysis.probe_duration_s);
    const double fourier =
        std::abs(fourier_component(cal_wf, mag.larmor_omega));
    const CalibrationScale scale = calibrate_pulsed(diff, fourier, window);
    report.add("calibration_factor", scale.factor, "T*s", "calibrate_pulsed");
    report.add("reference_fourier", scale.reference_fourier, "T*s",
               "fourier_component");
    report.add("calibration_peak_hz", scale.peak_frequency_hz, "1/s",
               "calibrate_pulsed");
  } else {
    FieldWaveform cal_wf = calibration_waveform(config.waveform.cal_amplitude,
                                                cal_f, config.waveform.dt);
    const auto tail = static_cast<std::size_t>(
        std::ceil(10.0 / (mag.relaxation_rate * cal_wf.dt)));
    cal_wf.samples.insert(cal_wf.samples.end(), tail, 0.0);
    const DetectionRecord rec = continuous_record(mag, config.ensemble, cal_wf);
    const ContinuousCalibration cal = calibrate_continuous(rec, cal_wf);
    if (!cal.ok)
      throw AnalysisError("continuous calibration failed: " + cal.message);
    report.add("fit_omega", cal.omega, "rad/s", "calibrate_continuous");
    report.add("fit_decay_rate", cal.decay_rate, "1/s",
               "calibrate_continuous");
    report.add("fit_gain", cal.gain, "1/T", "calibrate_continuous");
    report.add("fit_residual", cal.residual_norm, "1", "calibrate_continuous");
  }
  return report;
}

int fail(const char* category, const std::exception& e, int code) {
  std::fprintf(stderr, "{\"error\":{\"category\":\"%s\",\"message\":\"%s\"}}\n",
               category, e.what());
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Optically pumped magnetometer simulator and signal-recovery "
               "toolkit"};
  app.require_subcommand(1);

  CommonOpts sp_opts, sc_opts, cal_opts, lim_opts, an_opts;
  std::string record_path;

  CLI::App* sp = app.add_subcommand(
      "simulate-pulsed", "pulsed double-probe run: average, calibrate, SNR");
  add_common(sp, sp_opts, false);
  CLI::App* sc = app.add_subcommand(
      "simulate-continuous",
      "continuous run: average, fit response, deconvolve, sensitivity");
  add_common(sc, sc_opts, false);
  CLI::App* cal =
      app.add_subcommand("calibrate", "calibration stage only");
  add_common(cal, cal_opts, true);
  CLI::App* lim =
      app.add_subcommand("limits", "projection-noise limit table");
  add_common(lim, lim_opts, true);
  CLI::App* an =
      app.add_subcommand("analyze", "offline analysis of a record CSV");
  add_common(an, an_opts, true);
  an->add_option("record", record_path, "record CSV file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    RunReport report;
    if (sp->parsed()) {
      const ExperimentConfig config = load_config(sp_opts, RunMode::pulsed);
      require_mode(config, RunMode::pulsed, "simulate-pulsed");
      report = run_pulsed_experiment(config);
    } else if (sc->parsed()) {
      const ExperimentConfig config =
          load_config(sc_opts, RunMode::continuous);
      require_mode(config, RunMode::continuous, "simulate-continuous");
      report = run_continuous_experiment(config);
    } else if (cal->parsed()) {
      report = run_calibrate(load_config(cal_opts, RunMode::pulsed));
    } else if (lim->parsed()) {
      report = run_limits(load_config(lim_opts, RunMode::pulsed));
    } else if (an->parsed()) {
      report = run_analyze(load_config(an_opts, RunMode::pulsed), record_path);
    }
    print_report(report);
    return 0;
  } catch (const ConfigError& e) {
    return fail("config", e, 2);
  } catch (const IoError& e) {
    return fail("io", e, 3);
  } catch (const AnalysisError& e) {
    return fail("analysis", e, 4);
  } catch (const std::exception& e) {
    return fail("internal", e, 1);
  }
}
