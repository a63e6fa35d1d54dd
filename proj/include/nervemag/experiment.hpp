#ifndef NERVEMAG_EXPERIMENT_HPP
#define NERVEMAG_EXPERIMENT_HPP

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nervemag/dsp.hpp"
#include "nervemag/field.hpp"
#include "nervemag/physics.hpp"
#include "nervemag/spin_sim.hpp"

// Experiment runner: configuration loading, scenario orchestration
// (simulate -> calibrate -> analyze), deterministic batch execution and
// file emission.

namespace nervemag {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct AnalysisError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class WaveformKind { none, calibration, nerve, csv };
enum class RunMode { pulsed, continuous };

struct WaveformConfig {
  WaveformKind kind = WaveformKind::nerve;
  double dt = 1e-5; // s
  FieldAxis axis = FieldAxis::z;
  // calibration
  double cal_amplitude = 1e-9;              // T
  std::optional<double> cal_frequency_hz;   // defaults to the Larmor frequency
  // nerve
  NerveTemplateParams nerve;
  std::optional<double> fourier_target; // T*s, rescale target at the Larmor
  // csv
  std::string csv_path;
  // none
  double quiet_duration = 4e-3; // s
};

struct AnalysisConfig {
  double lambda_rel = 1e-3;        // deconvolution regularization
  double lowpass_cutoff_hz = 3000; // deconvolution low-pass
  double pulsed_window_s = 8e-3;   // PSD window, pulsed mode
  double continuous_window_s = 37.1e-3;
  double probe_duration_s = 8e-3;
  int noise_floor_groups = 8;      // pulsed noise-floor batches
  int sensitivity_realizations = 16;
};

struct ExperimentConfig {
  RunMode mode = RunMode::pulsed;
  std::uint64_t seed = 1;
  int n_avg = 1000;
  std::string out_dir = "out";
  AtomEnsemble ensemble = AtomEnsemble::reference_cell();
  std::optional<double> temperature_celsius; // overrides ensemble density
  MagnetometerConfig magnetometer;           // defaults chosen by mode
  WaveformConfig waveform;
  AnalysisConfig analysis;
  // limits subcommand
  std::vector<double> limit_temperatures{22.0, 37.0};
  double limit_pulse_duration = 2e-3; // s
  double limit_coherence_time = 0.44e-3;

  static ExperimentConfig pulsed_defaults();
  static ExperimentConfig continuous_defaults();
  static ExperimentConfig from_json_file(const std::string& path);
  std::string to_json() const;
  void finalize(); // apply temperature, fill mode-dependent defaults
};

struct ReportEntry {
  std::string name;
  double value = 0.0;
  std::string unit;
  std::string producer; // operation that produced the number
};

struct RunReport {
  std::vector<ReportEntry> entries;
  std::vector<std::string> files;
  double wall_clock_s = 0.0;

  void add(const std::string& name, double value, const std::string& unit,
           const std::string& producer);
  const ReportEntry* find(const std::string& name) const;
};

/// A - B difference of a pulsed probe pair on identical grids.
DetectionRecord subtract_records(const DetectionRecord& a,
                                 const DetectionRecord& b);

/// Pulsed pipeline: N_avg pulsed A/B shot pairs, averaging, PSD,
/// calibration, Fourier component and SNR against a simulated noise floor.
RunReport run_pulsed_experiment(const ExperimentConfig& config);

/// Continuous pipeline: continuous records, averaging, response fit,
/// deconvolution, recovered-waveform metrics and sensitivity.
RunReport run_continuous_experiment(const ExperimentConfig& config);

/// Projection-noise limit table for the configured temperatures.
RunReport run_limits(const ExperimentConfig& config);

/// Offline analysis of an existing record CSV (PSD + FID fit; deconvolution
/// in continuous mode when calibration parameters are available).
RunReport run_analyze(const ExperimentConfig& config,
                      const std::string& record_csv);

void save_report(const RunReport& report, const ExperimentConfig& config,
                 const std::string& text_path, const std::string& json_path);

}  // namespace nervemag

#endif
