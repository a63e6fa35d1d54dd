#ifndef NERVEMAG_SPIN_SIM_HPP
#define NERVEMAG_SPIN_SIM_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "nervemag/field.hpp"
#include "nervemag/physics.hpp"

// Rotating-frame propagation of the collective spin under a transverse
// field, deterministic or with Langevin projection noise, and synthesis of
// polarimeter detection records for the pulsed and continuous modes.

namespace nervemag {

struct SpinState {
  double jy_rot = 0.0; // J'_y, spin units
  double jz_rot = 0.0; // J'_z
  double jx = 0.0;     // J_x
  double time = 0.0;   // s

  double transverse_magnitude() const;
};

enum class TrajectoryMode { deterministic, stochastic };

struct SpinTrajectory {
  std::vector<SpinState> states; // waveform grid boundaries, size N+1
  double dt = 0.0;
  TrajectoryMode mode = TrajectoryMode::deterministic;
  std::optional<std::uint64_t> seed;
  // Set when |J'_perp| exceeded 0.1*J_x somewhere; the linearized
  // equations are then outside their validity range.
  bool perturbative_bound_exceeded = false;

  const SpinState& front() const { return states.front(); }
  const SpinState& back() const { return states.back(); }
};

enum class SequenceKind { pulsed_A, pulsed_B, continuous };

// Polarimeter output time series. Sample n is at t = n*dt from the start
// of the probe window (pulsed) or of the record (continuous).
struct DetectionRecord {
  std::vector<double> samples; // signal units (a*S_x*J_z scale)
  double dt = 1e-5;
  SequenceKind sequence = SequenceKind::continuous;
  MagnetometerConfig config; // snapshot of the generating configuration
  std::optional<std::uint64_t> seed;
  int n_avg = 1;

  double time(std::size_t n) const { return static_cast<double>(n) * dt; }
  void validate() const;
};

/// Deterministic rotating-frame propagation over the waveform grid.
/// Exponential-exact decay with midpoint-evaluated forcing, global error
/// O(dt^2).
SpinTrajectory evolve_mean(const MagnetometerConfig& config,
                           const AtomEnsemble& ensemble,
                           const FieldWaveform& waveform,
                           const SpinState& initial);

/// Stochastic propagation with Langevin noise of variance |J_x|/2 on each
/// transverse component. Uses the exact Ornstein-Uhlenbeck transition per
/// step; the initial transverse components are drawn from the
/// coherent-spin-state distribution N(mean, J_x/2) around initial_mean.
SpinTrajectory evolve_stochastic(const MagnetometerConfig& config,
                                 const AtomEnsemble& ensemble,
                                 const FieldWaveform& waveform,
                                 std::uint64_t seed,
                                 const SpinState& initial_mean = {});

/// Pulsed double-probe sequence. The field acts with the probe light off,
/// then the A record reads out the free induction decay over the probe
/// window; the B record repeats the sequence without the field. Without a
/// seed the records are noiseless (no projection or readout noise).
std::pair<DetectionRecord, DetectionRecord> pulsed_sequence(
    const MagnetometerConfig& config, const AtomEnsemble& ensemble,
    const FieldWaveform& waveform, double probe_duration,
    std::optional<std::uint64_t> seed = std::nullopt);

/// Continuous-mode record: a*S_x*J_z(t) sampled over the waveform grid,
/// plus readout noise. Without a seed the record is noiseless and starts
/// from zero transverse spin.
DetectionRecord continuous_record(const MagnetometerConfig& config,
                                  const AtomEnsemble& ensemble,
                                  const FieldWaveform& waveform,
                                  std::optional<std::uint64_t> seed =
                                      std::nullopt);

/// White Gaussian readout-noise series with one-sided PSD shot_psd
/// (variance per sample shot_psd/(2*dt)).
std::vector<double> readout_noise(std::size_t record_length, double dt,
                                  double shot_psd, std::uint64_t seed);

/// Gaussian noise series with one-sided PSD psd_1hz/f.
std::vector<double> one_over_f_noise(std::size_t record_length, double dt,
                                     double psd_1hz, std::uint64_t seed);

/// Record CSV: comment-prefixed metadata header (sequence, seed, config
/// snapshot) followed by time_s,signal rows.
void save_record_csv(const DetectionRecord& record, const std::string& path);
DetectionRecord load_record_csv(const std::string& path);

/// Deterministic per-shot seed derivation from a base seed.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index);

}  // namespace nervemag

#endif
