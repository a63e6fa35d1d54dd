#include "nervemag/spin_sim.hpp"

#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "fft.hpp"

namespace nervemag {

double SpinState::transverse_magnitude() const {
  return std::hypot(jy_rot, jz_rot);
}

void DetectionRecord::validate() const {
  if (dt <= 0.0) throw std::invalid_argument("DetectionRecord: dt <= 0");
  for (double s : samples)
    if (!std::isfinite(s))
      throw std::invalid_argument("DetectionRecord: non-finite sample");
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
  // splitmix64 over base + golden-ratio stride.
  std::uint64_t z = base + (index + 1) * 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

namespace {

struct ForcingAmplitudes {
  double by = 0.0;
  double bz = 0.0;
};

ForcingAmplitudes axis_fields(const FieldWaveform& w, double sample) {
  ForcingAmplitudes f;
  if (w.axis == FieldAxis::y)
    f.by = sample;
  else
    f.bz = sample;
  return f;
}

SpinTrajectory integrate(const MagnetometerConfig& config,
                         const AtomEnsemble& ensemble,
                         const FieldWaveform& waveform, SpinState initial,
                         std::mt19937_64* rng) {
  waveform.validate();
  ensemble.validate();
  const double jx = ensemble.total_spin();
  const double gamma_jx = constants::gyromagnetic_ratio * jx;
  const double rate = config.relaxation_rate;
  const double dt = waveform.dt;
  const double decay = std::exp(-rate * dt);
  const double half_decay = std::exp(-0.5 * rate * dt);
  const double omega = config.larmor_omega;

  SpinTrajectory traj;
  traj.dt = dt;
  traj.mode = rng ? TrajectoryMode::stochastic : TrajectoryMode::deterministic;
  traj.states.reserve(waveform.samples.size() + 1);

  std::normal_distribution<double> unit_normal(0.0, 1.0);
  const double noise_sigma =
      rng ? std::sqrt(0.5 * jx * (1.0 - decay * decay)) : 0.0;

  SpinState state = initial;
  state.jx = jx;
  state.time = waveform.start_time;
  if (rng) {
    const double css_sigma = std::sqrt(0.5 * jx);
    state.jy_rot += css_sigma * unit_normal(*rng);
    state.jz_rot += css_sigma * unit_normal(*rng);
  }
  traj.states.push_back(state);

  const double bound = 0.1 * jx;
  for (std::size_t i = 0; i < waveform.samples.size(); ++i) {
    const double t_mid = waveform.sample_time(i);
    const auto [by, bz] = axis_fields(waveform, waveform.samples[i]);
    const double c = std::cos(omega * t_mid);
    const double s = std::sin(omega * t_mid);
    const double force_y = gamma_jx * (c * bz - s * by);
    const double force_z = -gamma_jx * (s * bz + c * by);

    state.jy_rot = decay * state.jy_rot + half_decay * force_y * dt;
    state.jz_rot = decay * state.jz_rot + half_decay * force_z * dt;
    if (rng) {
      state.jy_rot += noise_sigma * unit_normal(*rng);
      state.jz_rot += noise_sigma * unit_normal(*rng);
    }
    state.time = waveform.start_time + static_cast<double>(i + 1) * dt;
    if (state.transverse_magnitude() > bound)
      traj.perturbative_bound_exceeded = true;
    traj.states.push_back(state);
  }
  if (traj.perturbative_bound_exceeded)
    std::fprintf(stderr,
                 "nervemag: warning: |J'_perp| exceeded 0.1*J_x; linearized "
                 "spin dynamics may be invalid\n");
  return traj;
}

std::vector<double> white_noise(std::size_t n, double dt, double shot_psd,
                                std::mt19937_64& rng) {
  std::vector<double> out(n, 0.0);
  if (shot_psd <= 0.0) return out;
  std::normal_distribution<double> nd(0.0, std::sqrt(shot_psd / (2.0 * dt)));
  for (double& v : out) v = nd(rng);
  return out;
}

std::vector<double> pink_noise(std::size_t n, double dt, double psd_1hz,
                               std::mt19937_64& rng) {
  std::vector<double> out(n, 0.0);
  if (psd_1hz <= 0.0 || n < 2) return out;
  const double total = static_cast<double>(n) * dt;
  std::vector<std::complex<double>> spectrum(n / 2 + 1, {0.0, 0.0});
  std::normal_distribution<double> nd(0.0, 1.0);
  for (std::size_t k = 1; k < spectrum.size(); ++k) {
    const double f = static_cast<double>(k) / total;
    const bool nyquist = (n % 2 == 0) && (k == n / 2);
    if (nyquist) {
      spectrum[k] = {std::sqrt(psd_1hz * static_cast<double>(n) /
                               (2.0 * f * dt)) *
                         nd(rng),
                     0.0};
    } else {
      const double sigma =
          std::sqrt(psd_1hz * static_cast<double>(n) / (4.0 * f * dt));
      spectrum[k] = {sigma * nd(rng), sigma * nd(rng)};
    }
  }
  return detail::irfft(spectrum, n);
}

void add_readout_noise(DetectionRecord& record, std::uint64_t seed_white,
                       std::uint64_t seed_pink) {
  std::mt19937_64 rng_w(seed_white);
  const auto w = white_noise(record.samples.size(), record.dt,
                             record.config.shot_noise_psd, rng_w);
  std::mt19937_64 rng_p(seed_pink);
  const auto p = pink_noise(record.samples.size(), record.dt,
                            record.config.classical_noise_psd_1hz, rng_p);
  for (std::size_t i = 0; i < record.samples.size(); ++i)
    record.samples[i] += w[i] + p[i];
}

DetectionRecord fid_record(const MagnetometerConfig& config, double jy0,
                           double jz0, double probe_duration, double dt,
                           SequenceKind kind) {
  DetectionRecord rec;
  rec.dt = dt;
  rec.sequence = kind;
  rec.config = config;
  const auto n =
      static_cast<std::size_t>(std::llround(probe_duration / dt));
  rec.samples.resize(n);
  const double omega = config.larmor_omega;
  const double rate = config.relaxation_rate;
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) * dt;
    rec.samples[i] = config.readout_coupling *
                     (std::sin(omega * t) * jy0 + std::cos(omega * t) * jz0) *
                     std::exp(-rate * t);
  }
  return rec;
}

}  // namespace

SpinTrajectory evolve_mean(const MagnetometerConfig& config,
                           const AtomEnsemble& ensemble,
                           const FieldWaveform& waveform,
                           const SpinState& initial) {
  return integrate(config, ensemble, waveform, initial, nullptr);
}

SpinTrajectory evolve_stochastic(const MagnetometerConfig& config,
                                 const AtomEnsemble& ensemble,
                                 const FieldWaveform& waveform,
                                 std::uint64_t seed,
                                 const SpinState& initial_mean) {
  std::mt19937_64 rng(seed);
  SpinTrajectory traj =
      integrate(config, ensemble, waveform, initial_mean, &rng);
  traj.seed = seed;
  return traj;
}

std::pair<DetectionRecord, DetectionRecord> pulsed_sequence(
    const MagnetometerConfig& config, const AtomEnsemble& ensemble,
    const FieldWaveform& waveform, double probe_duration,
    std::optional<std::uint64_t> seed) {
  if (probe_duration <= 0.0)
    throw std::invalid_argument("pulsed_sequence: nonpositive probe duration");
  const double t2 = 1.0 / config.relaxation_rate;
  if (waveform.duration() > 0.3 * t2)
    std::fprintf(stderr,
                 "nervemag: warning: field-pulse duration %.3g ms is not "
                 "small against T2 = %.3g ms\n",
                 waveform.duration() * 1e3, t2 * 1e3);

  const FieldWaveform quiet =
      zero_waveform(waveform.duration(), waveform.dt, waveform.axis);

  SpinState end_a, end_b;
  if (seed) {
    end_a = evolve_stochastic(config, ensemble, waveform,
                              derive_seed(*seed, 0)).back();
    end_b = evolve_stochastic(config, ensemble, quiet,
                              derive_seed(*seed, 1)).back();
  } else {
    end_a = evolve_mean(config, ensemble, waveform, SpinState{}).back();
    end_b = evolve_mean(config, ensemble, quiet, SpinState{}).back();
  }

  DetectionRecord a =
      fid_record(config, end_a.jy_rot, end_a.jz_rot + config.misalignment_spin,
                 probe_duration, waveform.dt, SequenceKind::pulsed_A);
  DetectionRecord b =
      fid_record(config, end_b.jy_rot, end_b.jz_rot + config.misalignment_spin,
                 probe_duration, waveform.dt, SequenceKind::pulsed_B);
  if (seed) {
    a.seed = seed;
    b.seed = seed;
    add_readout_noise(a, derive_seed(*seed, 2), derive_seed(*seed, 3));
    add_readout_noise(b, derive_seed(*seed, 4), derive_seed(*seed, 5));
  }
  return {std::move(a), std::move(b)};
}

DetectionRecord continuous_record(const MagnetometerConfig& config,
                                  const AtomEnsemble& ensemble,
                                  const FieldWaveform& waveform,
                                  std::optional<std::uint64_t> seed) {
  SpinTrajectory traj =
      seed ? evolve_stochastic(config, ensemble, waveform,
                               derive_seed(*seed, 0))
           : evolve_mean(config, ensemble, waveform, SpinState{});

  DetectionRecord rec;
  rec.dt = waveform.dt;
  rec.sequence = SequenceKind::continuous;
  rec.config = config;
  rec.seed = seed;
  const std::size_t n = waveform.samples.size();
  rec.samples.resize(n);
  const double omega = config.larmor_omega;
  for (std::size_t i = 0; i < n; ++i) {
    const SpinState& s = traj.states[i];
    // Lab-frame J_z read out by the polarimeter.
    rec.samples[i] = config.readout_coupling *
                     (std::sin(omega * s.time) * s.jy_rot +
                      std::cos(omega * s.time) * s.jz_rot);
  }
  if (seed)
    add_readout_noise(rec, derive_seed(*seed, 2), derive_seed(*seed, 3));
  return rec;
}

std::vector<double> readout_noise(std::size_t record_length, double dt,
                                  double shot_psd, std::uint64_t seed) {
  if (shot_psd < 0.0)
    throw std::invalid_argument("readout_noise: negative PSD");
  if (dt <= 0.0) throw std::invalid_argument("readout_noise: dt <= 0");
  std::mt19937_64 rng(seed);
  return white_noise(record_length, dt, shot_psd, rng);
}

std::vector<double> one_over_f_noise(std::size_t record_length, double dt,
                                     double psd_1hz, std::uint64_t seed) {
  if (psd_1hz < 0.0)
    throw std::invalid_argument("one_over_f_noise: negative PSD");
  if (dt <= 0.0) throw std::invalid_argument("one_over_f_noise: dt <= 0");
  std::mt19937_64 rng(seed);
  return pink_noise(record_length, dt, psd_1hz, rng);
}

namespace {

const char* sequence_name(SequenceKind kind) {
  switch (kind) {
    case SequenceKind::pulsed_A: return "pulsed_A";
    case SequenceKind::pulsed_B: return "pulsed_B";
    default: return "continuous";
  }
}

SequenceKind sequence_from_name(const std::string& name) {
  if (name == "pulsed_A") return SequenceKind::pulsed_A;
  if (name == "pulsed_B") return SequenceKind::pulsed_B;
  if (name == "continuous") return SequenceKind::continuous;
  throw std::runtime_error("unknown sequence kind: " + name);
}

}  // namespace

void save_record_csv(const DetectionRecord& record, const std::string& path) {
  record.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_record_csv: cannot open " + path);
  char line[256];
  out << "# sequence=" << sequence_name(record.sequence) << "\n";
  if (record.seed)
    out << "# seed=" << *record.seed << "\n";
  out << "# n_avg=" << record.n_avg << "\n";
  std::snprintf(line, sizeof line,
                "# config bias_field_tesla=%.17g relaxation_rate_per_s=%.17g "
                "readout_coupling=%.17g shot_noise_psd=%.17g "
                "classical_noise_psd_1hz=%.17g misalignment_spin=%.17g\n",
                record.config.bias_field, record.config.relaxation_rate,
                record.config.readout_coupling, record.config.shot_noise_psd,
                record.config.classical_noise_psd_1hz,
                record.config.misalignment_spin);
  out << line;
  out << "time_s,signal\n";
  for (std::size_t i = 0; i < record.samples.size(); ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", record.time(i),
                  record.samples[i]);
    out << line;
  }
}

DetectionRecord load_record_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_record_csv: cannot open " + path);
  DetectionRecord rec;
  std::string line;
  std::vector<double> times;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      std::istringstream iss(line.substr(1));
      std::string token;
      while (iss >> token) {
        const auto eq = token.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = token.substr(0, eq);
        const std::string value = token.substr(eq + 1);
        if (key == "sequence") rec.sequence = sequence_from_name(value);
        else if (key == "seed") rec.seed = std::stoull(value);
        else if (key == "n_avg") rec.n_avg = std::stoi(value);
        else if (key == "bias_field_tesla") rec.config.bias_field = std::stod(value);
        else if (key == "relaxation_rate_per_s") rec.config.relaxation_rate = std::stod(value);
        else if (key == "readout_coupling") rec.config.readout_coupling = std::stod(value);
        else if (key == "shot_noise_psd") rec.config.shot_noise_psd = std::stod(value);
        else if (key == "classical_noise_psd_1hz") rec.config.classical_noise_psd_1hz = std::stod(value);
        else if (key == "misalignment_spin") rec.config.misalignment_spin = std::stod(value);
      }
      continue;
    }
    if (!header_seen) {
      header_seen = true;
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("load_record_csv: malformed row in " + path);
    times.push_back(std::stod(line.substr(0, comma)));
    rec.samples.push_back(std::stod(line.substr(comma + 1)));
  }
  if (times.size() < 2)
    throw std::runtime_error("load_record_csv: need at least two rows");
  rec.dt = times[1] - times[0];
  rec.config.larmor_omega =
      constants::gyromagnetic_ratio * rec.config.bias_field;
  rec.validate();
  return rec;
}

}  // namespace nervemag
