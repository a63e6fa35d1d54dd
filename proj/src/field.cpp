#include "nervemag/field.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "nervemag/physics.hpp"

namespace nervemag {

void FieldWaveform::validate() const {
  if (dt <= 0.0) throw std::invalid_argument("FieldWaveform: dt <= 0");
  if (samples.empty()) throw std::invalid_argument("FieldWaveform: empty");
  for (double s : samples)
    if (!std::isfinite(s))
      throw std::invalid_argument("FieldWaveform: non-finite sample");
}

void NerveTemplateParams::validate() const {
  if (peak_to_peak < 0.0)
    throw std::invalid_argument("NerveTemplateParams: negative peak_to_peak");
  if (duration <= 0.0)
    throw std::invalid_argument("NerveTemplateParams: nonpositive duration");
  if (artifact_amplitude != 0.0 &&
      artifact_onset + artifact_duration > onset)
    throw std::invalid_argument(
        "NerveTemplateParams: artifact must precede the impulse");
}

FieldWaveform calibration_waveform(double b0_tesla, double f_cal_hz,
                                   double dt) {
  if (b0_tesla < 0.0)
    throw std::invalid_argument("calibration_waveform: negative amplitude");
  if (f_cal_hz <= 0.0)
    throw std::invalid_argument("calibration_waveform: nonpositive frequency");
  if (dt > 1.0 / (20.0 * f_cal_hz))
    throw std::invalid_argument("calibration_waveform: undersampled dt");

  const double period = 1.0 / f_cal_hz;
  const auto count = static_cast<std::size_t>(std::llround(period / dt));
  FieldWaveform w;
  w.dt = dt;
  w.axis = FieldAxis::z;
  w.samples.resize(count);
  const double omega = 2.0 * std::numbers::pi * f_cal_hz;
  for (std::size_t i = 0; i < count; ++i)
    w.samples[i] = b0_tesla * std::sin(omega * w.sample_time(i));
  return w;
}

std::complex<double> fourier_component(const FieldWaveform& w, double omega) {
  w.validate();
  std::complex<double> sum{0.0, 0.0};
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    const double t = w.sample_time(i);
    sum += w.samples[i] *
           std::complex<double>{std::cos(omega * t), -std::sin(omega * t)};
  }
  return sum * w.dt;
}

FieldWaveform nerve_waveform(const NerveTemplateParams& params, double dt) {
  params.validate();
  if (dt <= 0.0) throw std::invalid_argument("nerve_waveform: dt <= 0");

  const double total = params.onset + params.duration + params.tail;
  const auto count = static_cast<std::size_t>(std::llround(total / dt));
  FieldWaveform w;
  w.dt = dt;
  w.axis = FieldAxis::y;
  w.samples.assign(count, 0.0);

  // Biphasic impulse: two opposite Gaussian lobes inside [onset,
  // onset + duration].
  const double sigma = params.duration / 8.0;
  const double separation = 2.8 * sigma;
  const double center = params.onset + params.duration / 2.0;
  const double t1 = center - separation / 2.0;
  const double t2 = center + separation / 2.0;

  double lo = 0.0, hi = 0.0;
  std::vector<double> shape(count, 0.0);
  for (std::size_t i = 0; i < count; ++i) {
    const double t = w.sample_time(i);
    const double u1 = (t - t1) / sigma;
    const double u2 = (t - t2) / sigma;
    shape[i] = std::exp(-0.5 * u1 * u1) -
               params.asymmetry * std::exp(-0.5 * u2 * u2);
    hi = std::max(hi, shape[i]);
    lo = std::min(lo, shape[i]);
  }
  const double span = hi - lo;
  const double scale =
      (span > 0.0 && params.peak_to_peak > 0.0) ? params.peak_to_peak / span
                                                : 0.0;
  for (std::size_t i = 0; i < count; ++i) w.samples[i] = scale * shape[i];

  if (params.artifact_amplitude != 0.0) {
    for (std::size_t i = 0; i < count; ++i) {
      const double t = w.sample_time(i);
      if (t >= params.artifact_onset &&
          t < params.artifact_onset + params.artifact_duration)
        w.samples[i] += params.artifact_amplitude;
    }
  }
  return w;
}

FieldWaveform scale_to_fourier_component(const FieldWaveform& w, double omega,
                                         double target_magnitude) {
  const double current = std::abs(fourier_component(w, omega));
  if (current <= 0.0)
    throw std::invalid_argument(
        "scale_to_fourier_component: waveform has no component at omega");
  FieldWaveform scaled = w;
  const double factor = target_magnitude / current;
  for (double& s : scaled.samples) s *= factor;
  return scaled;
}

FieldWaveform zero_waveform(double duration, double dt, FieldAxis axis) {
  if (dt <= 0.0 || duration < dt)
    throw std::invalid_argument("zero_waveform: invalid grid");
  FieldWaveform w;
  w.dt = dt;
  w.axis = axis;
  w.samples.assign(static_cast<std::size_t>(std::llround(duration / dt)),
                   0.0);
  return w;
}

double wire_field(double current_ampere, double distance_m) {
  if (distance_m <= 0.0)
    throw std::invalid_argument("wire_field: nonpositive distance");
  return constants::mu0 * current_ampere /
         (2.0 * std::numbers::pi * distance_m);
}

double invert_wire(double field_tesla, double distance_m) {
  if (distance_m <= 0.0)
    throw std::invalid_argument("invert_wire: nonpositive distance");
  return 2.0 * std::numbers::pi * distance_m * field_tesla / constants::mu0;
}

void save_waveform_csv(const FieldWaveform& w, const std::string& path) {
  w.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_waveform_csv: cannot open " + path);
  if (w.axis == FieldAxis::y) out << "# axis=y\n";
  out << "time_s,field_T\n";
  char line[80];
  for (std::size_t i = 0; i < w.samples.size(); ++i) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", w.sample_time(i),
                  w.samples[i]);
    out << line;
  }
}

FieldWaveform load_waveform_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_waveform_csv: cannot open " + path);
  FieldWaveform w;
  w.axis = FieldAxis::z;
  std::string line;
  std::vector<double> times;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      if (line.find("axis=y") != std::string::npos) w.axis = FieldAxis::y;
      continue;
    }
    if (!header_seen) {
      header_seen = true; // column header
      continue;
    }
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw std::runtime_error("load_waveform_csv: malformed row in " + path);
    times.push_back(std::stod(line.substr(0, comma)));
    w.samples.push_back(std::stod(line.substr(comma + 1)));
  }
  if (times.size() < 2)
    throw std::runtime_error("load_waveform_csv: need at least two rows");
  w.dt = times[1] - times[0];
  w.start_time = times[0] - 0.5 * w.dt;
  w.validate();
  return w;
}

}  // namespace nervemag
