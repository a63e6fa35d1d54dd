#include "nervemag/dsp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "fft.hpp"

namespace nervemag {

std::size_t Spectrum::peak_bin() const {
  if (psd.size() < 2) throw std::runtime_error("Spectrum: too few bins");
  std::size_t best = 1;
  for (std::size_t k = 2; k < psd.size(); ++k)
    if (psd[k] > psd[best]) best = k; // strict: lowest frequency wins ties
  return best;
}

std::size_t Spectrum::bin_at(double f) const {
  const double k = f * window_length;
  const auto bin = static_cast<std::size_t>(std::llround(std::max(0.0, k)));
  return std::min(bin, psd.size() - 1);
}

Spectrum psd(std::span<const double> x, double dt) {
  if (x.size() < 2) throw std::invalid_argument("psd: need >= 2 samples");
  if (dt <= 0.0) throw std::invalid_argument("psd: dt <= 0");
  const std::size_t n = x.size();
  const double window = static_cast<double>(n) * dt;
  const auto bins = detail::rfft(std::vector<double>(x.begin(), x.end()));

  Spectrum s;
  s.window_length = window;
  s.frequency_hz.resize(bins.size());
  s.psd.resize(bins.size());
  const bool even = (n % 2 == 0);
  for (std::size_t k = 0; k < bins.size(); ++k) {
    s.frequency_hz[k] = static_cast<double>(k) / window;
    const bool interior = k > 0 && !(even && k == n / 2);
    const double fold = interior ? 2.0 : 1.0;
    s.psd[k] = fold * std::norm(bins[k] * dt) / window;
  }
  return s;
}

Spectrum psd(const DetectionRecord& record, double window_s) {
  record.validate();
  auto n = static_cast<std::size_t>(std::llround(window_s / record.dt));
  n = std::min(std::max<std::size_t>(n, 2), record.samples.size());
  return psd(std::span<const double>(record.samples.data(), n), record.dt);
}

namespace {

using Params = std::array<double, 2>;
using ResidualFn = std::function<std::vector<double>(const Params&)>;

double sum_sq(const std::vector<double>& r) {
  double s = 0.0;
  for (double v : r) s += v * v;
  return s;
}

// Small Levenberg-Marquardt for two-parameter residual functions with a
// forward-difference Jacobian. Returns true on convergence.
bool levenberg_marquardt(const ResidualFn& fn, Params& p,
                         int max_iterations = 120) {
  double lambda = 1e-3;
  std::vector<double> r = fn(p);
  double cost = sum_sq(r);
  for (int iter = 0; iter < max_iterations; ++iter) {
    // Jacobian columns.
    std::array<std::vector<double>, 2> jac;
    for (int j = 0; j < 2; ++j) {
      const double step = 1e-7 * std::max(1.0, std::abs(p[j]));
      Params q = p;
      q[j] += step;
      const auto rq = fn(q);
      jac[j].resize(r.size());
      for (std::size_t i = 0; i < r.size(); ++i)
        jac[j][i] = (rq[i] - r[i]) / step;
    }
    double jtj[2][2] = {{0, 0}, {0, 0}};
    double jtr[2] = {0, 0};
    for (std::size_t i = 0; i < r.size(); ++i) {
      jtj[0][0] += jac[0][i] * jac[0][i];
      jtj[0][1] += jac[0][i] * jac[1][i];
      jtj[1][1] += jac[1][i] * jac[1][i];
      jtr[0] += jac[0][i] * r[i];
      jtr[1] += jac[1][i] * r[i];
    }
    bool stepped = false;
    for (int attempt = 0; attempt < 12; ++attempt) {
      const double a00 = jtj[0][0] * (1.0 + lambda);
      const double a11 = jtj[1][1] * (1.0 + lambda);
      const double a01 = jtj[0][1];
      const double det = a00 * a11 - a01 * a01;
      if (det == 0.0 || !std::isfinite(det)) {
        lambda *= 10.0;
        continue;
      }
      const double d0 = -(a11 * jtr[0] - a01 * jtr[1]) / det;
      const double d1 = -(-a01 * jtr[0] + a00 * jtr[1]) / det;
      Params q = {p[0] + d0, p[1] + d1};
      const auto rq = fn(q);
      const double cq = sum_sq(rq);
      if (cq < cost) {
        const double rel_step =
            std::max(std::abs(d0) / std::max(1.0, std::abs(p[0])),
                     std::abs(d1) / std::max(1.0, std::abs(p[1])));
        const double improvement = (cost - cq) / std::max(cost, 1e-300);
        p = q;
        r = rq;
        cost = cq;
        lambda = std::max(lambda * 0.3, 1e-12);
        stepped = true;
        if (rel_step < 1e-11 || improvement < 1e-14) return true;
        break;
      }
      lambda *= 10.0;
    }
    if (!stepped) return true; // local minimum at current parameters
  }
  return false;
}

struct QuadratureSolution {
  double a = 0.0; // sin coefficient
  double b = 0.0; // cos coefficient
  bool ok = false;
};

// Least-squares (a, b) for x ~ [a sin(w t) + b cos(w t)] exp(-g t).
QuadratureSolution solve_quadratures(std::span<const double> x, double dt,
                                     double omega, double decay) {
  double uu = 0, uv = 0, vv = 0, ux = 0, vx = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i) * dt;
    const double e = std::exp(-decay * t);
    const double u = std::sin(omega * t) * e;
    const double v = std::cos(omega * t) * e;
    uu += u * u;
    uv += u * v;
    vv += v * v;
    ux += u * x[i];
    vx += v * x[i];
  }
  const double det = uu * vv - uv * uv;
  QuadratureSolution q;
  if (std::abs(det) < 1e-300) return q;
  q.a = (vv * ux - uv * vx) / det;
  q.b = (uu * vx - uv * ux) / det;
  q.ok = true;
  return q;
}

std::vector<double> fid_residual(std::span<const double> x, double dt,
                                 double omega, double decay) {
  const auto q = solve_quadratures(x, dt, omega, decay);
  std::vector<double> r(x.size(), 0.0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = static_cast<double>(i) * dt;
    const double model = (q.a * std::sin(omega * t) + q.b * std::cos(omega * t)) *
                         std::exp(-decay * t);
    r[i] = x[i] - model;
  }
  return r;
}

// Decay-rate starting guess from a log-envelope fit over Larmor periods.
double envelope_decay_guess(std::span<const double> x, double dt,
                            double omega) {
  const double period = 2.0 * std::numbers::pi / omega;
  const auto chunk = std::max<std::size_t>(
      2, static_cast<std::size_t>(std::llround(period / dt)));
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t count = 0;
  for (std::size_t start = 0; start + chunk <= x.size(); start += chunk) {
    double ms = 0.0;
    for (std::size_t i = start; i < start + chunk; ++i) ms += x[i] * x[i];
    ms /= static_cast<double>(chunk);
    if (ms <= 0.0) continue;
    const double t =
        (static_cast<double>(start) + 0.5 * static_cast<double>(chunk)) * dt;
    const double y = 0.5 * std::log(ms); // log rms envelope
    sx += t;
    sy += y;
    sxx += t * t;
    sxy += t * y;
    ++count;
  }
  if (count < 2) return 1.0;
  const double denom = static_cast<double>(count) * sxx - sx * sx;
  if (denom <= 0.0) return 1.0;
  const double slope = (static_cast<double>(count) * sxy - sx * sy) / denom;
  return std::clamp(-slope, 1e-2, 1e6);
}

}  // namespace

FidFit fit_fid(const DetectionRecord& record) {
  FidFit fit;
  record.validate();
  const std::span<const double> x(record.samples);
  if (x.size() < 8) {
    fit.message = "record too short";
    return fit;
  }
  double power = 0.0;
  for (double v : x) power += v * v;
  if (power <= 0.0) {
    fit.message = "no oscillation to fit";
    return fit;
  }

  const Spectrum sp = psd(x, record.dt);
  const std::size_t peak = sp.peak_bin();
  if (sp.psd[peak] <= 0.0) {
    fit.message = "flat spectrum";
    return fit;
  }
  const double omega0 = 2.0 * std::numbers::pi * sp.frequency_hz[peak];
  const double duration = static_cast<double>(x.size()) * record.dt;
  if (omega0 * duration < 5.0 * 2.0 * std::numbers::pi) {
    fit.message = "fewer than 5 oscillation cycles in record";
    return fit;
  }
  const double decay0 = envelope_decay_guess(x, record.dt, omega0);

  // Variable projection: optimize (omega, log decay), quadratures solved
  // linearly inside the residual.
  Params p = {omega0, std::log(decay0)};
  const double dt = record.dt;
  const ResidualFn fn = [&x, dt](const Params& q) {
    return fid_residual(x, dt, q[0], std::exp(q[1]));
  };
  const bool converged = levenberg_marquardt(fn, p);
  if (!converged) {
    fit.message = "no convergence within iteration budget";
    return fit;
  }

  const double omega = p[0];
  const double decay = std::exp(p[1]);
  const auto q = solve_quadratures(x, dt, omega, decay);
  if (!q.ok || std::hypot(q.a, q.b) == 0.0) {
    fit.message = "degenerate quadrature solve";
    return fit;
  }
  fit.ok = true;
  fit.omega = omega;
  fit.decay_rate = decay;
  fit.amplitude = std::hypot(q.a, q.b);
  fit.phase = std::atan2(q.b, q.a);
  if (fit.phase >= std::numbers::pi) fit.phase -= 2.0 * std::numbers::pi;
  fit.residual_norm =
      std::sqrt(sum_sq(fid_residual(x, dt, omega, decay)) /
                static_cast<double>(x.size()));
  return fit;
}

CalibrationScale calibrate_pulsed(const DetectionRecord& cal_record,
                                  double cal_fourier, double window_s) {
  if (cal_fourier <= 0.0)
    throw std::invalid_argument("calibrate_pulsed: nonpositive reference");
  const Spectrum sp = psd(cal_record, window_s);
  const std::size_t peak = sp.peak_bin();
  if (sp.psd[peak] <= 0.0)
    throw std::runtime_error("calibrate_pulsed: vanishing calibration peak");
  CalibrationScale scale;
  scale.factor = cal_fourier / std::sqrt(sp.psd[peak]);
  scale.reference_fourier = cal_fourier;
  scale.peak_frequency_hz = sp.frequency_hz[peak];
  scale.peak_bin = peak;
  scale.window_s = sp.window_length;
  return scale;
}

double measure_fourier(const CalibrationScale& scale,
                       const DetectionRecord& record) {
  const Spectrum sp = psd(record, scale.window_s);
  if (scale.peak_bin >= sp.psd.size())
    throw std::invalid_argument("measure_fourier: record shorter than "
                                "calibration window");
  return scale.factor * std::sqrt(sp.psd[scale.peak_bin]);
}

DetectionRecord convolve_response(const FieldWaveform& field, double omega,
                                  double decay_rate, double gain) {
  field.validate();
  DetectionRecord rec;
  rec.dt = field.dt;
  rec.sequence = SequenceKind::continuous;
  const std::size_t n = field.samples.size();
  rec.samples.assign(n, 0.0);
  const double dt = field.dt;
  for (std::size_t m = 0; m < n; ++m) {
    const double b = field.samples[m];
    if (b == 0.0) continue;
    for (std::size_t i = m + 1; i < n; ++i) {
      // record sample i at t = i*dt, field sample m at (m + 1/2)*dt
      const double tau = (static_cast<double>(i - m) - 0.5) * dt;
      const double kernel =
          field.axis == FieldAxis::z
              ? std::sin(omega * tau) * std::exp(-decay_rate * tau)
              : -std::cos(omega * tau) * std::exp(-decay_rate * tau);
      rec.samples[i] += gain * kernel * b * dt;
    }
  }
  return rec;
}

ContinuousCalibration calibrate_continuous(const DetectionRecord& record,
                                           const FieldWaveform& applied) {
  ContinuousCalibration cal;
  record.validate();
  applied.validate();
  if (record.samples.size() != applied.samples.size()) {
    cal.message = "record and applied-field grids differ";
    return cal;
  }
  double power = 0.0;
  for (double v : record.samples) power += v * v;
  if (power <= 0.0) {
    cal.message = "empty record";
    return cal;
  }

  const Spectrum sp = psd(record, record.dt * 1e12);
  const double omega0 =
      2.0 * std::numbers::pi * sp.frequency_hz[sp.peak_bin()];

  auto gain_for = [&](const DetectionRecord& model) {
    double mm = 0.0, mr = 0.0;
    for (std::size_t i = 0; i < model.samples.size(); ++i) {
      mm += model.samples[i] * model.samples[i];
      mr += model.samples[i] * record.samples[i];
    }
    return mm > 0.0 ? mr / mm : 0.0;
  };
  const ResidualFn fn = [&](const Params& p) {
    const DetectionRecord model =
        convolve_response(applied, p[0], std::exp(p[1]), 1.0);
    const double g = gain_for(model);
    std::vector<double> r(record.samples.size());
    for (std::size_t i = 0; i < r.size(); ++i)
      r[i] = record.samples[i] - g * model.samples[i];
    return r;
  };

  // Two decay starting points; the coherence time is not known a priori.
  Params best{};
  double best_cost = std::numeric_limits<double>::infinity();
  bool any = false;
  for (const double decay0 : {omega0, omega0 / 5.0}) {
    Params p = {omega0, std::log(decay0)};
    if (!levenberg_marquardt(fn, p)) continue;
    const double cost = sum_sq(fn(p));
    if (cost < best_cost) {
      best_cost = cost;
      best = p;
      any = true;
    }
  }
  if (!any) {
    cal.message = "no convergence within iteration budget";
    return cal;
  }
  const DetectionRecord model =
      convolve_response(applied, best[0], std::exp(best[1]), 1.0);
  cal.ok = true;
  cal.omega = best[0];
  cal.decay_rate = std::exp(best[1]);
  cal.gain = gain_for(model);
  cal.residual_norm =
      std::sqrt(best_cost / static_cast<double>(record.samples.size()));
  return cal;
}

FieldWaveform deconvolve(const DetectionRecord& record, double omega,
                         double decay_rate, double lambda_rel,
                         double lowpass_hz, double gain, FieldAxis axis) {
  record.validate();
  if (lambda_rel < 0.0)
    throw std::invalid_argument("deconvolve: negative regularization");
  if (gain == 0.0) throw std::invalid_argument("deconvolve: zero gain");
  const std::size_t n = record.samples.size();
  std::size_t m = 1;
  while (m < 2 * n) m *= 2;

  std::vector<double> padded(m, 0.0);
  std::copy(record.samples.begin(), record.samples.end(), padded.begin());
  std::vector<double> kernel(m, 0.0);
  const double dt = record.dt;
  for (std::size_t j = 1; j < m / 2; ++j) {
    const double tau = (static_cast<double>(j) - 0.5) * dt;
    kernel[j] = (axis == FieldAxis::z
                     ? std::sin(omega * tau)
                     : -std::cos(omega * tau)) *
                std::exp(-decay_rate * tau) * dt;
  }

  const auto r_hat = detail::rfft(padded);
  const auto h_hat = detail::rfft(kernel);
  double max_h2 = 0.0, min_h2 = std::numeric_limits<double>::infinity();
  for (const auto& h : h_hat) {
    max_h2 = std::max(max_h2, std::norm(h));
    min_h2 = std::min(min_h2, std::norm(h));
  }
  if (lambda_rel == 0.0 && min_h2 < 1e-10 * max_h2)
    throw std::invalid_argument(
        "deconvolve: ill-posed, near-zero kernel bins need regularization");
  const double lambda = lambda_rel * max_h2;

  std::vector<std::complex<double>> b_hat(r_hat.size());
  const double total = static_cast<double>(m) * dt;
  for (std::size_t k = 0; k < r_hat.size(); ++k) {
    const double f = static_cast<double>(k) / total;
    double mask = 1.0;
    if (f >= lowpass_hz)
      mask = 0.0;
    else if (f > 0.8 * lowpass_hz)
      mask = 0.5 * (1.0 + std::cos(std::numbers::pi * (f - 0.8 * lowpass_hz) /
                                   (0.2 * lowpass_hz)));
    b_hat[k] = mask * r_hat[k] * std::conj(h_hat[k]) /
               (std::norm(h_hat[k]) + lambda) / gain;
  }
  const auto b = detail::irfft(b_hat, m);

  FieldWaveform out;
  out.dt = dt;
  out.axis = axis;
  out.samples.assign(b.begin(), b.begin() + static_cast<std::ptrdiff_t>(n));
  return out;
}

DetectionRecord average_shots(const std::vector<DetectionRecord>& records) {
  if (records.empty())
    throw std::invalid_argument("average_shots: no records");
  DetectionRecord mean = records.front();
  int total_avg = records.front().n_avg;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.samples.size() != mean.samples.size() || rec.dt != mean.dt)
      throw std::invalid_argument("average_shots: mismatched grids");
    for (std::size_t i = 0; i < mean.samples.size(); ++i)
      mean.samples[i] += rec.samples[i];
    total_avg += rec.n_avg;
  }
  const double inv = 1.0 / static_cast<double>(records.size());
  for (double& v : mean.samples) v *= inv;
  mean.n_avg = total_avg;
  return mean;
}

double snr(double signal_metric, double noise_std) {
  if (noise_std <= 0.0)
    throw std::invalid_argument("snr: nonpositive noise");
  return signal_metric / noise_std;
}

void save_spectrum_csv(const Spectrum& spectrum, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_spectrum_csv: cannot open " + path);
  out << "freq_hz,psd\n";
  char line[80];
  for (std::size_t k = 0; k < spectrum.psd.size(); ++k) {
    std::snprintf(line, sizeof line, "%.17g,%.17g\n", spectrum.frequency_hz[k],
                  spectrum.psd[k]);
    out << line;
  }
}

}  // namespace nervemag
