#include <algorithm>
#include <cmath>
#include <numbers>

#include "gaitlab/errors.hpp"
#include "gaitlab/refmotion.hpp"

namespace gaitlab {

namespace {

struct Biquad {
  double b0, b1, b2, a1, a2;
};

// Second-order Butterworth low-pass via the bilinear transform. The analog
// cutoff is raised by the two-pass correction so that forward-backward
// filtering is -3 dB at `cutoff`.
Biquad design_lowpass(double sample_rate, double cutoff) {
  const double correction = std::pow(std::numbers::sqrt2 - 1.0, 0.25);
  const double k = std::tan(std::numbers::pi * cutoff / sample_rate) / correction;
  const double norm = 1.0 / (1.0 + std::numbers::sqrt2 * k + k * k);
  Biquad q{};
  q.b0 = k * k * norm;
  q.b1 = 2.0 * q.b0;
  q.b2 = q.b0;
  q.a1 = 2.0 * (k * k - 1.0) * norm;
  q.a2 = (1.0 - std::numbers::sqrt2 * k + k * k) * norm;
  return q;
}

// Direct form II transposed, initial state at steady state for x[0].
void run(const Biquad& q, std::vector<double>& x) {
  const double x0 = x.front();
  double z2 = (q.b2 - q.a2) * x0;
  double z1 = (q.b1 + q.b2 - q.a1 - q.a2) * x0;
  for (double& v : x) {
    const double in = v;
    const double y = q.b0 * in + z1;
    z1 = q.b1 * in - q.a1 * y + z2;
    z2 = q.b2 * in - q.a2 * y;
    v = y;
  }
}

}  // namespace

std::vector<double> zero_lag_lowpass(std::span<const double> signal, double sample_rate, double cutoff) {
  constexpr int kOrder = 4;
  const int n = static_cast<int>(signal.size());
  if (n <= 6 * kOrder)
    throw DataError("zero-lag filter needs more than " + std::to_string(6 * kOrder) + " samples, got " +
                    std::to_string(n));
  if (!(cutoff > 0.0) || !(cutoff < 0.5 * sample_rate))
    throw DataError("zero-lag filter cutoff must lie in (0, Nyquist)");
  const Biquad q = design_lowpass(sample_rate, cutoff);
  const int pad = std::min(n - 1, 3 * static_cast<int>(std::ceil(sample_rate / cutoff)));

  std::vector<double> x(n + 2 * pad);
  for (int i = 0; i < pad; ++i) x[i] = 2.0 * signal[0] - signal[pad - i];
  std::copy(signal.begin(), signal.end(), x.begin() + pad);
  for (int i = 0; i < pad; ++i) x[pad + n + i] = 2.0 * signal[n - 1] - signal[n - 2 - i];

  run(q, x);
  std::reverse(x.begin(), x.end());
  run(q, x);
  std::reverse(x.begin(), x.end());
  return {x.begin() + pad, x.begin() + pad + n};
}

Eigen::MatrixXd zero_lag_lowpass(const Eigen::MatrixXd& columns, double sample_rate, double cutoff) {
  Eigen::MatrixXd out(columns.rows(), columns.cols());
  std::vector<double> col(columns.rows());
  for (int c = 0; c < columns.cols(); ++c) {
    for (int r = 0; r < columns.rows(); ++r) col[r] = columns(r, c);
    const auto f = zero_lag_lowpass(col, sample_rate, cutoff);
    for (int r = 0; r < columns.rows(); ++r) out(r, c) = f[r];
  }
  return out;
}

SideEvents detect_side_events(std::span<const double> loading, double threshold, double sample_rate,
                              double debounce) {
  if (!(threshold > 0.0)) throw DataError("gait events: threshold must be positive");
  SideEvents ev;
  const int n = static_cast<int>(loading.size());
  if (n == 0) return ev;
  const int hold = std::max(1, static_cast<int>(std::lround(debounce * sample_rate)));
  bool above = loading[0] >= threshold;
  for (int i = 1; i < n; ++i) {
    const bool now = loading[i] >= threshold;
    if (now == above) continue;
    const int end = std::min(n, i + hold);
    bool stays = true;
    for (int k = i; k < end && stays; ++k) stays = (loading[k] >= threshold) == now;
    if (!stays) continue;
    // Linear crossing position between frames i - 1 and i.
    const double a = loading[i - 1], b = loading[i];
    const double frac = b != a ? std::clamp((threshold - a) / (b - a), 0.0, 1.0) : 1.0;
    const double pos = i - 1 + frac;
    if (now) {
      ev.strikes.push_back(i);
      ev.strike_positions.push_back(pos);
    } else {
      ev.offs.push_back(i);
      ev.off_positions.push_back(pos);
    }
    above = now;
  }
  return ev;
}

GaitEvents detect_gait_events(std::span<const double> left, std::span<const double> right, double threshold,
                              double sample_rate, double debounce) {
  GaitEvents ev;
  ev.sides[0] = detect_side_events(left, threshold, sample_rate, debounce);
  ev.sides[1] = detect_side_events(right, threshold, sample_rate, debounce);
  std::string missing;
  if (ev.sides[0].cycles() == 0) missing += "left";
  if (ev.sides[1].cycles() == 0) missing += missing.empty() ? "right" : " and right";
  if (!missing.empty()) throw DataError("gait events: zero complete cycles detected on " + missing);
  return ev;
}

GaitEvents detect_clip_events(const ReferenceClip& clip) {
  const int n = clip.frames();
  std::vector<double> l(n), r(n);
  if (clip.grf.cols() == 2) {
    for (int k = 0; k < n; ++k) {
      l[k] = clip.grf(k, 0);
      r[k] = clip.grf(k, 1);
    }
    return detect_gait_events(l, r, 0.05, clip.sample_rate);
  }
  // Foot landmark height within 1 cm of its minimum counts as loaded.
  const int fl = clip.landmark_index("foot_l"), fr = clip.landmark_index("foot_r");
  const double ml = clip.landmarks.col(2 * fl + 1).minCoeff();
  const double mr = clip.landmarks.col(2 * fr + 1).minCoeff();
  for (int k = 0; k < n; ++k) {
    l[k] = clip.landmarks(k, 2 * fl + 1) <= ml + 0.01 ? 1.0 : 0.0;
    r[k] = clip.landmarks(k, 2 * fr + 1) <= mr + 0.01 ? 1.0 : 0.0;
  }
  return detect_gait_events(l, r, 0.5, clip.sample_rate);
}

CycleAverage cycle_normalize(std::span<const double> signal, std::span<const double> strike_positions, int n_cycles,
                             int n_points, int skip) {
  if (n_cycles < 1 || n_points < 2 || skip < 0) throw DataError("cycle normalization: invalid counts");
  const int available = std::max(0, static_cast<int>(strike_positions.size()) - 1 - skip);
  if (available < n_cycles)
    throw DataError("cycle normalization: need " + std::to_string(n_cycles) + " complete cycles, found " +
                    std::to_string(available));
  const int n = static_cast<int>(signal.size());
  CycleAverage out;
  out.cycles.resize(n_cycles, n_points);
  for (int c = 0; c < n_cycles; ++c) {
    const double s0 = strike_positions[skip + c];
    const double s1 = strike_positions[skip + c + 1];
    if (!(s1 > s0) || s0 < 0.0 || s1 > n - 1)
      throw DataError("cycle normalization: strike positions out of range");
    for (int p = 0; p < n_points; ++p) {
      const double pos = s0 + (s1 - s0) * p / n_points;
      const int i = std::min(static_cast<int>(std::floor(pos)), n - 2);
      const double w = pos - i;
      out.cycles(c, p) = signal[i] + w * (signal[i + 1] - signal[i]);
    }
  }
  out.mean = out.cycles.colwise().mean().transpose();
  out.spread = Eigen::VectorXd::Zero(n_points);
  if (n_cycles > 1) {
    for (int p = 0; p < n_points; ++p) {
      const double m = out.mean[p];
      double ss = 0.0;
      for (int c = 0; c < n_cycles; ++c) ss += (out.cycles(c, p) - m) * (out.cycles(c, p) - m);
      out.spread[p] = std::sqrt(ss / (n_cycles - 1));
    }
  }
  return out;
}

}  // namespace gaitlab
