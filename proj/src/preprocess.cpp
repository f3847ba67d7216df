#include <algorithm>
#include <cstdint>
#include <cmath>

#include "gaitlab/errors.hpp"
#include "gaitlab/refmotion.hpp"

namespace gaitlab {

namespace {

std::vector<std::uint8_t> stance_mask(const ReferenceClip& clip, int side, double threshold) {
  std::vector<std::uint8_t> m(clip.frames());
  if (clip.contact.cols() == 2) {
    for (int k = 0; k < clip.frames(); ++k) m[k] = clip.contact(k, side) > 0.5;
  } else if (clip.grf.cols() == 2) {
    for (int k = 0; k < clip.frames(); ++k) m[k] = clip.grf(k, side) > threshold;
  } else {
    throw DataError("clip has neither contact flags nor GRF; stance cannot be identified");
  }
  return m;
}

}  // namespace

PreprocessResult preprocess_clip(const ReferenceClip& raw, const PreprocessOptions& opt) {
  raw.validate();
  PreprocessResult out;
  const int toes[2] = {raw.landmark_index(opt.toe_left), raw.landmark_index(opt.toe_right)};
  std::vector<std::vector<double>> toe_x(2);
  std::vector<std::vector<std::uint8_t>> stance(2);
  for (int s = 0; s < 2; ++s) {
    const Eigen::VectorXd x = raw.landmarks.col(2 * toes[s]);
    toe_x[s].assign(x.data(), x.data() + x.size());
    stance[s] = stance_mask(raw, s, opt.stance_threshold);
    if (opt.toe_flat_band > 0.0) {
      const Eigen::VectorXd y = raw.landmarks.col(2 * toes[s] + 1);
      std::vector<double> h;
      for (int k = 0; k < raw.frames(); ++k)
        if (stance[s][k]) h.push_back(y[k]);
      if (h.empty()) continue;
      std::nth_element(h.begin(), h.begin() + h.size() / 2, h.end());
      const double flat = h[h.size() / 2];
      for (int k = 0; k < raw.frames(); ++k)
        stance[s][k] = stance[s][k] && std::abs(y[k] - flat) <= opt.toe_flat_band;
    }
  }
  out.belt = estimate_belt_speed(toe_x, stance, raw.sample_rate);

  ReferenceClip clip = opt.treadmill ? to_overground(raw, out.belt.speed) : raw;
  if (opt.filter_cutoff > 0.0) {
    clip.angles = zero_lag_lowpass(clip.angles, clip.sample_rate, opt.filter_cutoff);
    clip.velocities = zero_lag_lowpass(clip.velocities, clip.sample_rate, opt.filter_cutoff);
    clip.moments = zero_lag_lowpass(clip.moments, clip.sample_rate, opt.filter_cutoff);
    if (clip.grf.cols() > 0) clip.grf = zero_lag_lowpass(clip.grf, clip.sample_rate, opt.filter_cutoff);
  }
  clip.validate();
  out.events = detect_clip_events(clip);
  if (opt.mirror) out.mirrored = mirror_clip(clip);
  out.clip = std::move(clip);
  return out;
}

}  // namespace gaitlab
