#pragma once

#include <string>

#include "noisyens/core.hpp"
#include "noisyens/rng.hpp"

namespace noisyens {

/// Diagonal covariance for the requested profile, with
/// Tr(Sigma) = T * eps_y / snr for every profile and T.
///
/// equi_variance: Sigma = (eps_y / snr) I.
/// noisier_subset: one channel in m gets variance a * sigma^2, interleaved
///   starting at index 1 (m = 2 alternates sigma^2, a sigma^2, ...).
/// single_noisy: channel 0 gets sigma_1^2 = T eps_y / ((1 + (T-1)/a) snr),
///   the rest sigma_1^2 / a.
NoiseModel build_noise_profile(const NoiseProfileSpec& spec, int T);

/// 10 log10(snr).
double snr_db(double snr_linear);

/// Inverse of snr_db.
double snr_from_db(double db);

/// One draw of n ~ N(0, Sigma) via a PSD square-root factor.
Vector sample_noise(const NoiseModel& model, CounterRng& rng);

/// Caches the covariance factor so repeated draws cost one matrix-vector
/// product. Diagonal covariances use the cheap per-channel path.
class NoiseSampler {
 public:
  explicit NoiseSampler(const NoiseModel& model);

  Eigen::Index size() const { return scale_.size() > 0 ? scale_.size() : factor_.rows(); }
  bool is_zero() const { return zero_; }

  void draw_into(CounterRng& rng, Vector& out) const;
  Vector draw(CounterRng& rng) const;

 private:
  Matrix factor_;  // dense square root, used when not diagonal
  Vector scale_;   // per-channel standard deviations, used when diagonal
  bool zero_ = false;
};

/// CLI-facing spellings: "equi-variance", "noisier-subset:m=2,a=20",
/// "single-noisy:a=20".
NoiseProfileSpec profile_from_string(const std::string& text);
std::string profile_to_string(const NoiseProfileSpec& spec);

}  // namespace noisyens
