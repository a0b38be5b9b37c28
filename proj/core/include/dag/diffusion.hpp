#pragma once

// Noise schedule, closed-form noise prediction for Gaussian-mixture data,
// the one-step clean-image estimate, the deterministic DDIM update and the
// guidance injection into the predicted noise.

#include <cstdint>
#include <vector>

#include "dag/image.hpp"

namespace dag {

// Guidance weight per alignment module, applied inside the guidance window.
struct ModuleWeights {
  double dca = 60.0;
  double dga = 25.0;
  double dma = 90.0;
};

inline constexpr int kTrainingSteps = 1000;
inline constexpr int kDefaultSteps = 50;
inline constexpr double kDefaultBetaMin = 1e-4;
inline constexpr double kDefaultBetaMax = 0.02;
inline constexpr double kDefaultGuidanceWindow = 0.7;
inline constexpr double kDefaultModeStddev = 0.05;

struct Schedule {
  // alpha_bar[k] is the cumulative signal level at sampling step t = k + 1,
  // so alpha_bar.front() is the cleanest and alpha_bar.back() the noisiest.
  std::vector<double> alpha_bar;
  // Index into the 1000-step training grid kept for each entry.
  std::vector<int> grid_index;
  double guidance_window_fraction = kDefaultGuidanceWindow;
  ModuleWeights weights;

  int steps() const { return static_cast<int>(alpha_bar.size()); }
  // t in [0, T]; alpha(0) = 1 is the clean endpoint.
  double alpha(int t) const;
  // Number of leading sampling iterations that receive guidance.
  int guided_iterations() const;
  // Iteration 0 is the first sampling step (t = T).
  bool in_guidance_window(int iteration) const;
  int timestep(int iteration) const { return steps() - iteration; }
};

// Linear beta grid over 1000 training steps, cumulative product, uniformly
// subsampled to `steps` entries (kept indices 0, stride, 2*stride, ...).
Schedule make_schedule(int steps = kDefaultSteps, double beta_min = kDefaultBetaMin,
                       double beta_max = kDefaultBetaMax);

struct MixtureModel {
  std::vector<Image> modes;
  std::vector<double> weights;
  double mode_stddev = kDefaultModeStddev;

  void validate() const;
  const Shape& shape() const { return modes.front().shape(); }
};

// -sqrt(1 - a) * grad log p_a(x) for the mixture noised to signal level a.
Image exact_epsilon(const Image& x_t, double alpha_bar, const MixtureModel& mix);
Image exact_epsilon(const Image& x_t, int t, const MixtureModel& mix, const Schedule& schedule);

// log p_a(x) of the noised mixture (full normalizing constants).
double noised_log_density(const Image& x, double alpha_bar, const MixtureModel& mix);

// x0 = (x_t - sqrt(1 - a) eps) / sqrt(a)
Image predict_x0(const Image& x_t, const Image& eps, double alpha_bar);
Image predict_x0(const Image& x_t, const Image& eps, int t, const Schedule& schedule);

// x_prev = sqrt(a_prev) x0 + sqrt(1 - a_prev) eps, x0 from predict_x0.
Image ddim_update(const Image& x_t, const Image& eps, double alpha_bar, double alpha_bar_prev);
Image ddim_step(const Image& x_t, const Image& eps_tilde, int t, const Schedule& schedule);

// eps + grad_sum inside the guidance window, eps (bitwise) outside it.
// grad_sum is the already-weighted sum of module gradients w.r.t. x_t.
Image apply_guidance(const Image& eps_hat, const Image& grad_sum, int iteration,
                     const Schedule& schedule);

// Standard normal draw for x_T.
Image initial_noise(const Shape& shape, std::uint64_t seed);

}  // namespace dag
