#include "dag/diffusion.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "dag/error.hpp"

namespace dag {

double Schedule::alpha(int t) const {
  if (t < 0 || t > steps()) {
    throw ContractError("Schedule::alpha: timestep " + std::to_string(t) + " outside [0, " +
                        std::to_string(steps()) + "]");
  }
  return t == 0 ? 1.0 : alpha_bar[t - 1];
}

int Schedule::guided_iterations() const {
  return static_cast<int>(std::floor(guidance_window_fraction * steps() + 1e-9));
}

bool Schedule::in_guidance_window(int iteration) const { return iteration < guided_iterations(); }

Schedule make_schedule(int steps, double beta_min, double beta_max) {
  if (steps < 2 || steps > kTrainingSteps) {
    throw ConfigError("schedule needs 2 <= T <= " + std::to_string(kTrainingSteps));
  }
  if (!(beta_min >= 0.0) || !(beta_min <= beta_max) || !(beta_max < 1.0)) {
    throw ConfigError("schedule needs 0 <= beta_min <= beta_max < 1");
  }
  std::vector<double> full(kTrainingSteps);
  double prod = 1.0;
  for (int i = 0; i < kTrainingSteps; ++i) {
    const double beta = beta_min + (beta_max - beta_min) * i / (kTrainingSteps - 1);
    prod *= 1.0 - beta;
    full[i] = prod;
  }
  Schedule s;
  const int stride = kTrainingSteps / steps;
  for (int k = 0; k < steps; ++k) {
    s.grid_index.push_back(k * stride);
    s.alpha_bar.push_back(full[k * stride]);
  }
  return s;
}

void MixtureModel::validate() const {
  if (modes.empty()) throw ContractError("mixture has no modes");
  if (weights.size() != modes.size()) throw ContractError("mixture needs one weight per mode");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0)) throw ContractError("mixture weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("mixture weights must sum to 1");
  for (const Image& m : modes)
    if (m.shape() != modes.front().shape()) throw ContractError("mixture modes differ in shape");
  if (!(mode_stddev >= 0.0)) throw ContractError("mixture mode_stddev must be nonnegative");
}

namespace {

double mode_variance(double alpha_bar, const MixtureModel& mix) {
  const double v = alpha_bar * mix.mode_stddev * mix.mode_stddev + (1.0 - alpha_bar);
  if (!(v > 0.0)) throw ContractError("noised mixture has zero variance (alpha_bar = 1, s = 0)");
  return v;
}

// Log responsibilities up to a shared constant: log w_k - |x - sqrt(a) mu_k|^2 / 2v.
std::vector<double> mode_logits(const Image& x, double alpha_bar, double v, const MixtureModel& mix) {
  const double sa = std::sqrt(alpha_bar);
  std::vector<double> logits(mix.modes.size());
  for (std::size_t k = 0; k < mix.modes.size(); ++k) {
    double d2 = 0.0;
    const Image& mu = mix.modes[k];
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - sa * mu[i];
      d2 += d * d;
    }
    logits[k] = (mix.weights[k] > 0.0 ? std::log(mix.weights[k]) : -INFINITY) - d2 / (2.0 * v);
  }
  return logits;
}

double log_sum_exp(const std::vector<double>& v) {
  double m = -INFINITY;
  for (double x : v) m = std::max(m, x);
  if (m == -INFINITY) return m;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

}  // namespace

Image exact_epsilon(const Image& x_t, double alpha_bar, const MixtureModel& mix) {
  mix.validate();
  if (x_t.shape() != mix.shape()) throw ContractError("exact_epsilon: shape mismatch");
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) throw ContractError("exact_epsilon: alpha_bar outside (0, 1]");
  const double v = mode_variance(alpha_bar, mix);
  const double sa = std::sqrt(alpha_bar);
  std::vector<double> logits = mode_logits(x_t, alpha_bar, v, mix);
  const double lse = log_sum_exp(logits);

  // eps = sqrt(1 - a) / v * (x - sqrt(a) * sum_k r_k mu_k)
  Image mean_mode(x_t.shape(), 0.0);
  for (std::size_t k = 0; k < mix.modes.size(); ++k) {
    const double r = std::exp(logits[k] - lse);
    if (r == 0.0) continue;
    const Image& mu = mix.modes[k];
    for (std::size_t i = 0; i < x_t.size(); ++i) mean_mode[i] += r * mu[i];
  }
  const double c = std::sqrt(1.0 - alpha_bar) / v;
  Image eps(x_t.shape());
  for (std::size_t i = 0; i < x_t.size(); ++i) eps[i] = c * (x_t[i] - sa * mean_mode[i]);
  return eps;
}

Image exact_epsilon(const Image& x_t, int t, const MixtureModel& mix, const Schedule& schedule) {
  if (t < 1 || t > schedule.steps()) throw ContractError("exact_epsilon: timestep out of range");
  return exact_epsilon(x_t, schedule.alpha(t), mix);
}

double noised_log_density(const Image& x, double alpha_bar, const MixtureModel& mix) {
  mix.validate();
  const double v = mode_variance(alpha_bar, mix);
  const std::vector<double> logits = mode_logits(x, alpha_bar, v, mix);
  const double d = static_cast<double>(x.size());
  return log_sum_exp(logits) - 0.5 * d * std::log(2.0 * std::numbers::pi * v);
}

Image predict_x0(const Image& x_t, const Image& eps, double alpha_bar) {
  if (x_t.shape() != eps.shape()) throw ContractError("predict_x0: shape mismatch");
  if (!(alpha_bar > 0.0 && alpha_bar <= 1.0)) throw ContractError("predict_x0: alpha_bar outside (0, 1]");
  const double sa = std::sqrt(alpha_bar);
  const double sn = std::sqrt(1.0 - alpha_bar);
  Image out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - sn * eps[i]) / sa;
  return out;
}

Image predict_x0(const Image& x_t, const Image& eps, int t, const Schedule& schedule) {
  if (t < 1 || t > schedule.steps()) throw ContractError("predict_x0: timestep out of range");
  return predict_x0(x_t, eps, schedule.alpha(t));
}

Image ddim_update(const Image& x_t, const Image& eps, double alpha_bar, double alpha_bar_prev) {
  if (!(alpha_bar_prev > 0.0 && alpha_bar_prev <= 1.0)) {
    throw ContractError("ddim_update: alpha_bar_prev outside (0, 1]");
  }
  Image x0 = predict_x0(x_t, eps, alpha_bar);
  const double sa = std::sqrt(alpha_bar_prev);
  const double sn = std::sqrt(1.0 - alpha_bar_prev);
  for (std::size_t i = 0; i < x0.size(); ++i) x0[i] = sa * x0[i] + sn * eps[i];
  return x0;
}

Image ddim_step(const Image& x_t, const Image& eps_tilde, int t, const Schedule& schedule) {
  if (t < 1 || t > schedule.steps()) {
    throw ContractError("ddim_step: timestep " + std::to_string(t) + " outside [1, " +
                        std::to_string(schedule.steps()) + "]");
  }
  return ddim_update(x_t, eps_tilde, schedule.alpha(t), schedule.alpha(t - 1));
}

Image apply_guidance(const Image& eps_hat, const Image& grad_sum, int iteration,
                     const Schedule& schedule) {
  if (eps_hat.shape() != grad_sum.shape()) throw ContractError("apply_guidance: shape mismatch");
  if (!schedule.in_guidance_window(iteration)) return eps_hat;
  Image out = eps_hat;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += grad_sum[i];
  return out;
}

Image initial_noise(const Shape& shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Image x(shape);
  for (double& v : x.values()) v = normal(rng);
  return x;
}

}  // namespace dag
