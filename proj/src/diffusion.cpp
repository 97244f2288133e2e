#include "drum/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "drum/errors.hpp"

namespace drum {

TimePoint::TimePoint(double t) : t_(t) {
  if (!(t >= 0.0 && t <= 1.0)) throw InvalidArgument("time must lie in [0, 1], got " + std::to_string(t));
}

Coefficients NoiseSchedule::at(TimePoint t) const {
  const double v = t.value();
  if (v == 0.0) return {1.0, 0.0};
  if (v == 1.0) return {0.0, 1.0};
  const double half_pi_t = 0.5 * std::numbers::pi * v;
  return {std::cos(half_pi_t), std::sin(half_pi_t)};
}

Coefficients NoiseSchedule::clamped(TimePoint t) const {
  return at(TimePoint(std::clamp(t.value(), kTimeFloor, kTimeCeil)));
}

double NoiseSchedule::log_snr(TimePoint t) const {
  const auto [alpha, sigma] = clamped(t);
  return 2.0 * (std::log(alpha) - std::log(sigma));
}

Coefficients alpha_sigma(const NoiseSchedule& schedule, TimePoint t) { return schedule.at(t); }

Tensor forward_noise(const Tensor& x0, TimePoint t, const Tensor& eps, const NoiseSchedule& schedule) {
  require_same_shape(x0, eps, "forward_noise");
  const auto [alpha, sigma] = schedule.at(t);
  return axpby(alpha, x0, sigma, eps);
}

Tensor tweedie_unclipped(const Tensor& x_t, const Tensor& eps_hat, Coefficients c) {
  require_same_shape(x_t, eps_hat, "tweedie");
  if (!(c.alpha > 0.0)) throw DegenerateTime("tweedie: alpha_t is zero");
  Tensor out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - c.sigma * eps_hat[i]) / c.alpha;
  return out;
}

Tensor tweedie(const Tensor& x_t, const Tensor& eps_hat, Coefficients c) {
  Tensor out = tweedie_unclipped(x_t, eps_hat, c);
  for (double& v : out.values()) v = std::clamp(v, -kClipBound, kClipBound);
  return out;
}

Tensor tweedie(const Tensor& x_t, const Tensor& eps_hat, TimePoint t, const NoiseSchedule& schedule) {
  return tweedie(x_t, eps_hat, schedule.clamped(t));
}

Tensor eps_to_score(const Tensor& eps_hat, Coefficients c) {
  if (!(c.sigma > 0.0)) throw DegenerateTime("eps_to_score: sigma_t is zero");
  Tensor out(eps_hat.shape());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = -eps_hat[i] / c.sigma;
  return out;
}

Tensor eps_to_score(const Tensor& eps_hat, TimePoint t, const NoiseSchedule& schedule) {
  return eps_to_score(eps_hat, schedule.clamped(t));
}

Tensor score_to_eps(const Tensor& score, Coefficients c) { return scaled(score, -c.sigma); }

Tensor score_to_eps(const Tensor& score, TimePoint t, const NoiseSchedule& schedule) {
  return score_to_eps(score, schedule.clamped(t));
}

Tensor ddim_step(const Tensor& x_t, const Tensor& eps_cond, TimePoint t, TimePoint s,
                 const NoiseSchedule& schedule) {
  if (!(s < t)) throw InvalidArgument("ddim_step: target time must be strictly below the current time");
  const Coefficients ct = schedule.clamped(t);
  const Tensor x_hat = tweedie(x_t, eps_cond, ct);
  const auto [alpha_s, sigma_s] = schedule.at(s);
  // Where the estimate was clipped, take the noise implied by the clipped value so the
  // state cannot run away with an unbounded eps.
  Tensor eps = eps_cond;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    if (std::abs(x_hat[i]) == kClipBound) eps[i] = (x_t[i] - ct.alpha * x_hat[i]) / ct.sigma;
  }
  return axpby(alpha_s, x_hat, sigma_s, eps);
}

Tensor renoise_with(const Tensor& x_s, TimePoint s, TimePoint t, const NoiseSchedule& schedule,
                    const Tensor& eps) {
  if (!(t > s)) throw InvalidArgument("renoise: target time must be strictly above the current time");
  require_same_shape(x_s, eps, "renoise");
  const auto [alpha_s, sigma_s] = schedule.at(s);
  const auto [alpha_t, sigma_t] = schedule.at(t);
  if (!(alpha_s > 0.0)) throw DegenerateTime("renoise: alpha_s is zero");
  const double ratio = alpha_t / alpha_s;
  double radicand = sigma_t * sigma_t - ratio * ratio * sigma_s * sigma_s;
  if (radicand < -1e-12) {
    throw ScheduleInconsistency("renoise: negative transition variance " + std::to_string(radicand));
  }
  radicand = std::max(radicand, 0.0);
  return axpby(ratio, x_s, std::sqrt(radicand), eps);
}

Tensor renoise(const Tensor& x_s, TimePoint s, TimePoint t, const NoiseSchedule& schedule, Rng& rng) {
  if (!(t > s)) throw InvalidArgument("renoise: target time must be strictly above the current time");
  return renoise_with(x_s, s, t, schedule, gaussian_tensor(x_s.shape(), rng));
}

}  // namespace drum
