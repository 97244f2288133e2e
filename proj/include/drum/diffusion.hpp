#pragma once

// Variance-preserving diffusion: p(x_t | x_0) = N(alpha_t x_0, sigma_t^2 I)
// with alpha_t^2 + sigma_t^2 = 1 over continuous time t in [0, 1].

#include "drum/tensor.hpp"

namespace drum {

// Continuous diffusion time; t = 1 is pure noise, t = 0 is data.
class TimePoint {
 public:
  explicit TimePoint(double t);
  double value() const { return t_; }
  auto operator<=>(const TimePoint&) const = default;

 private:
  double t_;
};

struct Coefficients {
  double alpha;
  double sigma;
};

// Whenever alpha_t or sigma_t is used as a divisor, t is first clamped into
// [kTimeFloor, kTimeCeil] so neither coefficient is zero.
inline constexpr double kTimeFloor = 1e-4;
inline constexpr double kTimeCeil = 1.0 - 1e-4;

// Tweedie estimates are clipped to [-kClipBound, kClipBound].
inline constexpr double kClipBound = 1.2;

enum class ScheduleKind { cosine };

class NoiseSchedule {
 public:
  explicit NoiseSchedule(ScheduleKind kind = ScheduleKind::cosine) : kind_(kind) {}

  ScheduleKind kind() const { return kind_; }

  // Exact coefficients; (1, 0) at t = 0 and (0, 1) at t = 1.
  Coefficients at(TimePoint t) const;

  // Coefficients at t clamped into [kTimeFloor, kTimeCeil].
  Coefficients clamped(TimePoint t) const;

  // log(alpha^2 / sigma^2) at the clamped time.
  double log_snr(TimePoint t) const;

 private:
  ScheduleKind kind_;
};

Coefficients alpha_sigma(const NoiseSchedule& schedule, TimePoint t);

// alpha_t x0 + sigma_t eps.
Tensor forward_noise(const Tensor& x0, TimePoint t, const Tensor& eps, const NoiseSchedule& schedule);

// (x_t - sigma eps_hat) / alpha without clipping. Throws DegenerateTime if alpha <= 0.
Tensor tweedie_unclipped(const Tensor& x_t, const Tensor& eps_hat, Coefficients c);

// Clipped Tweedie estimate of x_0.
Tensor tweedie(const Tensor& x_t, const Tensor& eps_hat, Coefficients c);
Tensor tweedie(const Tensor& x_t, const Tensor& eps_hat, TimePoint t, const NoiseSchedule& schedule);

// s = -eps / sigma. Throws DegenerateTime if sigma <= 0.
Tensor eps_to_score(const Tensor& eps_hat, Coefficients c);
Tensor eps_to_score(const Tensor& eps_hat, TimePoint t, const NoiseSchedule& schedule);

// eps = -sigma s.
Tensor score_to_eps(const Tensor& score, Coefficients c);
Tensor score_to_eps(const Tensor& score, TimePoint t, const NoiseSchedule& schedule);

// Deterministic DDIM step t -> s (s < t): alpha_s x_hat + sigma_s eps_cond, where
// x_hat is the clipped Tweedie estimate under eps_cond. At clipped entries eps_cond
// is replaced by (x_t - alpha_t x_hat) / sigma_t.
Tensor ddim_step(const Tensor& x_t, const Tensor& eps_cond, TimePoint t, TimePoint s,
                 const NoiseSchedule& schedule);

// Forward transition s -> t (t > s) of the VP process:
// (alpha_t/alpha_s) x_s + sqrt(sigma_t^2 - (alpha_t/alpha_s)^2 sigma_s^2) eps.
Tensor renoise(const Tensor& x_s, TimePoint s, TimePoint t, const NoiseSchedule& schedule, Rng& rng);

// Same transition with caller-supplied noise.
Tensor renoise_with(const Tensor& x_s, TimePoint s, TimePoint t, const NoiseSchedule& schedule,
                    const Tensor& eps);

}  // namespace drum
