#pragma once

#include <memory>

#include "drum/diffusion.hpp"
#include "drum/tensor.hpp"

namespace drum {

// An eps-prediction evaluated at a fixed (x_t, t), able to pull vectors back
// through the (unclipped) Tweedie map x_hat(x_t) = (x_t - sigma_t eps(x_t, t)) / alpha_t.
class EpsLinearization {
 public:
  virtual ~EpsLinearization() = default;

  const Tensor& eps() const { return eps_; }

  // v^T dx_hat/dx_t, returned as a tensor shaped like x_t.
  virtual Tensor tweedie_vjp(const Tensor& v) const = 0;

 protected:
  explicit EpsLinearization(Tensor eps) : eps_(std::move(eps)) {}
  Tensor eps_;
};

class ScoreModel {
 public:
  virtual ~ScoreModel() = default;

  virtual const NoiseSchedule& schedule() const = 0;

  virtual Tensor predict_eps(const Tensor& x_t, TimePoint t) const = 0;

  // One forward evaluation whose result also serves vector-Jacobian products.
  virtual std::unique_ptr<EpsLinearization> linearize(const Tensor& x_t, TimePoint t) const = 0;

  Tensor tweedie_vjp(const Tensor& x_t, TimePoint t, const Tensor& v) const {
    return linearize(x_t, t)->tweedie_vjp(v);
  }
};

// Independent Gaussian prior N(mu, diag(tau2)); its score is known in closed form.
struct GaussianPrior {
  Tensor mu;
  Tensor tau2;

  GaussianPrior(Tensor mean, Tensor variance);
};

// sigma (x_t - alpha mu) / (alpha^2 tau2 + sigma^2), evaluated at the clamped time.
Tensor gaussian_predict_eps(const GaussianPrior& prior, const Tensor& x_t, TimePoint t,
                            const NoiseSchedule& schedule);

// v * alpha tau2 / (alpha^2 tau2 + sigma^2), the exact diagonal Tweedie Jacobian.
Tensor gaussian_tweedie_vjp(const GaussianPrior& prior, const Tensor& x_t, TimePoint t, const Tensor& v,
                            const NoiseSchedule& schedule);

// Posterior mean E[x_0 | x_t] = (alpha tau2 x_t + sigma^2 mu) / (alpha^2 tau2 + sigma^2).
Tensor gaussian_posterior_mean(const GaussianPrior& prior, const Tensor& x_t, TimePoint t,
                               const NoiseSchedule& schedule);

class GaussianScoreModel final : public ScoreModel {
 public:
  explicit GaussianScoreModel(GaussianPrior prior, NoiseSchedule schedule = NoiseSchedule{})
      : prior_(std::move(prior)), schedule_(schedule) {}

  const GaussianPrior& prior() const { return prior_; }
  const NoiseSchedule& schedule() const override { return schedule_; }
  Tensor predict_eps(const Tensor& x_t, TimePoint t) const override;
  std::unique_ptr<EpsLinearization> linearize(const Tensor& x_t, TimePoint t) const override;

 private:
  GaussianPrior prior_;
  NoiseSchedule schedule_;
};

}  // namespace drum
