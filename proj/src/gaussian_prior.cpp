#include <algorithm>

#include "drum/errors.hpp"
#include "drum/score_model.hpp"

namespace drum {

GaussianPrior::GaussianPrior(Tensor mean, Tensor variance) : mu(std::move(mean)), tau2(std::move(variance)) {
  require_same_shape(mu, tau2, "GaussianPrior");
  if (!std::all_of(tau2.values().begin(), tau2.values().end(), [](double v) { return v > 0.0; })) {
    throw InvalidArgument("GaussianPrior: variances must be positive");
  }
}

Tensor gaussian_predict_eps(const GaussianPrior& prior, const Tensor& x_t, TimePoint t,
                            const NoiseSchedule& schedule) {
  require_same_shape(prior.mu, x_t, "gaussian_predict_eps");
  const auto [alpha, sigma] = schedule.clamped(t);
  Tensor out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = sigma * (x_t[i] - alpha * prior.mu[i]) / (alpha * alpha * prior.tau2[i] + sigma * sigma);
  }
  return out;
}

Tensor gaussian_tweedie_vjp(const GaussianPrior& prior, const Tensor& x_t, TimePoint t, const Tensor& v,
                            const NoiseSchedule& schedule) {
  require_same_shape(prior.mu, x_t, "gaussian_tweedie_vjp");
  require_same_shape(x_t, v, "gaussian_tweedie_vjp");
  const auto [alpha, sigma] = schedule.clamped(t);
  Tensor out(v.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = v[i] * (alpha * prior.tau2[i] / (alpha * alpha * prior.tau2[i] + sigma * sigma));
  }
  return out;
}

Tensor gaussian_posterior_mean(const GaussianPrior& prior, const Tensor& x_t, TimePoint t,
                               const NoiseSchedule& schedule) {
  require_same_shape(prior.mu, x_t, "gaussian_posterior_mean");
  const auto [alpha, sigma] = schedule.clamped(t);
  Tensor out(x_t.shape());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double tau2 = prior.tau2[i];
    out[i] = (alpha * tau2 * x_t[i] + sigma * sigma * prior.mu[i]) / (alpha * alpha * tau2 + sigma * sigma);
  }
  return out;
}

namespace {

class GaussianLinearization final : public EpsLinearization {
 public:
  GaussianLinearization(const GaussianScoreModel& model, const Tensor& x_t, TimePoint t)
      : EpsLinearization(gaussian_predict_eps(model.prior(), x_t, t, model.schedule())),
        model_(model),
        x_t_(x_t),
        t_(t) {}

  Tensor tweedie_vjp(const Tensor& v) const override {
    return gaussian_tweedie_vjp(model_.prior(), x_t_, t_, v, model_.schedule());
  }

 private:
  const GaussianScoreModel& model_;
  Tensor x_t_;
  TimePoint t_;
};

}  // namespace

Tensor GaussianScoreModel::predict_eps(const Tensor& x_t, TimePoint t) const {
  return gaussian_predict_eps(prior_, x_t, t, schedule_);
}

std::unique_ptr<EpsLinearization> GaussianScoreModel::linearize(const Tensor& x_t, TimePoint t) const {
  return std::make_unique<GaussianLinearization>(*this, x_t, t);
}

}  // namespace drum
