#include "drum/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drum/errors.hpp"

namespace drum {

Tensor MeasurementOperator::apply(const Tensor& x) const {
  Tensor out = x;
  for (std::size_t c = 0; c < out.shape().channels; ++c) {
    if (c == kRangeChannel) continue;
    auto plane = out.channel(c);
    std::fill(plane.begin(), plane.end(), 0.0);
  }
  return out;
}

Tensor MeasurementOperator::pinv_apply(const Tensor& y) const { return apply(y); }

void GuidanceConfig::validate() const {
  if (!(guidance_scale >= 0.0)) throw InvalidArgument("guidance scale must be non-negative");
  if (!(eta >= -1.0 && eta <= 1.0)) throw InvalidArgument("mask threshold eta must lie in [-1, 1]");
}

RaydropMask RaydropMask::ones(std::size_t height, std::size_t width) {
  return {height, width, std::vector<std::uint8_t>(height * width, 1)};
}

std::size_t RaydropMask::count() const { return std::accumulate(bits.begin(), bits.end(), std::size_t{0}); }

double RaydropMask::fill_ratio() const {
  return bits.empty() ? 0.0 : static_cast<double>(count()) / static_cast<double>(bits.size());
}

double r_schedule(TimePoint t, const NoiseSchedule& schedule) {
  const auto [alpha, sigma] = schedule.at(t);
  return std::sqrt(sigma * sigma / (alpha * alpha + sigma * sigma));
}

RaydropMask progressive_mask(const Tensor& x_hat, double eta) {
  const Shape s = x_hat.shape();
  if (s.channels <= kRangeChannel) throw InvalidArgument("progressive_mask: tensor has no range channel");
  RaydropMask m{s.height, s.width, std::vector<std::uint8_t>(s.plane(), 0)};
  const auto range = x_hat.channel(kRangeChannel);
  for (std::size_t i = 0; i < range.size(); ++i) m.bits[i] = range[i] > eta ? 1 : 0;
  return m;
}

namespace {

Tensor guidance_residual(const Tensor& x_hat, const Tensor& y, const MeasurementOperator& h) {
  require_same_shape(x_hat, y, "guidance residual");
  return axpby(1.0, h.pinv_apply(y), -1.0, h.projector(x_hat));
}

}  // namespace

Tensor pigdm_gradient(const EpsLinearization& lin, const Tensor& x_t, TimePoint t, const Tensor& y,
                      const MeasurementOperator& h, const GuidanceConfig& cfg, const NoiseSchedule& schedule) {
  cfg.validate();
  const double r = r_schedule(t, schedule);
  if (!(r > 0.0)) throw DegenerateTime("pigdm_gradient: r_t is zero");
  if (cfg.guidance_scale == 0.0) return Tensor(x_t.shape());

  const Coefficients c = schedule.clamped(t);
  const Tensor x_hat = tweedie(x_t, lin.eps(), c);
  const Tensor residual = guidance_residual(x_hat, y, h);
  const double factor = cfg.guidance_scale / (r * r);
  if (cfg.jacobian_mode == JacobianMode::identity_approx) return scaled(residual, factor / c.alpha);
  return scaled(lin.tweedie_vjp(residual), factor);
}

Tensor pigdm_gradient(const Tensor& x_t, TimePoint t, const Tensor& y, const ScoreModel& model,
                      const MeasurementOperator& h, const GuidanceConfig& cfg) {
  const auto lin = model.linearize(x_t, t);
  return pigdm_gradient(*lin, x_t, t, y, h, cfg, model.schedule());
}

ConditionalEps masked_conditional_eps(const Tensor& x_t, TimePoint t, const Tensor& y, const ScoreModel& model,
                                      const MeasurementOperator& h, const GuidanceConfig& cfg) {
  cfg.validate();
  require_same_shape(x_t, y, "masked_conditional_eps");
  const NoiseSchedule& schedule = model.schedule();
  const Coefficients c = schedule.clamped(t);
  const Shape s = x_t.shape();

  ConditionalEps out;
  std::unique_ptr<EpsLinearization> lin;
  if (cfg.guidance_scale == 0.0) {
    out.eps_uncond = model.predict_eps(x_t, t);
  } else {
    lin = model.linearize(x_t, t);
    out.eps_uncond = lin->eps();
  }
  out.x_hat = tweedie(x_t, out.eps_uncond, c);
  out.mask = cfg.mask_mode == MaskMode::progressive ? progressive_mask(out.x_hat, cfg.eta)
                                                    : RaydropMask::ones(s.height, s.width);

  const Tensor residual = guidance_residual(out.x_hat, y, h);
  double sq = 0.0;
  std::size_t n = 0;
  for (std::size_t ch = 0; ch < s.channels; ++ch) {
    const auto r = residual.channel(ch);
    for (std::size_t i = 0; i < s.plane(); ++i) {
      if (out.mask.bits[i]) {
        sq += r[i] * r[i];
        ++n;
      }
    }
  }
  out.residual_rms = n ? std::sqrt(sq / static_cast<double>(n)) : 0.0;

  if (!lin) {
    out.eps = out.eps_uncond;
    return out;
  }
  const Tensor g = pigdm_gradient(*lin, x_t, t, y, h, cfg, schedule);
  out.eps = out.eps_uncond;
  for (std::size_t ch = 0; ch < s.channels; ++ch) {
    auto e = out.eps.channel(ch);
    const auto gc = g.channel(ch);
    for (std::size_t i = 0; i < s.plane(); ++i) {
      if (out.mask.bits[i]) e[i] -= c.sigma * gc[i];
    }
  }
  return out;
}

}  // namespace drum
