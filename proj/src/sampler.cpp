#include "drum/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "drum/errors.hpp"

namespace drum {

void SamplerConfig::validate() const {
  if (!(t_init > 0.0 && t_init <= 1.0)) throw InvalidArgument("sampler: t_init must lie in (0, 1]");
  if (num_steps < 2) throw InvalidArgument("sampler: num_steps must be at least 2");
  guidance.validate();
}

std::vector<double> step_times(const SamplerConfig& cfg) {
  cfg.validate();
  std::vector<double> times{cfg.t_init};
  for (std::uint32_t k = cfg.num_steps; k-- > 0;) {
    const double t = static_cast<double>(k) / cfg.num_steps;
    if (t < cfg.t_init) times.push_back(t);
  }
  return times;
}

Tensor initialize_from_sim(const Tensor& y, TimePoint t_init, const NoiseSchedule& schedule, Rng& rng) {
  return forward_noise(y, t_init, gaussian_tensor(y.shape(), rng), schedule);
}

namespace {

void check_finite(const Tensor& x, std::size_t step) {
  if (!all_finite(x)) throw NumericFailure("non-finite value in sampling trajectory", static_cast<std::ptrdiff_t>(step));
}

Tensor guided_step(const Tensor& x_t, TimePoint t, TimePoint s, const Tensor& y, const ScoreModel& model,
                   const MeasurementOperator& h, const GuidanceConfig& guidance, StepDiagnostics& diag) {
  const ConditionalEps ce = masked_conditional_eps(x_t, t, y, model, h, guidance);
  diag.residual_rms = ce.residual_rms;
  diag.mask_fill = ce.mask.fill_ratio();
  ++diag.reverse_steps;
  return ddim_step(x_t, ce.eps, t, s, model.schedule());
}

}  // namespace

HarmonizedStep harmonized_step(const Tensor& x_t, TimePoint t, TimePoint s, const Tensor& y,
                               const ScoreModel& model, const MeasurementOperator& h, const SamplerConfig& cfg,
                               Rng& rng) {
  if (!(s < t)) throw InvalidArgument("harmonized_step: requires s < t");
  HarmonizedStep out;
  out.diagnostics.t = t.value();
  out.diagnostics.s = s.value();
  Tensor x = guided_step(x_t, t, s, y, model, h, cfg.guidance, out.diagnostics);
  for (std::uint32_t c = 0; c < cfg.resample_cycles; ++c) {
    const Tensor back = renoise(x, s, t, model.schedule(), rng);
    ++out.diagnostics.renoise_calls;
    x = guided_step(back, t, s, y, model, h, cfg.guidance, out.diagnostics);
  }
  out.state = std::move(x);
  return out;
}

Tensor finalize_sample(const Tensor& x0, const Tensor& y, const RaydropMask& mask0) {
  require_same_shape(x0, y, "finalize_sample");
  const Shape s = x0.shape();
  if (s.channels != 2) throw InvalidArgument("finalize_sample: expected a two-channel tensor");
  if (mask0.height != s.height || mask0.width != s.width) throw InvalidArgument("finalize_sample: mask shape mismatch");
  Tensor out(s);
  const auto y_range = y.channel(kRangeChannel);
  const auto x_refl = x0.channel(kReflectanceChannel);
  auto o_range = out.channel(kRangeChannel);
  auto o_refl = out.channel(kReflectanceChannel);
  for (std::size_t i = 0; i < s.plane(); ++i) {
    const bool valid = mask0.bits[i] != 0;
    o_range[i] = valid ? y_range[i] : -1.0;
    o_refl[i] = valid ? x_refl[i] : -1.0;
  }
  return out;
}

Tensor finalize_sample(const Tensor& x0, const Tensor& y, double eta) {
  return finalize_sample(x0, y, progressive_mask(x0, eta));
}

namespace {

RaydropMask final_mask(const Tensor& x0, const GuidanceConfig& g) {
  const Shape s = x0.shape();
  return g.mask_mode == MaskMode::progressive ? progressive_mask(x0, g.eta) : RaydropMask::ones(s.height, s.width);
}

void finish(TranslationResult& res, const Tensor& x, const Tensor& y, const GuidanceConfig& g) {
  res.x0 = x;
  res.mask0 = final_mask(x, g);
  res.finalized = finalize_sample(res.x0, y, res.mask0);
}

}  // namespace

TranslationResult drum_translate(const Tensor& y, const ScoreModel& model, const MeasurementOperator& h,
                                 const SamplerConfig& cfg, std::uint64_t stream) {
  const std::vector<double> times = step_times(cfg);
  Rng rng = make_rng(cfg.seed, stream);
  TranslationResult res;
  Tensor x = initialize_from_sim(y, TimePoint(cfg.t_init), model.schedule(), rng);
  check_finite(x, 0);
  if (cfg.record_trajectory) res.trajectory.push_back(x);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    HarmonizedStep step = harmonized_step(x, TimePoint(times[k]), TimePoint(times[k + 1]), y, model, h, cfg, rng);
    x = std::move(step.state);
    check_finite(x, k);
    res.diagnostics.push_back(step.diagnostics);
    if (cfg.record_trajectory) res.trajectory.push_back(x);
  }
  finish(res, x, y, cfg.guidance);
  return res;
}

RangeTranslation translate_range_image(const RangeImage& sim, const ScoreModel& model, const SamplerConfig& cfg,
                                       std::uint64_t stream, TranslationMethod method) {
  sim.validate();
  RangeImage observed = sim;
  std::fill(observed.reflectance.begin(), observed.reflectance.end(), 0.0);
  const MeasurementOperator h;
  const Tensor y = h.apply(normalize(observed));
  RangeTranslation out;
  switch (method) {
    case TranslationMethod::drum:
      out.result = drum_translate(y, model, h, cfg, stream);
      break;
    case TranslationMethod::sdedit:
      out.result = sdedit_translate(y, model, cfg, stream);
      break;
    case TranslationMethod::pigdm:
      out.result = pigdm_translate(y, model, h, cfg, stream);
      break;
  }
  out.output = denormalize(out.result.finalized, sim.intrinsics);
  for (std::size_t i = 0; i < out.output.pixels(); ++i) {
    if (out.result.mask0.bits[i] && !sim.is_drop(i)) out.output.range[i] = sim.range[i];
  }
  return out;
}

TranslationResult sdedit_translate(const Tensor& y, const ScoreModel& model, const SamplerConfig& cfg,
                                   std::uint64_t stream) {
  const std::vector<double> times = step_times(cfg);
  Rng rng = make_rng(cfg.seed, stream);
  TranslationResult res;
  Tensor x = initialize_from_sim(y, TimePoint(cfg.t_init), model.schedule(), rng);
  if (cfg.record_trajectory) res.trajectory.push_back(x);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const TimePoint t(times[k]);
    const TimePoint s(times[k + 1]);
    x = ddim_step(x, model.predict_eps(x, t), t, s, model.schedule());
    check_finite(x, k);
    res.diagnostics.push_back({times[k], times[k + 1], 0.0, 0.0, 1, 0});
    if (cfg.record_trajectory) res.trajectory.push_back(x);
  }
  finish(res, x, y, cfg.guidance);
  return res;
}

TranslationResult pigdm_translate(const Tensor& y, const ScoreModel& model, const MeasurementOperator& h,
                                  const SamplerConfig& cfg, std::uint64_t stream) {
  SamplerConfig full = cfg;
  full.t_init = 1.0;
  const std::vector<double> times = step_times(full);
  const NoiseSchedule& schedule = model.schedule();
  Rng rng = make_rng(cfg.seed, stream);
  TranslationResult res;
  Tensor x = gaussian_tensor(y.shape(), rng);
  if (cfg.record_trajectory) res.trajectory.push_back(x);
  for (std::size_t k = 0; k + 1 < times.size(); ++k) {
    const TimePoint t(times[k]);
    const TimePoint s(times[k + 1]);
    const auto lin = model.linearize(x, t);
    const Tensor g = pigdm_gradient(*lin, x, t, y, h, cfg.guidance, schedule);
    const double sigma = schedule.clamped(t).sigma;
    Tensor eps = lin->eps();
    for (std::size_t i = 0; i < eps.size(); ++i) eps[i] -= sigma * g[i];
    x = ddim_step(x, eps, t, s, schedule);
    check_finite(x, k);
    res.diagnostics.push_back({times[k], times[k + 1], 0.0, 1.0, 1, 0});
    if (cfg.record_trajectory) res.trajectory.push_back(x);
  }
  GuidanceConfig unmasked = cfg.guidance;
  unmasked.mask_mode = MaskMode::none;
  finish(res, x, y, unmasked);
  return res;
}

}  // namespace drum
