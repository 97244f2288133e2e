#pragma once

// Sim-to-real translation loop: partial forward noising of the simulation
// scan, mask-gated guided DDIM with resampling cycles, and re-insertion of the
// simulated ranges at the final valid pixels.

#include <cstdint>
#include <optional>
#include <vector>

#include "drum/guidance.hpp"
#include "drum/lidar.hpp"

namespace drum {

struct SamplerConfig {
  double t_init = 0.8;
  std::uint32_t num_steps = 32;
  std::uint32_t resample_cycles = 3;
  GuidanceConfig guidance;
  std::uint64_t seed = 0;
  bool record_trajectory = false;

  void validate() const;
};

// Times visited by the reverse process: t_init, then every grid point k / num_steps
// strictly below it, ending at 0.
std::vector<double> step_times(const SamplerConfig& cfg);

struct StepDiagnostics {
  double t = 0.0;
  double s = 0.0;
  double residual_rms = 0.0;  // guided-pixel residual at the last sub-step
  double mask_fill = 0.0;     // fraction of guided pixels at the last sub-step
  std::uint32_t reverse_steps = 0;
  std::uint32_t renoise_calls = 0;
};

struct TranslationResult {
  Tensor x0;
  RaydropMask mask0;
  Tensor finalized;
  std::vector<StepDiagnostics> diagnostics;
  // States from the initial x_{t_init} through x_0; filled only when recording.
  std::vector<Tensor> trajectory;
};

// alpha_{t_init} y + sigma_{t_init} eps with fresh eps drawn from rng.
Tensor initialize_from_sim(const Tensor& y, TimePoint t_init, const NoiseSchedule& schedule, Rng& rng);

struct HarmonizedStep {
  Tensor state;
  StepDiagnostics diagnostics;
};

// resample_cycles + 1 guided reverse steps t -> s with a renoise s -> t between each pair.
HarmonizedStep harmonized_step(const Tensor& x_t, TimePoint t, TimePoint s, const Tensor& y,
                               const ScoreModel& model, const MeasurementOperator& h, const SamplerConfig& cfg,
                               Rng& rng);

// Normalized-space label-consistent output: range = y where the mask is 1,
// reflectance = x0 where the mask is 1, and -1 (drop) elsewhere in both channels.
Tensor finalize_sample(const Tensor& x0, const Tensor& y, const RaydropMask& mask0);
Tensor finalize_sample(const Tensor& x0, const Tensor& y, double eta);

// Full translation of a normalized simulation tensor y. The random stream is
// make_rng(cfg.seed, stream). Throws NumericFailure carrying the step index.
TranslationResult drum_translate(const Tensor& y, const ScoreModel& model, const MeasurementOperator& h,
                                 const SamplerConfig& cfg, std::uint64_t stream = 0);

enum class TranslationMethod { drum, sdedit, pigdm };

// Metric-space wrapper: normalizes sim with reflectance zeroed, translates and
// denormalizes the finalized output. Pixels kept by the final mask carry the
// simulated metric range unchanged.
struct RangeTranslation {
  RangeImage output;
  TranslationResult result;
};
RangeTranslation translate_range_image(const RangeImage& sim, const ScoreModel& model, const SamplerConfig& cfg,
                                       std::uint64_t stream = 0,
                                       TranslationMethod method = TranslationMethod::drum);

// Baselines. sdedit: same initialization, unconditional DDIM. pigdm: starts from
// pure noise and applies unmasked pseudoinverse guidance without resampling.
TranslationResult sdedit_translate(const Tensor& y, const ScoreModel& model, const SamplerConfig& cfg,
                                   std::uint64_t stream = 0);
TranslationResult pigdm_translate(const Tensor& y, const ScoreModel& model, const MeasurementOperator& h,
                                  const SamplerConfig& cfg, std::uint64_t stream = 0);

}  // namespace drum
