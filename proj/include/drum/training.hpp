#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "drum/denoiser.hpp"

namespace drum {

struct TrainConfig {
  std::uint64_t steps = 5000;
  std::uint32_t batch = 4;
  double learning_rate = 0.02;
  double momentum = 0.9;
  double grad_clip = 1.0;  // global-norm clip, <= 0 disables
  std::uint64_t seed = 1;
  double holdout_fraction = 0.1;
  std::uint32_t holdout_draws = 4;  // fixed (t, eps) draws per held-out image

  void validate() const;
};

struct TrainProgress {
  std::uint64_t step;   // global step counter after this epoch
  std::uint64_t epoch;
  double train_loss;    // mean over the epoch's batches
  double holdout_loss;
};

struct TrainResult {
  DenoiserNetwork network;
  std::uint64_t step = 0;  // global step counter, continues across resumes
  double initial_holdout_loss = 0.0;
  double final_holdout_loss = 0.0;
  std::vector<TrainProgress> history;
};

struct TrainOptions {
  DenoiserArch arch{};
  std::optional<DenoiserNetwork> resume;  // start from these weights instead of a fresh init
  std::uint64_t start_step = 0;
  std::function<void(const TrainProgress&)> on_epoch;
};

// Minimises E || eps - eps_theta(alpha_t x0 + sigma_t eps, t) ||^2 with t uniform over
// [kTimeFloor, kTimeCeil] and eps ~ N(0, I), using SGD with momentum.
// Throws InsufficientData for an empty or ragged dataset and TrainingFailure
// (carrying the step index) if the loss becomes non-finite.
TrainResult train_denoiser(const std::vector<Tensor>& dataset, const TrainConfig& cfg, TrainOptions options = {});

// Held-out eps-loss with deterministic (t, eps) draws derived from seed.
double holdout_loss(const DenoiserNetwork& net, const std::vector<Tensor>& images, std::uint64_t seed,
                    std::uint32_t draws, const NoiseSchedule& schedule = NoiseSchedule{});

}  // namespace drum
