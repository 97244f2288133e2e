#include "drum/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "drum/errors.hpp"
#include "drum/kernels.hpp"

namespace drum {

void TrainConfig::validate() const {
  if (batch == 0) throw InvalidArgument("train: batch must be positive");
  if (!(learning_rate > 0.0)) throw InvalidArgument("train: learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("train: momentum must lie in [0, 1)");
  if (!(holdout_fraction > 0.0 && holdout_fraction < 1.0)) {
    throw InvalidArgument("train: holdout fraction must lie in (0, 1)");
  }
  if (holdout_draws == 0) throw InvalidArgument("train: holdout draws must be positive");
}

namespace {

double sample_time(Rng& rng) {
  std::uniform_real_distribution<double> u(kTimeFloor, kTimeCeil);
  return u(rng);
}

}  // namespace

double holdout_loss(const DenoiserNetwork& net, const std::vector<Tensor>& images, std::uint64_t seed,
                    std::uint32_t draws, const NoiseSchedule& schedule) {
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < images.size(); ++i) {
    Rng rng = make_rng(seed ^ 0x5eedf00dULL, i);
    for (std::uint32_t d = 0; d < draws; ++d) {
      const TimePoint t(sample_time(rng));
      const Tensor eps = gaussian_tensor(images[i].shape(), rng);
      const Tensor x_t = forward_noise(images[i], t, eps, schedule);
      const Tensor pred = net.forward(x_t, schedule.log_snr(t));
      const Tensor diff = axpby(1.0, pred, -1.0, eps);
      total += dot(diff, diff);
      count += diff.size();
    }
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

TrainResult train_denoiser(const std::vector<Tensor>& dataset, const TrainConfig& cfg, TrainOptions options) {
  cfg.validate();
  if (dataset.empty()) throw InsufficientData("train: dataset is empty");
  const Shape shape = dataset.front().shape();
  for (const Tensor& img : dataset) {
    if (img.shape() != shape) throw InsufficientData("train: dataset images differ in shape");
  }

  const NoiseSchedule schedule;
  DenoiserNetwork net = options.resume ? std::move(*options.resume) : DenoiserNetwork(options.arch, cfg.seed);

  // deterministic train / held-out split
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  {
    Rng split_rng = make_rng(cfg.seed, 0xA11CE);
    std::shuffle(order.begin(), order.end(), split_rng);
  }
  std::vector<Tensor> train_set, holdout_set;
  if (dataset.size() == 1) {
    train_set = dataset;
    holdout_set = dataset;
  } else {
    const auto n_hold = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(cfg.holdout_fraction * static_cast<double>(dataset.size()))), 1,
        dataset.size() - 1);
    for (std::size_t i = 0; i < order.size(); ++i) {
      (i < n_hold ? holdout_set : train_set).push_back(dataset[order[i]]);
    }
  }

  TrainResult result{std::move(net), options.start_step, 0.0, 0.0, {}};
  result.initial_holdout_loss = holdout_loss(result.network, holdout_set, cfg.seed, cfg.holdout_draws, schedule);
  result.final_holdout_loss = result.initial_holdout_loss;

  const std::size_t n_params = result.network.parameters().size();
  std::vector<double> grad(n_params), velocity(n_params, 0.0);
  const std::uint64_t steps_per_epoch = std::max<std::uint64_t>(1, (train_set.size() + cfg.batch - 1) / cfg.batch);
  const double per_element = 1.0 / (static_cast<double>(cfg.batch) * static_cast<double>(shape.size()));

  double epoch_loss = 0.0;
  std::uint64_t epoch_batches = 0;
  for (std::uint64_t k = 0; k < cfg.steps; ++k) {
    const std::uint64_t step = options.start_step + k;
    Rng rng = make_rng(cfg.seed, step + 1);
    std::uniform_int_distribution<std::size_t> pick(0, train_set.size() - 1);
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (std::uint32_t b = 0; b < cfg.batch; ++b) {
      const Tensor& x0 = train_set[pick(rng)];
      const TimePoint t(sample_time(rng));
      const Tensor eps = gaussian_tensor(shape, rng);
      const Tensor x_t = forward_noise(x0, t, eps, schedule);
      DenoiserNetwork::Tape tape;
      const Tensor pred = result.network.forward(x_t, schedule.log_snr(t), &tape);
      Tensor diff = axpby(1.0, pred, -1.0, eps);
      loss += dot(diff, diff) * per_element;
      result.network.backward(tape, scaled(diff, 2.0 * per_element), grad);
    }
    if (!std::isfinite(loss)) throw TrainingFailure("train: loss diverged", static_cast<std::ptrdiff_t>(step));

    double scale = 1.0;
    if (cfg.grad_clip > 0.0) {
      const double norm = std::sqrt(kernels::active().dot(n_params, grad.data(), grad.data()));
      if (!std::isfinite(norm)) throw TrainingFailure("train: gradient diverged", static_cast<std::ptrdiff_t>(step));
      if (norm > cfg.grad_clip) scale = cfg.grad_clip / norm;
    }
    auto params = result.network.parameters();
    for (std::size_t i = 0; i < n_params; ++i) {
      velocity[i] = cfg.momentum * velocity[i] + scale * grad[i];
      params[i] -= cfg.learning_rate * velocity[i];
    }

    epoch_loss += loss;
    ++epoch_batches;
    result.step = step + 1;
    if ((k + 1) % steps_per_epoch == 0 || k + 1 == cfg.steps) {
      TrainProgress p{result.step, result.step / steps_per_epoch, epoch_loss / static_cast<double>(epoch_batches),
                      holdout_loss(result.network, holdout_set, cfg.seed, cfg.holdout_draws, schedule)};
      if (!std::isfinite(p.holdout_loss)) {
        throw TrainingFailure("train: held-out loss diverged", static_cast<std::ptrdiff_t>(step));
      }
      result.final_holdout_loss = p.holdout_loss;
      result.history.push_back(p);
      if (options.on_epoch) options.on_epoch(p);
      epoch_loss = 0.0;
      epoch_batches = 0;
    }
  }
  return result;
}

}  // namespace drum
