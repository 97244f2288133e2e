#pragma once

// Small encoder-decoder eps-predictor over C x H x W images with hand-written
// reverse-mode differentiation. Convolutions are 3x3, circular in azimuth
// (width) and zero-padded in elevation (height), matching the wrap-around of
// a spinning LiDAR range image.

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "drum/score_model.hpp"
#include "drum/tensor.hpp"

namespace drum {

struct DenoiserArch {
  std::uint32_t in_channels = 2;
  std::vector<std::uint32_t> widths{8, 16, 32, 64};  // one per resolution level
  std::uint32_t embed_dim = 16;                      // sinusoidal log-SNR features
  std::uint32_t hidden_dim = 32;                     // time-embedding MLP width

  std::size_t levels() const { return widths.size(); }
  // Spatial dims must be divisible by this.
  std::size_t spatial_multiple() const { return std::size_t{1} << (levels() - 1); }
  bool operator==(const DenoiserArch&) const = default;
};

enum class OutputInit { zero, random };

struct ParamBlock {
  std::string name;
  std::size_t offset;
  std::size_t size;
};

class DenoiserNetwork {
 public:
  struct Tape;

  DenoiserNetwork(DenoiserArch arch, std::uint64_t init_seed, OutputInit output_init = OutputInit::zero);

  const DenoiserArch& arch() const { return arch_; }

  std::span<double> parameters() { return params_; }
  std::span<const double> parameters() const { return params_; }

  // Weight arrays in declaration order (the checkpoint order).
  const std::vector<ParamBlock>& blocks() const { return blocks_; }

  // eps prediction for x at noise level log_snr. When tape is non-null it
  // receives everything backward() needs.
  Tensor forward(const Tensor& x, double log_snr, Tape* tape = nullptr) const;

  // Pulls grad_out back through the recorded forward pass and returns dL/dx.
  // When param_grad is non-empty, dL/dparams is accumulated into it.
  Tensor backward(const Tape& tape, const Tensor& grad_out, std::span<double> param_grad = {}) const;

  std::vector<double> embed_log_snr(double log_snr) const;

 private:
  struct Conv {
    std::size_t w, b, cin, cout;
  };
  struct Dense {
    std::size_t w, b, in, out;
  };

  Conv add_conv(const std::string& name, std::size_t cin, std::size_t cout);
  Dense add_dense(const std::string& name, std::size_t in, std::size_t out);

  void conv_forward(const Conv& c, const Tensor& padded, Tensor& out) const;
  Tensor conv_backward(const Conv& c, const Tensor& padded, const Tensor& gout, bool want_input,
                       std::span<double> param_grad) const;

  DenoiserArch arch_;
  std::vector<double> params_;
  std::vector<ParamBlock> blocks_;
  Dense time_hidden_{};
  std::vector<Dense> time_proj_;
  std::vector<Conv> enc_a_, enc_b_, dec_;  // dec_[l] maps level l+1 -> l
  Conv out_{};
};

struct DenoiserNetwork::Tape {
  Shape input_shape;
  std::vector<double> features;       // sinusoidal embedding
  std::vector<double> hidden_pre;     // time MLP pre-activation
  std::vector<double> hidden;         // time MLP activation
  std::vector<Tensor> pad_a, pre_a, pad_b, pre_b, pad_d, pre_d;
  Tensor pad_out;
};

// Circular padding along width, zero padding along height.
Tensor pad_lidar(const Tensor& x);

// Adjoint of pad_lidar.
Tensor unpad_lidar_adjoint(const Tensor& padded_grad);

class NeuralScoreModel final : public ScoreModel {
 public:
  NeuralScoreModel(std::shared_ptr<const DenoiserNetwork> net, NoiseSchedule schedule = NoiseSchedule{})
      : net_(std::move(net)), schedule_(schedule) {}

  const DenoiserNetwork& network() const { return *net_; }
  const NoiseSchedule& schedule() const override { return schedule_; }
  Tensor predict_eps(const Tensor& x_t, TimePoint t) const override;
  std::unique_ptr<EpsLinearization> linearize(const Tensor& x_t, TimePoint t) const override;

 private:
  std::shared_ptr<const DenoiserNetwork> net_;
  NoiseSchedule schedule_;
};

// v^T dx_hat/dx_t through the network, for the Tweedie map of a NeuralScoreModel.
Tensor neural_tweedie_vjp(const NeuralScoreModel& model, const Tensor& x_t, TimePoint t, const Tensor& v);

}  // namespace drum
