#pragma once

// Conditional-score machinery: the reflectance-zeroing measurement operator,
// pseudoinverse guidance and the raydrop-aware progressive mask that gates it.

#include <cstdint>
#include <vector>

#include "drum/diffusion.hpp"
#include "drum/score_model.hpp"

namespace drum {

inline constexpr std::size_t kRangeChannel = 0;
inline constexpr std::size_t kReflectanceChannel = 1;

// H keeps the range channel and zeroes every other channel. Observations are
// represented in image shape, so H, its pseudoinverse and the projector
// H^+ H all act as the same orthogonal selection.
class MeasurementOperator {
 public:
  enum class Kind { zero_reflectance };

  explicit MeasurementOperator(Kind kind = Kind::zero_reflectance) : kind_(kind) {}

  Kind kind() const { return kind_; }
  Tensor apply(const Tensor& x) const;
  Tensor pinv_apply(const Tensor& y) const;
  Tensor projector(const Tensor& x) const { return pinv_apply(apply(x)); }

 private:
  Kind kind_;
};

enum class JacobianMode { exact_vjp, identity_approx };

// progressive: m_t from the Tweedie range channel; none: m_t = 1 everywhere.
enum class MaskMode { progressive, none };

struct GuidanceConfig {
  double eta = -0.3;
  JacobianMode jacobian_mode = JacobianMode::exact_vjp;
  double guidance_scale = 1.0;
  MaskMode mask_mode = MaskMode::progressive;

  void validate() const;
};

// Binary per-pixel mask, broadcast over channels. 1 = valid return (guided).
struct RaydropMask {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> bits;

  static RaydropMask ones(std::size_t height, std::size_t width);
  std::size_t count() const;
  double fill_ratio() const;
  bool operator==(const RaydropMask&) const = default;
};

// r_t with r_t^2 = sigma_t^2 / (alpha_t^2 + sigma_t^2).
double r_schedule(TimePoint t, const NoiseSchedule& schedule);

// m_i = 1 iff x_hat[range, i] > eta (strict).
RaydropMask progressive_mask(const Tensor& x_hat, double eta);

// guidance_scale * r_t^-2 * [(H^+ y - H^+ H x_hat)^T dx_hat/dx_t]^T, reusing an
// existing linearization of the model at (x_t, t).
Tensor pigdm_gradient(const EpsLinearization& lin, const Tensor& x_t, TimePoint t, const Tensor& y,
                      const MeasurementOperator& h, const GuidanceConfig& cfg, const NoiseSchedule& schedule);

Tensor pigdm_gradient(const Tensor& x_t, TimePoint t, const Tensor& y, const ScoreModel& model,
                      const MeasurementOperator& h, const GuidanceConfig& cfg);

struct ConditionalEps {
  Tensor eps;          // eps_hat - sigma_t (m_t * g), equal to eps_hat where m_t = 0
  Tensor eps_uncond;   // eps_hat
  Tensor x_hat;        // clipped Tweedie estimate under eps_hat
  RaydropMask mask;
  double residual_rms; // RMS of H^+ y - H^+ H x_hat over guided pixels
};

ConditionalEps masked_conditional_eps(const Tensor& x_t, TimePoint t, const Tensor& y, const ScoreModel& model,
                                      const MeasurementOperator& h, const GuidanceConfig& cfg);

}  // namespace drum
