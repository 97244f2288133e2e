#include "drum/denoiser.hpp"

#include <cmath>
#include <random>

#include "drum/errors.hpp"
#include "drum/kernels.hpp"

namespace drum {

Tensor pad_lidar(const Tensor& x) {
  const auto [c_n, h, w] = x.shape();
  Tensor p(Shape{c_n, h + 2, w + 2});
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = x.data() + (c * h + y) * w;
      double* dst = p.data() + (c * (h + 2) + y + 1) * (w + 2);
      dst[0] = src[w - 1];
      std::copy(src, src + w, dst + 1);
      dst[w + 1] = src[0];
    }
  }
  return p;
}

Tensor unpad_lidar_adjoint(const Tensor& padded_grad) {
  const std::size_t c_n = padded_grad.shape().channels;
  const std::size_t h = padded_grad.shape().height - 2;
  const std::size_t w = padded_grad.shape().width - 2;
  Tensor g(Shape{c_n, h, w});
  for (std::size_t c = 0; c < c_n; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = padded_grad.data() + (c * (h + 2) + y + 1) * (w + 2);
      double* dst = g.data() + (c * h + y) * w;
      std::copy(src + 1, src + w + 1, dst);
      dst[w - 1] += src[0];
      dst[0] += src[w + 1];
    }
  }
  return g;
}

namespace {

Tensor pool2(const Tensor& x) {
  const auto [c_n, h, w] = x.shape();
  Tensor out(Shape{c_n, h / 2, w / 2});
  for (std::size_t c = 0; c < c_n; ++c)
    for (std::size_t y = 0; y < h / 2; ++y)
      for (std::size_t xx = 0; xx < w / 2; ++xx)
        out.at(c, y, xx) = 0.25 * (x.at(c, 2 * y, 2 * xx) + x.at(c, 2 * y, 2 * xx + 1) +
                                   x.at(c, 2 * y + 1, 2 * xx) + x.at(c, 2 * y + 1, 2 * xx + 1));
  return out;
}

void pool2_adjoint_add(const Tensor& g, Tensor& dst) {
  const auto [c_n, h, w] = g.shape();
  for (std::size_t c = 0; c < c_n; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) {
        const double v = 0.25 * g.at(c, y, xx);
        dst.at(c, 2 * y, 2 * xx) += v;
        dst.at(c, 2 * y, 2 * xx + 1) += v;
        dst.at(c, 2 * y + 1, 2 * xx) += v;
        dst.at(c, 2 * y + 1, 2 * xx + 1) += v;
      }
}

Tensor upsample2(const Tensor& x) {
  const auto [c_n, h, w] = x.shape();
  Tensor out(Shape{c_n, 2 * h, 2 * w});
  for (std::size_t c = 0; c < c_n; ++c)
    for (std::size_t y = 0; y < 2 * h; ++y)
      for (std::size_t xx = 0; xx < 2 * w; ++xx) out.at(c, y, xx) = x.at(c, y / 2, xx / 2);
  return out;
}

Tensor upsample2_adjoint(const Tensor& g) {
  const auto [c_n, h, w] = g.shape();
  Tensor out(Shape{c_n, h / 2, w / 2});
  for (std::size_t c = 0; c < c_n; ++c)
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t xx = 0; xx < w; ++xx) out.at(c, y / 2, xx / 2) += g.at(c, y, xx);
  return out;
}

Tensor silu(const Tensor& pre) {
  Tensor out(pre.shape());
  kernels::active().silu(pre.size(), pre.data(), out.data());
  return out;
}

Tensor silu_backward(const Tensor& pre, const Tensor& gout) {
  Tensor gin(pre.shape());
  kernels::active().silu_backward(pre.size(), pre.data(), gout.data(), gin.data());
  return gin;
}

void add_channel_bias(Tensor& t, std::span<const double> bias) {
  for (std::size_t c = 0; c < t.shape().channels; ++c)
    for (double& v : t.channel(c)) v += bias[c];
}

void add_inplace(Tensor& dst, const Tensor& src) {
  kernels::active().axpby(dst.size(), 1.0, dst.data(), 1.0, src.data(), dst.data());
}

}  // namespace

DenoiserNetwork::Conv DenoiserNetwork::add_conv(const std::string& name, std::size_t cin, std::size_t cout) {
  Conv c{params_.size(), 0, cin, cout};
  blocks_.push_back({name + ".weight", c.w, cin * cout * 9});
  params_.resize(params_.size() + cin * cout * 9);
  c.b = params_.size();
  blocks_.push_back({name + ".bias", c.b, cout});
  params_.resize(params_.size() + cout);
  return c;
}

DenoiserNetwork::Dense DenoiserNetwork::add_dense(const std::string& name, std::size_t in, std::size_t out) {
  Dense d{params_.size(), 0, in, out};
  blocks_.push_back({name + ".weight", d.w, in * out});
  params_.resize(params_.size() + in * out);
  d.b = params_.size();
  blocks_.push_back({name + ".bias", d.b, out});
  params_.resize(params_.size() + out);
  return d;
}

DenoiserNetwork::DenoiserNetwork(DenoiserArch arch, std::uint64_t init_seed, OutputInit output_init)
    : arch_(std::move(arch)) {
  if (arch_.widths.empty() || arch_.in_channels == 0 || arch_.embed_dim < 2 || arch_.hidden_dim == 0) {
    throw InvalidArgument("denoiser: invalid architecture");
  }
  const std::size_t levels = arch_.levels();
  time_hidden_ = add_dense("time.hidden", arch_.embed_dim, arch_.hidden_dim);
  for (std::size_t l = 0; l < levels; ++l) {
    const std::size_t cin = l == 0 ? arch_.in_channels : arch_.widths[l - 1];
    const std::string prefix = "enc" + std::to_string(l);
    time_proj_.push_back(add_dense(prefix + ".time", arch_.hidden_dim, arch_.widths[l]));
    enc_a_.push_back(add_conv(prefix + ".conv_a", cin, arch_.widths[l]));
    enc_b_.push_back(add_conv(prefix + ".conv_b", arch_.widths[l], arch_.widths[l]));
  }
  dec_.resize(levels - 1);
  for (std::size_t l = levels - 1; l-- > 0;) {
    dec_[l] = add_conv("dec" + std::to_string(l), arch_.widths[l + 1], arch_.widths[l]);
  }
  out_ = add_conv("out", arch_.widths[0], arch_.in_channels);

  Rng rng = make_rng(init_seed, 0x1417);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto fill = [&](std::size_t offset, std::size_t n, double stddev) {
    for (std::size_t i = 0; i < n; ++i) params_[offset + i] = stddev * normal(rng);
  };
  fill(time_hidden_.w, time_hidden_.in * time_hidden_.out, std::sqrt(1.0 / time_hidden_.in));
  for (std::size_t l = 0; l < levels; ++l) {
    fill(time_proj_[l].w, time_proj_[l].in * time_proj_[l].out, std::sqrt(1.0 / time_proj_[l].in));
    fill(enc_a_[l].w, enc_a_[l].cin * enc_a_[l].cout * 9, std::sqrt(2.0 / (9.0 * enc_a_[l].cin)));
    fill(enc_b_[l].w, enc_b_[l].cin * enc_b_[l].cout * 9, std::sqrt(2.0 / (9.0 * enc_b_[l].cin)));
  }
  for (const Conv& c : dec_) fill(c.w, c.cin * c.cout * 9, std::sqrt(2.0 / (9.0 * c.cin)));
  if (output_init == OutputInit::random) fill(out_.w, out_.cin * out_.cout * 9, std::sqrt(1.0 / (9.0 * out_.cin)));
}

std::vector<double> DenoiserNetwork::embed_log_snr(double log_snr) const {
  const std::size_t half = arch_.embed_dim / 2;
  std::vector<double> f(arch_.embed_dim, 0.0);
  for (std::size_t k = 0; k < half; ++k) {
    const double freq = std::ldexp(1.0, static_cast<int>(k)) / 16.0;
    f[2 * k] = std::sin(freq * log_snr);
    f[2 * k + 1] = std::cos(freq * log_snr);
  }
  return f;
}

void DenoiserNetwork::conv_forward(const Conv& c, const Tensor& padded, Tensor& out) const {
  const auto& k = kernels::active();
  const std::size_t h = out.shape().height;
  const std::size_t w = out.shape().width;
  const std::size_t pw = w + 2;
  const std::size_t pplane = (h + 2) * pw;
  for (std::size_t co = 0; co < c.cout; ++co) {
    auto plane = out.channel(co);
    std::fill(plane.begin(), plane.end(), params_[c.b + co]);
    for (std::size_t ci = 0; ci < c.cin; ++ci) {
      const double* wk = params_.data() + c.w + (co * c.cin + ci) * 9;
      const double* src = padded.data() + ci * pplane;
      for (std::size_t y = 0; y < h; ++y) {
        k.conv3x3_row(w, src + y * pw, src + (y + 1) * pw, src + (y + 2) * pw, wk, plane.data() + y * w);
      }
    }
  }
}

Tensor DenoiserNetwork::conv_backward(const Conv& c, const Tensor& padded, const Tensor& gout, bool want_input,
                                      std::span<double> param_grad) const {
  const auto& k = kernels::active();
  const std::size_t h = gout.shape().height;
  const std::size_t w = gout.shape().width;
  const std::size_t pw = w + 2;
  const std::size_t pplane = (h + 2) * pw;

  if (!param_grad.empty()) {
    for (std::size_t co = 0; co < c.cout; ++co) {
      const auto g = gout.channel(co);
      double sum = 0.0;
      for (double v : g) sum += v;
      param_grad[c.b + co] += sum;
      for (std::size_t ci = 0; ci < c.cin; ++ci) {
        double* dw = param_grad.data() + c.w + (co * c.cin + ci) * 9;
        const double* src = padded.data() + ci * pplane;
        for (std::size_t y = 0; y < h; ++y) {
          k.conv3x3_row_wgrad(w, g.data() + y * w, src + y * pw, src + (y + 1) * pw, src + (y + 2) * pw, dw);
        }
      }
    }
  }
  if (!want_input) return {};

  // Full correlation of gout with the flipped kernel gives the gradient with
  // respect to the padded input; only its interior rows reach real pixels.
  const std::size_t gw = w + 4;
  Tensor gpad(Shape{c.cout, h + 4, gw});
  for (std::size_t co = 0; co < c.cout; ++co)
    for (std::size_t y = 0; y < h; ++y) {
      const double* src = gout.data() + (co * h + y) * w;
      std::copy(src, src + w, gpad.data() + (co * (h + 4) + y + 2) * gw + 2);
    }
  Tensor gp(Shape{c.cin, h + 2, pw});
  for (std::size_t ci = 0; ci < c.cin; ++ci) {
    double* dst = gp.data() + ci * pplane;
    for (std::size_t co = 0; co < c.cout; ++co) {
      const double* wk = params_.data() + c.w + (co * c.cin + ci) * 9;
      const double flipped[9] = {wk[8], wk[7], wk[6], wk[5], wk[4], wk[3], wk[2], wk[1], wk[0]};
      const double* src = gpad.data() + co * (h + 4) * gw;
      for (std::size_t py = 1; py <= h; ++py) {
        k.conv3x3_row(pw, src + py * gw, src + (py + 1) * gw, src + (py + 2) * gw, flipped, dst + py * pw);
      }
    }
  }
  return unpad_lidar_adjoint(gp);
}

Tensor DenoiserNetwork::forward(const Tensor& x, double log_snr, Tape* tape) const {
  const auto [channels, height, width] = x.shape();
  const std::size_t levels = arch_.levels();
  if (channels != arch_.in_channels) throw InvalidArgument("denoiser: channel count mismatch");
  if (height % arch_.spatial_multiple() != 0 || width % arch_.spatial_multiple() != 0) {
    throw InvalidArgument("denoiser: image size must be divisible by " + std::to_string(arch_.spatial_multiple()));
  }

  // time embedding
  std::vector<double> features = embed_log_snr(log_snr);
  std::vector<double> hidden_pre(arch_.hidden_dim);
  for (std::size_t o = 0; o < arch_.hidden_dim; ++o) {
    hidden_pre[o] = params_[time_hidden_.b + o] +
                    kernels::active().dot(arch_.embed_dim, params_.data() + time_hidden_.w + o * arch_.embed_dim,
                                          features.data());
  }
  std::vector<double> hidden(arch_.hidden_dim);
  kernels::active().silu(hidden.size(), hidden_pre.data(), hidden.data());

  Tape local;
  Tape& tp = tape ? *tape : local;
  tp.input_shape = x.shape();
  tp.pad_a.assign(levels, {});
  tp.pre_a.assign(levels, {});
  tp.pad_b.assign(levels, {});
  tp.pre_b.assign(levels, {});
  tp.pad_d.assign(levels > 1 ? levels - 1 : 0, {});
  tp.pre_d.assign(levels > 1 ? levels - 1 : 0, {});

  std::vector<Tensor> enc(levels);
  for (std::size_t l = 0; l < levels; ++l) {
    const Tensor in = l == 0 ? x : pool2(enc[l - 1]);
    const Shape s{arch_.widths[l], in.shape().height, in.shape().width};
    std::vector<double> temb(arch_.widths[l]);
    const Dense& p = time_proj_[l];
    for (std::size_t o = 0; o < p.out; ++o) {
      temb[o] = params_[p.b + o] + kernels::active().dot(p.in, params_.data() + p.w + o * p.in, hidden.data());
    }

    tp.pad_a[l] = pad_lidar(in);
    tp.pre_a[l] = Tensor(s);
    conv_forward(enc_a_[l], tp.pad_a[l], tp.pre_a[l]);
    add_channel_bias(tp.pre_a[l], temb);
    const Tensor h_a = silu(tp.pre_a[l]);

    tp.pad_b[l] = pad_lidar(h_a);
    tp.pre_b[l] = Tensor(s);
    conv_forward(enc_b_[l], tp.pad_b[l], tp.pre_b[l]);
    enc[l] = silu(tp.pre_b[l]);
  }

  Tensor dec = enc[levels - 1];
  for (std::size_t l = levels - 1; l-- > 0;) {
    tp.pad_d[l] = pad_lidar(upsample2(dec));
    tp.pre_d[l] = Tensor(enc[l].shape());
    conv_forward(dec_[l], tp.pad_d[l], tp.pre_d[l]);
    add_inplace(tp.pre_d[l], enc[l]);
    dec = silu(tp.pre_d[l]);
  }

  tp.pad_out = pad_lidar(dec);
  Tensor out(x.shape());
  conv_forward(out_, tp.pad_out, out);

  tp.features = std::move(features);
  tp.hidden_pre = std::move(hidden_pre);
  tp.hidden = std::move(hidden);
  return out;
}

Tensor DenoiserNetwork::backward(const Tape& tape, const Tensor& grad_out, std::span<double> param_grad) const {
  if (grad_out.shape() != tape.input_shape) throw InvalidArgument("denoiser backward: gradient shape mismatch");
  if (!param_grad.empty() && param_grad.size() != params_.size()) {
    throw InvalidArgument("denoiser backward: parameter gradient size mismatch");
  }
  const std::size_t levels = arch_.levels();
  const bool want_params = !param_grad.empty();

  std::vector<Tensor> g_enc(levels);
  for (std::size_t l = 0; l < levels; ++l) g_enc[l] = Tensor(tape.pre_b[l].shape());

  Tensor g_dec = conv_backward(out_, tape.pad_out, grad_out, true, param_grad);
  if (levels == 1) add_inplace(g_enc[0], g_dec);
  for (std::size_t l = 0; l + 1 < levels; ++l) {
    const Tensor g_pre = silu_backward(tape.pre_d[l], g_dec);
    add_inplace(g_enc[l], g_pre);
    Tensor g_next = upsample2_adjoint(conv_backward(dec_[l], tape.pad_d[l], g_pre, true, param_grad));
    if (l + 2 == levels) {
      add_inplace(g_enc[l + 1], g_next);
    } else {
      g_dec = std::move(g_next);
    }
  }

  std::vector<double> g_hidden(arch_.hidden_dim, 0.0);
  Tensor g_x;
  for (std::size_t l = levels; l-- > 0;) {
    const Tensor g_pre_b = silu_backward(tape.pre_b[l], g_enc[l]);
    const Tensor g_h_a = conv_backward(enc_b_[l], tape.pad_b[l], g_pre_b, true, param_grad);
    const Tensor g_pre_a = silu_backward(tape.pre_a[l], g_h_a);
    if (want_params) {
      const Dense& p = time_proj_[l];
      for (std::size_t o = 0; o < p.out; ++o) {
        double g = 0.0;
        for (double v : g_pre_a.channel(o)) g += v;
        param_grad[p.b + o] += g;
        for (std::size_t i = 0; i < p.in; ++i) {
          param_grad[p.w + o * p.in + i] += g * tape.hidden[i];
          g_hidden[i] += g * params_[p.w + o * p.in + i];
        }
      }
    }
    Tensor g_in = conv_backward(enc_a_[l], tape.pad_a[l], g_pre_a, true, param_grad);
    if (l > 0) {
      pool2_adjoint_add(g_in, g_enc[l - 1]);
    } else {
      g_x = std::move(g_in);
    }
  }

  if (want_params) {
    std::vector<double> g_pre(arch_.hidden_dim);
    kernels::active().silu_backward(g_pre.size(), tape.hidden_pre.data(), g_hidden.data(), g_pre.data());
    for (std::size_t o = 0; o < arch_.hidden_dim; ++o) {
      param_grad[time_hidden_.b + o] += g_pre[o];
      for (std::size_t i = 0; i < arch_.embed_dim; ++i) {
        param_grad[time_hidden_.w + o * arch_.embed_dim + i] += g_pre[o] * tape.features[i];
      }
    }
  }
  return g_x;
}

namespace {

class NeuralLinearization final : public EpsLinearization {
 public:
  NeuralLinearization(const NeuralScoreModel& model, TimePoint t, DenoiserNetwork::Tape tape, Tensor eps)
      : EpsLinearization(std::move(eps)), model_(model), tape_(std::move(tape)), coeffs_(model.schedule().clamped(t)) {}

  Tensor tweedie_vjp(const Tensor& v) const override {
    require_same_shape(v, eps_, "tweedie_vjp");
    const auto [alpha, sigma] = coeffs_;
    // x_hat = (x - sigma eps(x)) / alpha
    Tensor g = model_.network().backward(tape_, scaled(v, -sigma / alpha));
    Tensor out = axpby(1.0 / alpha, v, 1.0, g);
    if (!all_finite(out)) throw NumericFailure("neural tweedie_vjp produced a non-finite value");
    return out;
  }

 private:
  const NeuralScoreModel& model_;
  DenoiserNetwork::Tape tape_;
  Coefficients coeffs_;
};

}  // namespace

Tensor NeuralScoreModel::predict_eps(const Tensor& x_t, TimePoint t) const {
  Tensor eps = net_->forward(x_t, schedule_.log_snr(t));
  if (!all_finite(eps)) throw NumericFailure("denoiser produced a non-finite eps prediction");
  return eps;
}

std::unique_ptr<EpsLinearization> NeuralScoreModel::linearize(const Tensor& x_t, TimePoint t) const {
  DenoiserNetwork::Tape tape;
  Tensor eps = net_->forward(x_t, schedule_.log_snr(t), &tape);
  if (!all_finite(eps)) throw NumericFailure("denoiser produced a non-finite eps prediction");
  return std::make_unique<NeuralLinearization>(*this, t, std::move(tape), std::move(eps));
}

Tensor neural_tweedie_vjp(const NeuralScoreModel& model, const Tensor& x_t, TimePoint t, const Tensor& v) {
  return model.tweedie_vjp(x_t, t, v);
}

}  // namespace drum
