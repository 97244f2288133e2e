#include <bit>
#include <cmath>
#include <numbers>

#include "doctest.h"
#include "drum/diffusion.hpp"
#include "drum/errors.hpp"
#include "drum/score_model.hpp"
#include "support.hpp"

using namespace drum;

namespace {

// Units in the last place between two doubles of the same sign.
std::uint64_t ulp_distance(double a, double b) {
  if (a == b) return 0;
  const auto ia = std::bit_cast<std::int64_t>(a);
  const auto ib = std::bit_cast<std::int64_t>(b);
  return static_cast<std::uint64_t>(ia > ib ? ia - ib : ib - ia);
}

struct Moments {
  double mean = 0.0;
  double var = 0.0;
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  for (double x : v) m.mean += x;
  m.mean /= static_cast<double>(v.size());
  for (double x : v) m.var += (x - m.mean) * (x - m.mean);
  m.var /= static_cast<double>(v.size() - 1);
  return m;
}

}  // namespace

TEST_SUITE("diffusion") {
  TEST_CASE("time points outside [0, 1] are rejected") {
    CHECK_THROWS_AS(TimePoint(-1e-9), InvalidArgument);
    CHECK_THROWS_AS(TimePoint(1.0 + 1e-9), InvalidArgument);
    CHECK_THROWS_AS(TimePoint(std::nan("")), InvalidArgument);
    CHECK_NOTHROW(TimePoint(0.0));
    CHECK_NOTHROW(TimePoint(1.0));
  }

  TEST_CASE("cosine schedule endpoints are exact") {
    const NoiseSchedule s;
    CHECK(s.at(TimePoint(0.0)).alpha == 1.0);
    CHECK(s.at(TimePoint(0.0)).sigma == 0.0);
    CHECK(s.at(TimePoint(1.0)).alpha == 0.0);
    CHECK(s.at(TimePoint(1.0)).sigma == 1.0);
  }

  TEST_CASE("cosine schedule matches closed forms") {
    const NoiseSchedule s;
    // cos(0.4 pi) = (sqrt(5) - 1) / 4.
    CHECK(s.at(TimePoint(0.8)).alpha == doctest::Approx((std::sqrt(5.0) - 1.0) / 4.0).epsilon(1e-15));
    CHECK(s.at(TimePoint(0.5)).alpha == doctest::Approx(std::numbers::sqrt2 / 2).epsilon(1e-15));
    CHECK(std::abs(s.log_snr(TimePoint(0.5))) <= 1e-15);
  }

  TEST_CASE("variance-preserving identity holds over 1000 times") {
    const NoiseSchedule s;
    for (int i = 0; i <= 999; ++i) {
      const double t = i / 999.0;
      const auto [a, g] = s.at(TimePoint(t));
      CHECK(std::abs(a * a + g * g - 1.0) <= 1e-12);
    }
  }

  TEST_CASE("clamped coefficients never vanish") {
    const NoiseSchedule s;
    const Coefficients lo = s.clamped(TimePoint(0.0));
    const Coefficients hi = s.clamped(TimePoint(1.0));
    CHECK(lo.sigma > 0.0);
    CHECK(hi.alpha > 0.0);
    CHECK(lo.alpha == s.at(TimePoint(kTimeFloor)).alpha);
    CHECK(hi.sigma == s.at(TimePoint(kTimeCeil)).sigma);
    CHECK(std::isfinite(s.log_snr(TimePoint(0.0))));
    CHECK(std::isfinite(s.log_snr(TimePoint(1.0))));
  }

  TEST_CASE("log-SNR decreases strictly in t") {
    const NoiseSchedule s;
    double prev = s.log_snr(TimePoint(kTimeFloor));
    for (int i = 1; i <= 200; ++i) {
      const double cur = s.log_snr(TimePoint(kTimeFloor + i * (kTimeCeil - kTimeFloor) / 200));
      CHECK(cur < prev);
      prev = cur;
    }
  }

  TEST_CASE("Tweedie estimate matches a hand computation and clips") {
    const Tensor x(Shape{1, 1, 3}, {0.5, 3.0, -3.0});
    const Tensor e(Shape{1, 1, 3}, {0.2, 0.0, 0.0});
    const Tensor xh = tweedie(x, e, TimePoint(0.5), NoiseSchedule{});
    // (0.5 - 0.2 / sqrt 2) * sqrt 2 = 0.5 sqrt 2 - 0.2.
    CHECK(xh[0] == doctest::Approx(0.5 * std::numbers::sqrt2 - 0.2).epsilon(1e-14));
    CHECK(xh[1] == kClipBound);
    CHECK(xh[2] == -kClipBound);
  }

  TEST_CASE("Tweedie inverts forward noising with the true noise") {
    const NoiseSchedule s;
    const Tensor x0 = test::uniform_tensor(Shape{2, 4, 4}, 1);
    const Tensor eps = test::uniform_tensor(Shape{2, 4, 4}, 2, -3.0, 3.0);
    for (double t : {0.1, 0.5, 0.9}) {
      const Tensor xt = forward_noise(x0, TimePoint(t), eps, s);
      CHECK(max_abs_diff(tweedie(xt, eps, TimePoint(t), s), x0) <= 1e-12 / s.at(TimePoint(t)).alpha);
    }
  }

  TEST_CASE("raw coefficients at degenerate times raise DegenerateTime") {
    const Tensor x(Shape{1, 1, 2}, {0.1, 0.2});
    CHECK_THROWS_AS(tweedie_unclipped(x, x, Coefficients{0.0, 1.0}), DegenerateTime);
    CHECK_THROWS_AS(eps_to_score(x, Coefficients{1.0, 0.0}), DegenerateTime);
  }

  TEST_CASE("eps -> score -> eps round trip is exact to a few ulp and leaves Tweedie unchanged") {
    const NoiseSchedule s;
    const Tensor x = test::uniform_tensor(Shape{2, 8, 8}, 5);
    const Tensor e = test::uniform_tensor(Shape{2, 8, 8}, 6, -4.0, 4.0);
    for (double t : {0.0, 0.013, 0.3, 0.77, 1.0}) {
      const Tensor back = score_to_eps(eps_to_score(e, TimePoint(t), s), TimePoint(t), s);
      const Tensor a = tweedie(x, e, TimePoint(t), s);
      const Tensor b = tweedie(x, back, TimePoint(t), s);
      for (std::size_t i = 0; i < e.size(); ++i) {
        CHECK(ulp_distance(back[i], e[i]) <= 2);
        CHECK(ulp_distance(a[i], b[i]) <= 4);
      }
    }
  }

  TEST_CASE("DDIM step with the true noise lands on the forward marginal") {
    const NoiseSchedule s;
    const Tensor x0 = test::uniform_tensor(Shape{2, 4, 4}, 7);
    const Tensor eps = test::uniform_tensor(Shape{2, 4, 4}, 8, -2.0, 2.0);
    const Tensor xt = forward_noise(x0, TimePoint(0.7), eps, s);
    const Tensor xs = ddim_step(xt, eps, TimePoint(0.7), TimePoint(0.4), s);
    CHECK(max_abs_diff(xs, forward_noise(x0, TimePoint(0.4), eps, s)) <= 1e-12);
  }

  TEST_CASE("DDIM step to s = 0 returns the clipped Tweedie estimate") {
    const NoiseSchedule s;
    const Tensor xt = test::uniform_tensor(Shape{1, 3, 3}, 9, -2.0, 2.0);
    const Tensor e = test::uniform_tensor(Shape{1, 3, 3}, 10);
    CHECK(ddim_step(xt, e, TimePoint(0.25), TimePoint(0.0), s) == tweedie(xt, e, TimePoint(0.25), s));
  }

  TEST_CASE("DDIM step takes the noise implied by the clipped estimate where clipping is active") {
    const NoiseSchedule s;
    const Tensor x(Shape{1, 1, 2}, {0.2, 0.1});
    const Tensor e(Shape{1, 1, 2}, {0.1, -500.0});
    const TimePoint t(0.6), u(0.3);
    const Tensor out = ddim_step(x, e, t, u, s);
    const Coefficients ct = s.clamped(t);
    const auto [as, ss] = s.at(u);
    const double xh0 = (0.2 - ct.sigma * 0.1) / ct.alpha;
    CHECK(out[0] == doctest::Approx(as * xh0 + ss * 0.1).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(as * kClipBound + ss * (0.1 - ct.alpha * kClipBound) / ct.sigma).epsilon(1e-14));
    CHECK(std::abs(out[1]) < 2.0);
  }

  TEST_CASE("32 DDIM steps from a zero state follow the Gaussian mean path") {
    const NoiseSchedule s;
    const GaussianScoreModel model(GaussianPrior(test::uniform_tensor(Shape{2, 2, 2}, 11, -0.5, 0.5),
                                                 test::uniform_tensor(Shape{2, 2, 2}, 12, 0.05, 0.3)));
    Tensor x(Shape{2, 2, 2}, 0.0);
    for (int k = 32; k > 0; --k) {
      const TimePoint t(k / 32.0), u((k - 1) / 32.0);
      x = ddim_step(x, model.predict_eps(x, t), t, u, s);
    }
    CHECK(max_abs_diff(x, model.prior().mu) <= 1e-3);
  }

  TEST_CASE("DDIM step requires s < t") {
    const Tensor x(Shape{1, 1, 1}, {0.0});
    CHECK_THROWS_AS(ddim_step(x, x, TimePoint(0.5), TimePoint(0.5), NoiseSchedule{}), InvalidArgument);
    CHECK_THROWS_AS(ddim_step(x, x, TimePoint(0.4), TimePoint(0.5), NoiseSchedule{}), InvalidArgument);
  }

  TEST_CASE("renoise requires t > s and matches the transition formula") {
    const NoiseSchedule s;
    const Tensor x(Shape{1, 1, 2}, {0.3, -0.6});
    const Tensor e(Shape{1, 1, 2}, {1.0, -2.0});
    Rng rng = make_rng(1, 1);
    CHECK_THROWS_AS(renoise(x, TimePoint(0.5), TimePoint(0.5), s, rng), InvalidArgument);
    const auto [as, ss] = s.at(TimePoint(0.3));
    const auto [at, st] = s.at(TimePoint(0.6));
    const double ratio = at / as;
    const double sd = std::sqrt(st * st - ratio * ratio * ss * ss);
    const Tensor out = renoise_with(x, TimePoint(0.3), TimePoint(0.6), s, e);
    CHECK(out[0] == doctest::Approx(ratio * 0.3 + sd).epsilon(1e-14));
    CHECK(out[1] == doctest::Approx(ratio * -0.6 - 2.0 * sd).epsilon(1e-14));
    // From data (s = 0) the transition is plain forward noising.
    CHECK(max_abs_diff(renoise_with(x, TimePoint(0.0), TimePoint(0.6), s, e), forward_noise(x, TimePoint(0.6), e, s)) <=
          1e-15);
  }

  TEST_CASE("forward noising moments over 10^4 draws") {
    const NoiseSchedule s;
    constexpr std::size_t n = 10000;
    const double y = 0.4;
    const Tensor x0(Shape{1, 1, n}, 0.4);
    Rng rng = make_rng(2024, 0);
    const Tensor xt = forward_noise(x0, TimePoint(0.8), gaussian_tensor(x0.shape(), rng), s);
    const Moments m = moments({xt.values().begin(), xt.values().end()});
    const auto [a, g] = s.at(TimePoint(0.8));
    CHECK(std::abs(m.mean - a * y) <= 3.0 * g / std::sqrt(n));
    // Var of the sample variance is about 2 sigma^4 / (n - 1).
    CHECK(std::abs(m.var - g * g) <= 3.0 * g * g * std::sqrt(2.0 / (n - 1)));
  }

  TEST_CASE("renoise composed with forward noising reproduces the later marginal") {
    const NoiseSchedule s;
    constexpr std::size_t n = 10000;
    const Tensor x0(Shape{1, 1, n}, -0.25);
    Rng rng = make_rng(2025, 0);
    const Tensor xs = forward_noise(x0, TimePoint(0.3), gaussian_tensor(x0.shape(), rng), s);
    const Tensor xt = renoise(xs, TimePoint(0.3), TimePoint(0.65), s, rng);
    const Moments m = moments({xt.values().begin(), xt.values().end()});
    const auto [a, g] = s.at(TimePoint(0.65));
    CHECK(std::abs(m.mean - a * -0.25) <= 3.0 * g / std::sqrt(n));
    CHECK(std::abs(m.var - g * g) <= 3.0 * g * g * std::sqrt(2.0 / (n - 1)));
  }

  TEST_CASE("per-sample streams are reproducible and distinct") {
    Rng a = make_rng(7, 3), b = make_rng(7, 3), c = make_rng(7, 4), d = make_rng(8, 3);
    const auto va = a();
    CHECK(va == b());
    CHECK(va != c());
    CHECK(va != d());
  }
}
