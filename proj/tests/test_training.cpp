#include <cmath>
#include <memory>

#include "doctest.h"
#include "drum/denoiser.hpp"
#include "drum/errors.hpp"
#include "drum/training.hpp"
#include "support.hpp"

using namespace drum;

namespace {

DenoiserArch tiny_arch() {
  DenoiserArch a;
  a.widths = {4, 8};
  a.embed_dim = 4;
  a.hidden_dim = 8;
  return a;
}

// Images sharing one smooth profile plus a little per-image offset.
std::vector<Tensor> toy_dataset(std::size_t n) {
  std::vector<Tensor> out;
  for (std::size_t k = 0; k < n; ++k) {
    Tensor t(Shape{2, 4, 8});
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 8; ++x) t.at(c, y, x) = 0.6 - 0.3 * y + (c ? -0.4 : 0.0) + 0.02 * static_cast<double>(k % 3);
    out.push_back(t);
  }
  return out;
}

}  // namespace

TEST_SUITE("training") {
  TEST_CASE("invalid configurations are rejected") {
    TrainConfig c;
    c.batch = 0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.holdout_fraction = 1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
    c = {};
    c.learning_rate = -1.0;
    CHECK_THROWS_AS(c.validate(), InvalidArgument);
  }

  TEST_CASE("empty or ragged datasets raise InsufficientData") {
    TrainConfig c;
    c.steps = 1;
    CHECK_THROWS_AS(train_denoiser({}, c, {tiny_arch()}), InsufficientData);
    std::vector<Tensor> ragged{Tensor(Shape{2, 4, 8}), Tensor(Shape{2, 4, 16})};
    CHECK_THROWS_AS(train_denoiser(ragged, c, {tiny_arch()}), InsufficientData);
  }

  TEST_CASE("zero steps returns the initial network and its held-out loss") {
    TrainConfig c;
    c.steps = 0;
    const auto data = toy_dataset(10);
    const TrainResult r = train_denoiser(data, c, {tiny_arch()});
    CHECK(r.step == 0);
    CHECK(r.history.empty());
    CHECK(r.final_holdout_loss == r.initial_holdout_loss);
    const DenoiserNetwork fresh(tiny_arch(), c.seed);
    CHECK(std::equal(r.network.parameters().begin(), r.network.parameters().end(), fresh.parameters().begin()));
    // A zero-output network scores exactly the noise energy, about 1 per element.
    CHECK(r.initial_holdout_loss == doctest::Approx(1.0).epsilon(0.3));
  }

  TEST_CASE("training reduces the held-out loss and is deterministic") {
    TrainConfig c;
    c.steps = 300;
    c.batch = 4;
    const auto data = toy_dataset(20);
    const TrainResult a = train_denoiser(data, c, {tiny_arch()});
    CHECK(a.step == 300);
    CHECK(a.final_holdout_loss < 0.7 * a.initial_holdout_loss);
    REQUIRE(!a.history.empty());
    CHECK(a.history.back().step == 300);
    const TrainResult b = train_denoiser(data, c, {tiny_arch()});
    CHECK(std::equal(a.network.parameters().begin(), a.network.parameters().end(), b.network.parameters().begin()));
  }

  TEST_CASE("a constant dataset teaches the network to read the noise off the input") {
    const NoiseSchedule sched;
    TrainConfig c;
    // The optimum has zero loss, so gradient noise fades and a hotter step is safe.
    c.steps = 40000;
    c.learning_rate = 0.02;
    c.grad_clip = 10.0;
    DenoiserArch arch;
    arch.widths = {8, 16};
    arch.embed_dim = 8;
    arch.hidden_dim = 16;
    const Shape shape{2, 4, 8};
    const std::vector<Tensor> data(12, Tensor(shape, 0.3));
    const TrainResult r = train_denoiser(data, c, {arch});
    const NeuralScoreModel model(std::make_shared<const DenoiserNetwork>(r.network), sched);
    // Interior times: near t = 0 the target carries a 1/sigma blow-up.
    for (double t : {0.3, 0.5, 0.7}) {
      const Coefficients co = sched.clamped(TimePoint(t));
      double sq = 0.0;
      std::size_t n = 0;
      for (std::uint64_t draw = 0; draw < 8; ++draw) {
        Tensor x = test::normal_tensor(shape, 40 + draw);
        for (double& v : x.values()) v = co.alpha * 0.3 + co.sigma * v;
        const Tensor e = model.predict_eps(x, TimePoint(t));
        for (std::size_t i = 0; i < x.size(); ++i) sq += std::pow(e[i] - (x[i] - co.alpha * 0.3) / co.sigma, 2);
        n += x.size();
      }
      CHECK(std::sqrt(sq / static_cast<double>(n)) < 0.1);
    }
  }

  TEST_CASE("resuming continues the step counter") {
    TrainConfig c;
    c.steps = 5;
    const auto data = toy_dataset(6);
    TrainResult first = train_denoiser(data, c, {tiny_arch()});
    CHECK(first.step == 5);
    TrainOptions resume{tiny_arch()};
    resume.resume = std::move(first.network);
    resume.start_step = first.step;
    c.steps = 3;
    const TrainResult second = train_denoiser(data, c, std::move(resume));
    CHECK(second.step == 8);
  }

  TEST_CASE("held-out loss is reproducible for a fixed seed") {
    const DenoiserNetwork net(tiny_arch(), 5, OutputInit::random);
    const auto data = toy_dataset(4);
    CHECK(holdout_loss(net, data, 9, 3) == holdout_loss(net, data, 9, 3));
    CHECK(holdout_loss(net, data, 9, 3) != holdout_loss(net, data, 10, 3));
  }

  TEST_CASE("a diverging run raises TrainingFailure with the step index") {
    TrainConfig c;
    c.steps = 200;
    c.learning_rate = 1e12;
    c.grad_clip = 0.0;
    c.momentum = 0.0;
    const auto data = toy_dataset(6);
    try {
      train_denoiser(data, c, {tiny_arch()});
      FAIL("expected divergence");
    } catch (const TrainingFailure& e) {
      CHECK(e.step() >= 0);
      CHECK(e.step() < 200);
    }
  }
}
