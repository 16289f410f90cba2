#include <doctest.h>

#include <memory>
#include <random>

#include "helpers.hpp"
#include "illumreid/errors.hpp"
#include "illumreid/nn.hpp"

using namespace illumreid;
using namespace illumreid::nn;
using testing::random_tensor;

namespace {

// <out, r> for a fixed random r; its input gradient is backward(r).
double probe(const Layer& layer, const Tensor& x, const Tensor& r) {
  Cache cache;
  const auto y = layer.forward(x, cache);
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += double(y[i]) * r[i];
  return s;
}

// Max over coordinates of |analytic - numeric|, relative to the largest gradient entry.
double input_grad_error(Layer& layer, Tensor x, std::uint64_t seed) {
  Cache cache;
  const auto y = layer.forward(x, cache);
  const auto r = random_tensor(y.n(), y.c(), y.h(), y.w(), seed);
  const auto g = layer.backward(r, cache);
  double worst = 0.0, scale = 1e-12;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float keep = x[i];
    x[i] = keep + 1e-2f;
    const double up = probe(layer, x, r);
    x[i] = keep - 1e-2f;
    const double down = probe(layer, x, r);
    x[i] = keep;
    const double fd = (up - down) / 2e-2;
    worst = std::max(worst, std::abs(fd - g[i]));
    scale = std::max(scale, std::abs(double(g[i])));
  }
  return worst / scale;
}

double param_grad_error(Layer& layer, const Tensor& x, std::uint64_t seed) {
  std::vector<Param*> params;
  layer.collect_params(params);
  Cache cache;
  const auto y = layer.forward(x, cache);
  const auto r = random_tensor(y.n(), y.c(), y.h(), y.w(), seed);
  for (auto* p : params) p->grad.fill(0.0f);
  layer.backward(r, cache);
  double worst = 0.0, scale = 1e-12;
  for (auto* p : params) {
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      const float keep = p->value[i];
      p->value[i] = keep + 1e-2f;
      const double up = probe(layer, x, r);
      p->value[i] = keep - 1e-2f;
      const double down = probe(layer, x, r);
      p->value[i] = keep;
      worst = std::max(worst, std::abs((up - down) / 2e-2 - p->grad[i]));
      scale = std::max(scale, std::abs(double(p->grad[i])));
    }
  }
  return worst / scale;
}

}  // namespace

TEST_CASE("layer gradients agree with finite differences") {
  std::mt19937_64 rng(5);
  SUBCASE("conv stride 2") {
    Conv2d conv(3, 4, 3, 2, 1);
    conv.init(rng);
    const auto x = random_tensor(2, 3, 6, 5, 1);
    CHECK(input_grad_error(conv, x, 2) < 2e-2);
    CHECK(param_grad_error(conv, x, 3) < 2e-2);
  }
  SUBCASE("linear") {
    Linear lin(6, 4);
    lin.init(rng);
    const auto x = random_tensor(3, 6, 1, 1, 4);
    CHECK(input_grad_error(lin, x, 5) < 2e-2);
    CHECK(param_grad_error(lin, x, 6) < 2e-2);
  }
  SUBCASE("instance norm") {
    InstanceNorm norm;
    CHECK(input_grad_error(norm, random_tensor(2, 2, 4, 4, 7), 8) < 5e-2);
  }
  SUBCASE("upsample, pooling, tanh, leaky relu") {
    Upsample2x up;
    GlobalAvgPool gap;
    Tanh tanh_layer;
    LeakyReLU leaky(0.2f);
    const auto x = random_tensor(1, 2, 3, 3, 9);
    CHECK(input_grad_error(up, x, 10) < 2e-2);
    CHECK(input_grad_error(gap, x, 11) < 2e-2);
    CHECK(input_grad_error(tanh_layer, x, 12) < 2e-2);
    auto away = random_tensor(1, 2, 3, 3, 19, 0.1f, 1.0f);  // off the kink at 0
    for (std::size_t i = 0; i < away.size(); i += 2) away[i] = -away[i];
    CHECK(input_grad_error(leaky, away, 13) < 2e-2);
  }
  SUBCASE("residual and logit skip") {
    Sequential body;
    body.add<Conv2d>(3, 3, 3, 1, 1, 0.1f);
    body.add<Tanh>();
    Residual res(body);
    res.init(rng);
    CHECK(input_grad_error(res, random_tensor(1, 3, 4, 4, 14), 15) < 2e-2);
    LogitSkip skip(body);
    skip.init(rng);
    const auto x = random_tensor(1, 3, 4, 4, 16, -0.8f, 0.8f);
    CHECK(input_grad_error(skip, x, 17) < 2e-2);
    CHECK(param_grad_error(skip, x, 18) < 2e-2);
  }
}

TEST_CASE("logit skip with a zero body is the identity") {
  Sequential body;
  body.add<Conv2d>(3, 3, 3, 1, 1, 0.0f);
  LogitSkip skip(body);
  std::mt19937_64 rng(1);
  skip.init(rng);
  const auto x = random_tensor(1, 3, 5, 5, 2, -0.99f, 0.99f);
  Cache cache;
  const auto y = skip.forward(x, cache);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-4));
}

TEST_CASE("softmax cross-entropy") {
  Tensor logits(2, 3, 1, 1, 0.0f);
  const std::vector<int> labels{0, 2};
  auto r = softmax_cross_entropy(logits, labels);
  CHECK(r.loss == doctest::Approx(std::log(3.0)));
  logits = random_tensor(4, 5, 1, 1, 3, -2.0f, 2.0f);
  const std::vector<int> l4{0, 1, 4, 2};
  r = softmax_cross_entropy(logits, l4);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    Tensor up = logits, down = logits;
    up[i] += 1e-2f;
    down[i] -= 1e-2f;
    const double fd = (softmax_cross_entropy(up, l4).loss - softmax_cross_entropy(down, l4).loss) / 2e-2;
    CHECK(r.grad[i] == doctest::Approx(fd).epsilon(1e-2).scale(1.0));
  }
  const std::vector<int> bad{0, 7, 1, 1};
  CHECK_THROWS_AS(softmax_cross_entropy(logits, bad), ValidationError);
}

TEST_CASE("argmax ties go to the smallest index") {
  const std::vector<float> v{1.0f, 3.0f, 3.0f, 2.0f};
  CHECK(argmax(v) == 1);
}

TEST_CASE("sgd descends a quadratic") {
  Param p{"w", Tensor(1, 1, 1, 4, 2.0f), Tensor(1, 1, 1, 4)};
  Sgd opt({&p}, 0.1, 0.9, 0.0);
  for (int step = 0; step < 200; ++step) {
    opt.zero_grad();
    for (std::size_t i = 0; i < 4; ++i) p.grad[i] = 2.0f * p.value[i];
    opt.step();
  }
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(p.value[i]) < 1e-3);
}

TEST_CASE("sequential copies are deep") {
  Sequential a;
  a.add<Linear>(3, 2);
  std::mt19937_64 rng(3);
  a.init(rng);
  Sequential b = a;
  b.params()[0]->value[0] += 1.0f;
  CHECK(a.params()[0]->value[0] != b.params()[0]->value[0]);
}
