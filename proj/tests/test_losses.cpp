#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

#include "helpers.hpp"
#include "illumreid/errors.hpp"
#include "illumreid/losses.hpp"

using namespace illumreid;
using namespace illumreid::translation;
using testing::random_tensor;
using testing::rel_err;

namespace {

// Straight-line reference implementations, written independently of losses.cpp.
double ref_mean_abs(const nn::Tensor& a, const nn::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::fabs(double(a[i]) - double(b[i]));
  return s / double(a.size());
}

double ref_adversarial(const std::vector<double>& real, const std::vector<double>& fake) {
  auto clip = [](double p) { return std::min(std::max(p, 1e-7), 1.0 - 1e-7); };
  double a = 0.0, b = 0.0;
  for (double p : real) a += std::log(clip(p));
  for (double p : fake) b += std::log(1.0 - clip(p));
  return a / real.size() + b / fake.size();
}

double ref_masked(const nn::Tensor& gs, const nn::Tensor& s, const SoftMatte& m) {
  double sum = 0.0;
  for (int i = 0; i < gs.n(); ++i)
    for (int c = 0; c < gs.c(); ++c)
      for (int u = 0; u < gs.h(); ++u)
        for (int v = 0; v < gs.w(); ++v) {
          const double du = (u - m.center_u) / m.sigma_u, dv = (v - m.center_v) / m.sigma_v;
          const double w = std::exp(-(du * du + dv * dv) / 2.0);
          sum += w * std::fabs(double(gs.at(i, c, u, v)) - double(s.at(i, c, u, v)));
        }
  return sum / double(gs.size());
}

std::vector<double> random_scores(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.02, 0.98);
  std::vector<double> out(n);
  for (auto& v : out) v = u(rng);
  return out;
}

// Inputs whose pairwise differences stay clear of the L1 kink by more than the FD step.
nn::Tensor away_from(const nn::Tensor& ref, std::uint64_t seed) {
  auto t = random_tensor(ref.n(), ref.c(), ref.h(), ref.w(), seed, 0.05f, 0.6f);
  std::mt19937_64 rng(seed + 1);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = ref[i] + ((rng() & 1) ? t[i] : -t[i]);
  return t;
}

// 4x4 matte built by hand; the public constructor requires >= 8 pixels a side.
SoftMatte micro_matte(int h, int w) {
  SoftMatte m;
  m.height = h;
  m.width = w;
  m.center_u = 0.5 * (h - 1);
  m.center_v = 0.5 * (w - 1);
  m.sigma_u = h / 3.0;
  m.sigma_v = w / 4.0;
  for (int u = 0; u < h; ++u)
    for (int v = 0; v < w; ++v) {
      const double du = (u - m.center_u) / m.sigma_u, dv = (v - m.center_v) / m.sigma_v;
      m.values.push_back(std::exp(-0.5 * (du * du + dv * dv)));
    }
  return m;
}

template <typename F>
double central_fd(nn::Tensor& x, std::size_t i, F&& f, float h = 1e-3f) {
  const float keep = x[i];
  x[i] = keep + h;
  const double up = f();
  x[i] = keep - h;
  const double down = f();
  x[i] = keep;
  return (up - down) / (double(keep + h) - double(keep - h));
}

}  // namespace

TEST_CASE("soft matte shape") {
  const auto m = make_soft_matte(9, 9);
  CHECK(m.at(4, 4) == doctest::Approx(1.0));
  const auto m2 = make_soft_matte(63, 31);
  CHECK(m2.at(31 + 21, 15) == doctest::Approx(std::exp(-0.5)));
  const auto d = make_soft_matte(64, 32);
  CHECK(d.at(0, 0) < d.at(0, 16));
  CHECK(d.at(0, 16) < d.at(32, 16));
  for (double v : d.values) CHECK(v > 0.0);
  CHECK_THROWS_AS(make_soft_matte(4, 32), ValidationError);
  CHECK_THROWS_AS(make_soft_matte(64, 32, {0.0, 0.25}), ValidationError);
}

TEST_CASE("losses match straight-line reimplementations") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto s = random_tensor(2, 3, 8, 8, seed * 10 + 1);
    const auto fgs = random_tensor(2, 3, 8, 8, seed * 10 + 2);
    const auto x = random_tensor(2, 3, 8, 8, seed * 10 + 3);
    const auto gfx = random_tensor(2, 3, 8, 8, seed * 10 + 4);
    CHECK(rel_err(cycle_loss(s, fgs, x, gfx), ref_mean_abs(fgs, s) + ref_mean_abs(gfx, x)) <= 1e-9);
    CHECK(rel_err(identity_mapping_loss(gfx, x, fgs, s), ref_mean_abs(gfx, x) + ref_mean_abs(fgs, s)) <= 1e-9);
    CHECK(rel_err(ref_loss(fgs, s), ref_mean_abs(fgs, s)) <= 1e-9);
    const auto matte = make_soft_matte(8, 8);
    CHECK(rel_err(masked_reg_loss(fgs, s, matte), ref_masked(fgs, s, matte)) <= 1e-9);
    const auto real = random_scores(16, seed * 10 + 5), fake = random_scores(16, seed * 10 + 6);
    CHECK(rel_err(adversarial_loss(real, fake), ref_adversarial(real, fake)) <= 1e-9);
  }
}

TEST_CASE("adversarial loss clamps saturated scores") {
  const std::vector<double> real{1.0, 0.5}, fake{0.0, 0.5};
  CHECK(std::isfinite(adversarial_loss(real, fake)));
  const std::vector<double> perfect{0.5};
  CHECK(adversarial_loss(perfect, perfect) == doctest::Approx(2.0 * std::log(0.5)));
  CHECK_THROWS_AS(adversarial_loss({}, fake), ValidationError);
}

TEST_CASE("loss gradients match central differences on 4x4x3") {
  const auto s = random_tensor(1, 3, 4, 4, 11);
  auto gs = away_from(s, 12);
  const auto matte = micro_matte(4, 4);

  const auto l1 = l1_mean_grad(gs, s);
  const auto mk = masked_reg_loss_grad(gs, s, matte);
  for (std::size_t i = 0; i < gs.size(); ++i) {
    const double fd_ref = central_fd(gs, i, [&] { return ref_loss(gs, s); });
    CHECK(rel_err(l1.grad[i], fd_ref) <= 1e-3);
    const double fd_mask = central_fd(gs, i, [&] { return masked_reg_loss_grad(gs, s, matte).value; });
    CHECK(rel_err(mk.grad[i], fd_mask) <= 1e-3);
    // cycle and identity terms are sums of two L1 means; d/d first arg is the L1 gradient
    const double fd_cyc = central_fd(gs, i, [&] { return cycle_loss(s, gs, s, gs); });
    CHECK(rel_err(2.0 * l1.grad[i], fd_cyc) <= 1e-3);
    const double fd_id = central_fd(gs, i, [&] { return identity_mapping_loss(gs, s, gs, s); });
    CHECK(rel_err(2.0 * l1.grad[i], fd_id) <= 1e-3);
  }

  auto real = random_scores(16, 21), fake = random_scores(16, 22);
  const auto g = adversarial_loss_grad(real, fake);
  for (std::size_t i = 0; i < real.size(); ++i) {
    auto fd = [&](std::vector<double>& v) {
      const double keep = v[i];
      v[i] = keep + 1e-3;
      const double up = adversarial_loss(real, fake);
      v[i] = keep - 1e-3;
      const double down = adversarial_loss(real, fake);
      v[i] = keep;
      return (up - down) / 2e-3;
    };
    CHECK(rel_err(g.d_real[i], fd(real)) <= 1e-3);
    CHECK(rel_err(g.d_fake[i], fd(fake)) <= 1e-3);
  }
}

TEST_CASE("full objective weights") {
  CHECK(full_objective({1, 1, 1, 1, 1}, {10, 10, 5}) == 27.0);
  CHECK(full_objective({1, 1, 1, 1, 1}) == 27.0);
  CHECK(full_objective({0.5, -0.25, 0.1, 0.2, 0.3}, {1, 2, 3}) == doctest::Approx(0.5 - 0.25 + 0.1 + 0.4 + 0.9));
}

TEST_CASE("masked term is dominated by the reference term") {
  const auto matte = make_soft_matte(8, 8);
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto a = random_tensor(2, 3, 8, 8, 100 + seed), b = random_tensor(2, 3, 8, 8, 200 + seed);
    CHECK(masked_reg_loss(a, b, matte) <= ref_loss(a, b));
  }
}

TEST_CASE("masked term penalises the centre more than the corners") {
  const auto matte = make_soft_matte(16, 16);
  const nn::Tensor s(1, 3, 16, 16, 0.0f);
  nn::Tensor corner = s, centre = s;
  const int corners[4][2] = {{0, 0}, {0, 15}, {15, 0}, {15, 15}};
  const int middle[4][2] = {{7, 7}, {7, 8}, {8, 7}, {8, 8}};
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 4; ++k) {
      corner.at(0, c, corners[k][0], corners[k][1]) = 0.5f;
      centre.at(0, c, middle[k][0], middle[k][1]) = 0.5f;
    }
  CHECK(masked_reg_loss(corner, s, matte) < masked_reg_loss(centre, s, matte));
}

TEST_CASE("loss shape errors") {
  const auto a = random_tensor(1, 3, 8, 8, 1), b = random_tensor(1, 3, 8, 9, 2);
  CHECK_THROWS_AS(ref_loss(a, b), ValidationError);
  CHECK_THROWS_AS(masked_reg_loss(a, a, make_soft_matte(16, 8)), ValidationError);
  CHECK(ref_loss(a, a) == 0.0);
}

TEST_CASE("full objective is linear in each lambda") {
  const LossComponents c{0.3, 0.7, 0.2, 0.4, 0.6};
  const double base = full_objective(c, {0, 0, 0});
  for (int which = 0; which < 3; ++which) {
    std::vector<double> values;
    for (double l : {1.0, 2.0, 3.0}) {
      Lambdas lam{0, 0, 0};
      (which == 0 ? lam.cycle : which == 1 ? lam.identity : lam.mask) = l;
      values.push_back(full_objective(c, lam));
    }
    CHECK(values[1] - values[0] == doctest::Approx(values[2] - values[1]));
    CHECK(values[0] - base == doctest::Approx(values[1] - values[0]));
  }
  CHECK(full_objective({0, 0, 0, 0, 0}) == 0.0);
  // no identity or mask weight: the plain cycle-consistent objective
  CHECK(full_objective(c, {10, 0, 0}) == doctest::Approx(0.3 + 0.7 + 10 * 0.2));
}
