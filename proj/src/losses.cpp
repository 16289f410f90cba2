#include "illumreid/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "illumreid/errors.hpp"

namespace illumreid::translation {

namespace {

void require_match(const nn::Tensor& a, const nn::Tensor& b, const char* what) {
  if (!(a.shape() == b.shape())) {
    throw ValidationError(std::string(what) + ": shape mismatch " + nn::to_string(a.shape()) +
                          " vs " + nn::to_string(b.shape()));
  }
  if (a.empty()) throw ValidationError(std::string(what) + ": empty batch");
}

double clamp_score(double p) {
  if (std::isnan(p)) throw NumericalError("adversarial_loss: NaN discriminator score");
  return std::clamp(p, kScoreEps, 1.0 - kScoreEps);
}

double l1_mean(const nn::Tensor& a, const nn::Tensor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(static_cast<double>(a[i]) - b[i]);
  return s / static_cast<double>(a.size());
}

void require_matte(const nn::Tensor& t, const SoftMatte& m) {
  if (t.h() != m.height || t.w() != m.width) {
    throw ValidationError("masked_reg_loss: matte is " + std::to_string(m.height) + "x" +
                          std::to_string(m.width) + " but images are " + std::to_string(t.h()) +
                          "x" + std::to_string(t.w()));
  }
}

}  // namespace

double SoftMatte::mean() const {
  double s = 0.0;
  for (double v : values) s += v;
  return values.empty() ? 0.0 : s / static_cast<double>(values.size());
}

SoftMatte make_soft_matte(int height, int width, std::pair<double, double> sigma_frac) {
  if (height < 8 || width < 8) {
    throw ValidationError("soft matte needs height, width >= 8, got " + std::to_string(height) + "x" +
                          std::to_string(width));
  }
  if (!(sigma_frac.first > 0.0) || !(sigma_frac.second > 0.0)) {
    throw ValidationError("soft matte sigmas must be positive");
  }
  SoftMatte m;
  m.height = height;
  m.width = width;
  m.center_u = 0.5 * (height - 1);
  m.center_v = 0.5 * (width - 1);
  m.sigma_u = sigma_frac.first * height;
  m.sigma_v = sigma_frac.second * width;
  m.values.resize(static_cast<std::size_t>(height) * width);
  for (int u = 0; u < height; ++u) {
    for (int v = 0; v < width; ++v) {
      const double du = (u - m.center_u) / m.sigma_u;
      const double dv = (v - m.center_v) / m.sigma_v;
      m.values[static_cast<std::size_t>(u) * width + v] = std::exp(-0.5 * (du * du + dv * dv));
    }
  }
  return m;
}

double adversarial_loss(std::span<const double> real_scores, std::span<const double> fake_scores) {
  return adversarial_loss_grad(real_scores, fake_scores).value;
}

AdversarialGrad adversarial_loss_grad(std::span<const double> real_scores,
                                      std::span<const double> fake_scores) {
  if (real_scores.empty() || fake_scores.empty()) {
    throw ValidationError("adversarial_loss: empty score grid");
  }
  AdversarialGrad out;
  out.d_real.resize(real_scores.size());
  out.d_fake.resize(fake_scores.size());
  const double nr = static_cast<double>(real_scores.size());
  const double nf = static_cast<double>(fake_scores.size());
  double sum_real = 0.0;
  for (std::size_t i = 0; i < real_scores.size(); ++i) {
    const double raw = real_scores[i];
    const double p = clamp_score(raw);
    sum_real += std::log(p);
    out.d_real[i] = (raw > kScoreEps && raw < 1.0 - kScoreEps) ? 1.0 / (nr * p) : 0.0;
  }
  double sum_fake = 0.0;
  for (std::size_t i = 0; i < fake_scores.size(); ++i) {
    const double raw = fake_scores[i];
    const double p = clamp_score(raw);
    sum_fake += std::log(1.0 - p);
    out.d_fake[i] = (raw > kScoreEps && raw < 1.0 - kScoreEps) ? -1.0 / (nf * (1.0 - p)) : 0.0;
  }
  out.value = sum_real / nr + sum_fake / nf;
  return out;
}

double cycle_loss(const nn::Tensor& s, const nn::Tensor& fgs, const nn::Tensor& x,
                  const nn::Tensor& gfx) {
  require_match(fgs, s, "cycle_loss");
  require_match(gfx, x, "cycle_loss");
  return l1_mean(fgs, s) + l1_mean(gfx, x);
}

double identity_mapping_loss(const nn::Tensor& gx, const nn::Tensor& x, const nn::Tensor& fs,
                             const nn::Tensor& s) {
  require_match(gx, x, "identity_mapping_loss");
  require_match(fs, s, "identity_mapping_loss");
  return l1_mean(gx, x) + l1_mean(fs, s);
}

double ref_loss(const nn::Tensor& gs, const nn::Tensor& s) {
  require_match(gs, s, "ref_loss");
  return l1_mean(gs, s);
}

double masked_reg_loss(const nn::Tensor& gs, const nn::Tensor& s, const SoftMatte& matte) {
  return masked_reg_loss_grad(gs, s, matte).value;
}

ImageLossGrad l1_mean_grad(const nn::Tensor& a, const nn::Tensor& b) {
  require_match(a, b, "l1_mean");
  ImageLossGrad out;
  out.grad = nn::Tensor(a.shape());
  const double n = static_cast<double>(a.size());
  const auto inv = static_cast<float>(1.0 / n);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += std::abs(d);
    out.grad[i] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0f);
  }
  out.value = s / n;
  return out;
}

ImageLossGrad masked_reg_loss_grad(const nn::Tensor& gs, const nn::Tensor& s, const SoftMatte& matte) {
  require_match(gs, s, "masked_reg_loss");
  require_matte(gs, matte);
  ImageLossGrad out;
  out.grad = nn::Tensor(gs.shape());
  const double n = static_cast<double>(gs.size());
  double total = 0.0;
  for (int i = 0; i < gs.n(); ++i)
    for (int c = 0; c < gs.c(); ++c)
      for (int u = 0; u < gs.h(); ++u)
        for (int v = 0; v < gs.w(); ++v) {
          const double m = matte.at(u, v);
          const double d = static_cast<double>(gs.at(i, c, u, v)) - s.at(i, c, u, v);
          total += std::abs(d) * m;
          out.grad.at(i, c, u, v) = static_cast<float>((d > 0.0 ? m : (d < 0.0 ? -m : 0.0)) / n);
        }
  out.value = total / n;
  return out;
}

double full_objective(const LossComponents& c, const Lambdas& lambdas) {
  return c.gan_g + c.gan_f + lambdas.cycle * c.cycle + lambdas.identity * c.identity +
         lambdas.mask * c.mask;
}

}  // namespace illumreid::translation
