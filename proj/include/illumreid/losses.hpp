#pragma once

// Objective terms for regularised cycle-consistent translation. Image terms
// take NCHW batches in [-1, 1] and reduce with a mean over batch, pixels and
// channels; every term has a matching *_grad form returning the gradient
// w.r.t. its first (generator-output) argument.

#include <span>
#include <utility>
#include <vector>

#include "illumreid/nn.hpp"

namespace illumreid::translation {

// Centre-peaked Gaussian weight map confining the appearance constraint to the
// person region.
struct SoftMatte {
  int height = 0;
  int width = 0;
  double center_u = 0.0;  // row
  double center_v = 0.0;  // column
  double sigma_u = 1.0;
  double sigma_v = 1.0;
  std::vector<double> values;  // row-major H x W

  double at(int u, int v) const { return values[static_cast<std::size_t>(u) * width + v]; }
  double mean() const;
};

// sigma_frac = (sigma_u / H, sigma_v / W).
SoftMatte make_soft_matte(int height, int width, std::pair<double, double> sigma_frac = {1.0 / 3.0, 0.25});

inline constexpr double kScoreEps = 1e-7;

// E[log D(x)] + E[log(1 - D(G(s)))] over discriminator probabilities, clamped
// to [eps, 1 - eps].
double adversarial_loss(std::span<const double> real_scores, std::span<const double> fake_scores);

struct AdversarialGrad {
  double value = 0.0;
  std::vector<double> d_real;
  std::vector<double> d_fake;
};
AdversarialGrad adversarial_loss_grad(std::span<const double> real_scores,
                                      std::span<const double> fake_scores);

// E|F(G(s)) - s| + E|G(F(x)) - x|
double cycle_loss(const nn::Tensor& s, const nn::Tensor& fgs, const nn::Tensor& x,
                  const nn::Tensor& gfx);
// E|G(x) - x| + E|F(s) - s|
double identity_mapping_loss(const nn::Tensor& gx, const nn::Tensor& x, const nn::Tensor& fs,
                             const nn::Tensor& s);
// E|G(s) - s|
double ref_loss(const nn::Tensor& gs, const nn::Tensor& s);
// E|(G(s) - s) * m|, m broadcast over channels
double masked_reg_loss(const nn::Tensor& gs, const nn::Tensor& s, const SoftMatte& matte);

struct ImageLossGrad {
  double value = 0.0;
  nn::Tensor grad;  // d value / d first argument
};

// mean |a - b| and its gradient w.r.t. a (the building block of the L1 terms).
ImageLossGrad l1_mean_grad(const nn::Tensor& a, const nn::Tensor& b);
ImageLossGrad masked_reg_loss_grad(const nn::Tensor& gs, const nn::Tensor& s, const SoftMatte& matte);

struct LossComponents {
  double gan_g = 0.0;  // L_GAN(G, D_R, S, R)
  double gan_f = 0.0;  // L_GAN(F, D_S, R, S)
  double cycle = 0.0;
  double identity = 0.0;
  double mask = 0.0;
};

struct Lambdas {
  double cycle = 10.0;
  double identity = 10.0;
  double mask = 5.0;
};

// gan_g + gan_f + l1 * cycle + l2 * identity + l3 * mask
double full_objective(const LossComponents& c, const Lambdas& lambdas = {});

}  // namespace illumreid::translation
