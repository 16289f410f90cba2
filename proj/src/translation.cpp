#include "illumreid/translation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "illumreid/errors.hpp"

namespace illumreid::translation {

namespace {

using nn::Tensor;

nn::Sequential build_generator(const TranslationArch& a) {
  const int c = a.base_channels;
  nn::Sequential body;
  body.add<nn::Conv2d>(3, c, 3, 1, 1);
  body.add<nn::InstanceNorm>();
  body.add<nn::LeakyReLU>(0.0f);
  body.add<nn::Conv2d>(c, 2 * c, 3, 2, 1);
  body.add<nn::InstanceNorm>();
  body.add<nn::LeakyReLU>(0.0f);
  body.add<nn::Conv2d>(2 * c, 4 * c, 3, 2, 1);
  body.add<nn::InstanceNorm>();
  body.add<nn::LeakyReLU>(0.0f);
  for (int r = 0; r < a.res_blocks; ++r) {
    nn::Sequential block;
    block.add<nn::Conv2d>(4 * c, 4 * c, 3, 1, 1);
    block.add<nn::InstanceNorm>();
    block.add<nn::LeakyReLU>(0.0f);
    block.add<nn::Conv2d>(4 * c, 4 * c, 3, 1, 1);
    block.add<nn::InstanceNorm>();
    body.add<nn::Residual>(std::move(block));
  }
  body.add<nn::Upsample2x>();
  body.add<nn::Conv2d>(4 * c, 2 * c, 3, 1, 1);
  body.add<nn::InstanceNorm>();
  body.add<nn::LeakyReLU>(0.0f);
  body.add<nn::Upsample2x>();
  body.add<nn::Conv2d>(2 * c, c, 3, 1, 1);
  body.add<nn::InstanceNorm>();
  body.add<nn::LeakyReLU>(0.0f);
  body.add<nn::Conv2d>(c, 3, 3, 1, 1, a.identity_init ? 0.0f : 0.02f);
  nn::Sequential g;
  g.add<nn::LogitSkip>(std::move(body));
  return g;
}

nn::Sequential build_discriminator(const TranslationArch& a) {
  const int c = a.disc_channels;
  nn::Sequential d;
  d.add<nn::Conv2d>(3, c, 4, 2, 1, 0.02f);
  d.add<nn::LeakyReLU>(0.2f);
  d.add<nn::Conv2d>(c, 2 * c, 4, 2, 1, 0.02f);
  d.add<nn::InstanceNorm>();
  d.add<nn::LeakyReLU>(0.2f);
  d.add<nn::Conv2d>(2 * c, 1, 3, 1, 1, 0.02f);
  return d;
}

void validate_arch(const TranslationArch& a) {
  if (a.height < 8 || a.width < 8 || a.height % 4 != 0 || a.width % 4 != 0) {
    throw ValidationError("translation images must be at least 8x8 with sides divisible by 4, got " +
                          std::to_string(a.height) + "x" + std::to_string(a.width));
  }
  if (a.base_channels < 1 || a.disc_channels < 1) throw ValidationError("channel widths must be >= 1");
  if (a.res_blocks < 0) throw ValidationError("res_blocks must be >= 0");
}

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

std::vector<double> probabilities(const Tensor& logits) {
  std::vector<double> p(logits.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

bool clamped(double p) { return !(p > kScoreEps && p < 1.0 - kScoreEps); }

struct ScoreGrad {
  double value = 0.0;
  Tensor grad;  // w.r.t. the discriminator logits
};

// Generator-side adversarial term on D(fake) logits.
ScoreGrad generator_adversarial(const Tensor& logits, GanMode mode) {
  ScoreGrad out;
  out.grad = Tensor(logits.shape());
  const double n = static_cast<double>(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    if (mode == GanMode::least_squares) {
      sum += (z - 1.0) * (z - 1.0);
      out.grad[i] = static_cast<float>(2.0 * (z - 1.0) / n);
      continue;
    }
    const double raw = sigmoid(z);
    if (std::isnan(raw)) throw NumericalError("discriminator produced NaN");
    const double p = std::clamp(raw, kScoreEps, 1.0 - kScoreEps);
    double g = 0.0;
    if (mode == GanMode::log_saturating) {
      sum += std::log(1.0 - p);
      g = -p;  // d log(1 - sigmoid(z)) / dz
    } else {
      sum -= std::log(p);
      g = -(1.0 - p);  // d -log sigmoid(z) / dz
    }
    out.grad[i] = clamped(raw) ? 0.0f : static_cast<float>(g / n);
  }
  out.value = sum / n;
  return out;
}

struct DiscGrad {
  double value = 0.0;
  Tensor d_real;
  Tensor d_fake;
};

// Discriminator loss to minimise: -Eq.2 / 2 for the log modes, the halved
// least-squares loss otherwise.
DiscGrad discriminator_loss(const Tensor& real_logits, const Tensor& fake_logits, GanMode mode) {
  DiscGrad out;
  out.d_real = Tensor(real_logits.shape());
  out.d_fake = Tensor(fake_logits.shape());
  const double nr = static_cast<double>(real_logits.size());
  const double nf = static_cast<double>(fake_logits.size());
  if (mode == GanMode::least_squares) {
    double sr = 0.0;
    double sf = 0.0;
    for (std::size_t i = 0; i < real_logits.size(); ++i) {
      const double d = real_logits[i] - 1.0;
      sr += d * d;
      out.d_real[i] = static_cast<float>(d / nr);
    }
    for (std::size_t i = 0; i < fake_logits.size(); ++i) {
      const double d = fake_logits[i];
      sf += d * d;
      out.d_fake[i] = static_cast<float>(d / nf);
    }
    out.value = 0.5 * (sr / nr + sf / nf);
    return out;
  }
  const auto pr = probabilities(real_logits);
  const auto pf = probabilities(fake_logits);
  const AdversarialGrad g = adversarial_loss_grad(pr, pf);
  out.value = -0.5 * g.value;
  for (std::size_t i = 0; i < pr.size(); ++i) {
    out.d_real[i] = static_cast<float>(-0.5 * g.d_real[i] * pr[i] * (1.0 - pr[i]));
  }
  for (std::size_t i = 0; i < pf.size(); ++i) {
    out.d_fake[i] = static_cast<float>(-0.5 * g.d_fake[i] * pf[i] * (1.0 - pf[i]));
  }
  return out;
}

// Pool of past generator outputs shown to the discriminator.
class ReplayBuffer {
 public:
  ReplayBuffer(int capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {}

  Tensor query(const Tensor& batch) {
    if (capacity_ == 0) return batch;
    std::vector<Tensor> out;
    for (int i = 0; i < batch.n(); ++i) {
      Tensor one = nn::slice_batch(batch, i, 1);
      if (static_cast<int>(items_.size()) < capacity_) {
        items_.push_back(one);
        out.push_back(std::move(one));
        continue;
      }
      if (std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < 0.5) {
        const auto k = std::uniform_int_distribution<std::size_t>(0, items_.size() - 1)(rng_);
        out.push_back(items_[k]);
        items_[k] = std::move(one);
      } else {
        out.push_back(std::move(one));
      }
    }
    return nn::concat_batch(out);
  }

 private:
  int capacity_;
  std::mt19937_64 rng_;
  std::vector<Tensor> items_;
};

void check_dataset(const synth::DatasetManifest& m, const TranslationArch& arch, const char* role) {
  if (m.samples.empty()) throw ValidationError(std::string(role) + " dataset '" + m.name + "' is empty");
  for (const auto& s : m.samples) {
    if (s.image.height != arch.height || s.image.width != arch.width) {
      throw ValidationError(std::string(role) + " dataset '" + m.name + "' has a " +
                            std::to_string(s.image.height) + "x" + std::to_string(s.image.width) +
                            " image, expected " + std::to_string(arch.height) + "x" +
                            std::to_string(arch.width));
    }
  }
}

bool uses_identity(Ablation a) { return a == Ablation::id || a == Ablation::mask_full; }

std::vector<nn::Param*> params_of(std::initializer_list<nn::Sequential*> nets) {
  std::vector<nn::Param*> out;
  for (auto* n : nets)
    for (auto* p : n->params()) out.push_back(p);
  return out;
}

void zero(std::span<nn::Param* const> params) {
  for (auto* p : params) p->grad.fill(0.0f);
}

std::vector<Image> first_images(const synth::DatasetManifest& m, std::size_t count) {
  std::vector<Image> out;
  for (std::size_t i = 0; i < std::min(count, m.samples.size()); ++i) out.push_back(m.samples[i].image);
  return out;
}

}  // namespace

const char* to_string(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::id: return "id";
    case Ablation::ref: return "ref";
    case Ablation::mask_full: return "mask_full";
  }
  return "none";
}

Ablation ablation_from_string(const std::string& s) {
  if (s == "none") return Ablation::none;
  if (s == "id") return Ablation::id;
  if (s == "ref") return Ablation::ref;
  if (s == "mask_full") return Ablation::mask_full;
  throw ValidationError("unknown ablation '" + s + "' (expected none, id, ref or mask_full)");
}

const char* to_string(GanMode m) {
  switch (m) {
    case GanMode::log_saturating: return "log_saturating";
    case GanMode::nonsaturating: return "nonsaturating";
    case GanMode::least_squares: return "least_squares";
  }
  return "nonsaturating";
}

GanMode gan_mode_from_string(const std::string& s) {
  if (s == "log_saturating") return GanMode::log_saturating;
  if (s == "nonsaturating") return GanMode::nonsaturating;
  if (s == "least_squares") return GanMode::least_squares;
  throw ValidationError("unknown gan_mode '" + s +
                        "' (expected log_saturating, nonsaturating or least_squares)");
}

void validate(const TranslationConfig& c) {
  validate(c.train);
  validate_arch(c.arch);
  for (double l : {c.lambdas.cycle, c.lambdas.identity, c.lambdas.mask}) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ValidationError("lambdas must be finite and >= 0");
  }
  if (c.replay_buffer < 0) throw ValidationError("replay_buffer must be >= 0");
  if (c.steps_per_epoch < 0) throw ValidationError("steps_per_epoch must be >= 0");
  if (!(c.matte_sigma_frac.first > 0.0) || !(c.matte_sigma_frac.second > 0.0)) {
    throw ValidationError("soft matte sigmas must be positive");
  }
}

nlohmann::json to_json(const TranslationConfig& c) {
  return {{"lambdas", {c.lambdas.cycle, c.lambdas.identity, c.lambdas.mask}},
          {"ablation", to_string(c.ablation)},
          {"gan_mode", to_string(c.gan_mode)},
          {"train", to_json(c.train)},
          {"replay_buffer", c.replay_buffer},
          {"matte_sigma_frac", {c.matte_sigma_frac.first, c.matte_sigma_frac.second}},
          {"steps_per_epoch", c.steps_per_epoch},
          {"arch",
           {{"height", c.arch.height},
            {"width", c.arch.width},
            {"base_channels", c.arch.base_channels},
            {"res_blocks", c.arch.res_blocks},
            {"disc_channels", c.arch.disc_channels},
            {"identity_init", c.arch.identity_init}}}};
}

TranslationConfig translation_config_from_json(const nlohmann::json& j,
                                               const TranslationConfig& defaults) {
  TranslationConfig c = defaults;
  if (j.contains("lambdas")) {
    const auto l = j.at("lambdas").get<std::vector<double>>();
    if (l.size() != 3) throw ValidationError("lambdas must hold 3 values");
    c.lambdas = {l[0], l[1], l[2]};
  }
  if (j.contains("ablation")) c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
  if (j.contains("gan_mode")) c.gan_mode = gan_mode_from_string(j.at("gan_mode").get<std::string>());
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  if (j.contains("replay_buffer")) c.replay_buffer = j.at("replay_buffer").get<int>();
  if (j.contains("matte_sigma_frac")) {
    const auto s = j.at("matte_sigma_frac").get<std::vector<double>>();
    if (s.size() != 2) throw ValidationError("matte_sigma_frac must hold 2 values");
    c.matte_sigma_frac = {s[0], s[1]};
  }
  if (j.contains("steps_per_epoch")) c.steps_per_epoch = j.at("steps_per_epoch").get<int>();
  if (j.contains("arch")) {
    const auto& a = j.at("arch");
    if (a.contains("height")) c.arch.height = a.at("height").get<int>();
    if (a.contains("width")) c.arch.width = a.at("width").get<int>();
    if (a.contains("base_channels")) c.arch.base_channels = a.at("base_channels").get<int>();
    if (a.contains("res_blocks")) c.arch.res_blocks = a.at("res_blocks").get<int>();
    if (a.contains("disc_channels")) c.arch.disc_channels = a.at("disc_channels").get<int>();
    if (a.contains("identity_init")) c.arch.identity_init = a.at("identity_init").get<bool>();
  }
  return c;
}

TranslationModel make_translation_model(const TranslationArch& arch, std::uint64_t seed,
                                        std::pair<double, double> matte_sigma_frac) {
  validate_arch(arch);
  TranslationModel m;
  m.arch = arch;
  m.g = build_generator(arch);
  m.f = build_generator(arch);
  m.d_s = build_discriminator(arch);
  m.d_r = build_discriminator(arch);
  std::mt19937_64 rng(derive_seed(seed, 0x6A4E));
  m.g.init(rng);
  m.f.init(rng);
  m.d_s.init(rng);
  m.d_r.init(rng);
  m.matte = make_soft_matte(arch.height, arch.width, matte_sigma_frac);
  return m;
}

ProbeLosses probe_losses(const TranslationModel& model, std::span<const Image> source,
                         std::span<const Image> target) {
  const Tensor s = to_batch(source);
  const Tensor x = to_batch(target);
  const Tensor gs = model.g.infer(s);
  const Tensor fx = model.f.infer(x);
  ProbeLosses out;
  out.cycle = cycle_loss(s, model.f.infer(gs), x, model.g.infer(fx));
  out.mask = masked_reg_loss(gs, s, model.matte);
  return out;
}

TranslationTrainResult train_translation(const synth::DatasetManifest& source,
                                         const synth::DatasetManifest& target,
                                         const TranslationConfig& config) {
  validate(config);
  check_dataset(source, config.arch, "source");
  check_dataset(target, config.arch, "target");
  const auto source_domains = source.domain_ids();
  if (source_domains.size() != 1) {
    throw ValidationError("translation source must hold exactly one domain, '" + source.name +
                          "' holds " + std::to_string(source_domains.size()));
  }
  for (const auto& s : source.samples) {
    if (s.origin != synth::Origin::synthetic) {
      throw ValidationError("translation source '" + source.name + "' must be synthetic");
    }
  }

  TranslationTrainResult res;
  TranslationModel& m = res.model;
  m = make_translation_model(config.arch, config.train.seed, config.matte_sigma_frac);
  m.lambdas = config.lambdas;
  m.ablation = config.ablation;
  m.gan_mode = config.gan_mode;
  m.source_domain_id = *source_domains.begin();

  const auto eval_s = first_images(source, 16);
  const auto eval_x = first_images(target, 16);
  {
    const auto p = probe_losses(m, eval_s, eval_x);
    res.initial_cycle = p.cycle;
    res.initial_mask = p.mask;
  }

  const auto gen_params = params_of({&m.g, &m.f});
  const auto disc_params = params_of({&m.d_s, &m.d_r});
  const auto& tc = config.train;
  nn::Adam gen_opt(gen_params, tc.learning_rate, tc.momentum, 0.999, tc.weight_decay);
  nn::Adam disc_opt(disc_params, tc.learning_rate, tc.momentum, 0.999, tc.weight_decay);
  ReplayBuffer pool_r(config.replay_buffer, derive_seed(tc.seed, 0xB0F1));
  ReplayBuffer pool_s(config.replay_buffer, derive_seed(tc.seed, 0xB0F2));
  std::mt19937_64 rng(derive_seed(tc.seed, 0x7A45));

  const bool with_id = uses_identity(config.ablation);
  const double l_cyc = config.lambdas.cycle;
  const double l_id = with_id ? config.lambdas.identity : 0.0;
  const double l_ref = config.ablation == Ablation::ref ? config.lambdas.mask : 0.0;
  const double l_mask = config.ablation == Ablation::mask_full ? config.lambdas.mask : 0.0;

  const std::size_t b = static_cast<std::size_t>(tc.batch_size);
  const std::size_t ns = source.samples.size();
  const std::size_t nt = target.samples.size();
  const int steps = config.steps_per_epoch > 0
                        ? config.steps_per_epoch
                        : static_cast<int>((std::max(ns, nt) + b - 1) / b);
  std::vector<std::size_t> order_s(ns);
  std::vector<std::size_t> order_t(nt);
  const int half = tc.epochs / 2;

  for (int epoch = 0; epoch < tc.epochs; ++epoch) {
    const double factor =
        epoch < half ? 1.0 : static_cast<double>(tc.epochs - epoch) / (tc.epochs - half + 1);
    gen_opt.set_learning_rate(tc.learning_rate * factor);
    disc_opt.set_learning_rate(tc.learning_rate * factor);
    std::iota(order_s.begin(), order_s.end(), 0);
    std::iota(order_t.begin(), order_t.end(), 0);
    std::shuffle(order_s.begin(), order_s.end(), rng);
    std::shuffle(order_t.begin(), order_t.end(), rng);
    EpochLosses acc;

    for (int step = 0; step < steps; ++step) {
      std::vector<const Image*> bs;
      std::vector<const Image*> bx;
      for (std::size_t j = 0; j < b; ++j) {
        const std::size_t k = static_cast<std::size_t>(step) * b + j;
        bs.push_back(&source.samples[order_s[k % ns]].image);
        bx.push_back(&target.samples[order_t[k % nt]].image);
      }
      const Tensor s = to_batch(std::span<const Image* const>(bs));
      const Tensor x = to_batch(std::span<const Image* const>(bx));

      // Generator step.
      nn::Cache c_gs, c_fgs, c_fx, c_gfx, c_dr, c_ds;
      const Tensor gs = m.g.forward(s, c_gs);
      const Tensor fgs = m.f.forward(gs, c_fgs);
      const Tensor fx = m.f.forward(x, c_fx);
      const Tensor gfx = m.g.forward(fx, c_gfx);
      const Tensor dr_fake = m.d_r.forward(gs, c_dr);
      const Tensor ds_fake = m.d_s.forward(fx, c_ds);
      zero(gen_params);
      zero(disc_params);

      const ScoreGrad adv_g = generator_adversarial(dr_fake, config.gan_mode);
      const ScoreGrad adv_f = generator_adversarial(ds_fake, config.gan_mode);
      Tensor d_gs = m.d_r.backward(adv_g.grad, c_dr);
      Tensor d_fx = m.d_s.backward(adv_f.grad, c_ds);

      auto cyc_s = l1_mean_grad(fgs, s);
      auto cyc_x = l1_mean_grad(gfx, x);
      cyc_s.grad *= static_cast<float>(l_cyc);
      cyc_x.grad *= static_cast<float>(l_cyc);
      d_gs += m.f.backward(cyc_s.grad, c_fgs);
      d_fx += m.g.backward(cyc_x.grad, c_gfx);

      auto ref = l1_mean_grad(gs, s);
      auto mask = masked_reg_loss_grad(gs, s, m.matte);
      if (l_ref > 0.0) {
        ref.grad *= static_cast<float>(l_ref);
        d_gs += ref.grad;
      }
      if (l_mask > 0.0) {
        mask.grad *= static_cast<float>(l_mask);
        d_gs += mask.grad;
      }
      m.g.backward(d_gs, c_gs);
      m.f.backward(d_fx, c_fx);

      double id_value = 0.0;
      if (with_id) {
        nn::Cache c_gx, c_fs;
        const Tensor gx = m.g.forward(x, c_gx);
        const Tensor fs = m.f.forward(s, c_fs);
        auto id_x = l1_mean_grad(gx, x);
        auto id_s = l1_mean_grad(fs, s);
        id_value = id_x.value + id_s.value;
        id_x.grad *= static_cast<float>(l_id);
        id_s.grad *= static_cast<float>(l_id);
        m.g.backward(id_x.grad, c_gx);
        m.f.backward(id_s.grad, c_fs);
      }
      const double gen_total = adv_g.value + adv_f.value + l_cyc * (cyc_s.value + cyc_x.value) +
                               l_id * id_value + l_ref * ref.value + l_mask * mask.value;
      if (!std::isfinite(gen_total)) {
        throw TrainingDiverged("train_translation: non-finite generator loss", epoch);
      }
      gen_opt.step();

      // Discriminator step on real images and pooled fakes.
      zero(disc_params);
      const Tensor pooled_r = pool_r.query(gs);
      const Tensor pooled_s = pool_s.query(fx);
      nn::Cache c_rr, c_rf, c_sr, c_sf;
      const Tensor dr_real = m.d_r.forward(x, c_rr);
      const Tensor dr_pool = m.d_r.forward(pooled_r, c_rf);
      const Tensor ds_real = m.d_s.forward(s, c_sr);
      const Tensor ds_pool = m.d_s.forward(pooled_s, c_sf);
      const DiscGrad lr = discriminator_loss(dr_real, dr_pool, config.gan_mode);
      const DiscGrad ls = discriminator_loss(ds_real, ds_pool, config.gan_mode);
      if (!std::isfinite(lr.value) || !std::isfinite(ls.value)) {
        throw TrainingDiverged("train_translation: non-finite discriminator loss", epoch);
      }
      m.d_r.backward(lr.d_real, c_rr);
      m.d_r.backward(lr.d_fake, c_rf);
      m.d_s.backward(ls.d_real, c_sr);
      m.d_s.backward(ls.d_fake, c_sf);
      disc_opt.step();

      LossComponents comp;
      comp.gan_g = adversarial_loss(probabilities(dr_real), probabilities(dr_fake));
      comp.gan_f = adversarial_loss(probabilities(ds_real), probabilities(ds_fake));
      comp.cycle = cyc_s.value + cyc_x.value;
      comp.identity = id_value;
      comp.mask = l_ref > 0.0 ? ref.value : mask.value;
      Lambdas active{l_cyc, l_id, l_ref > 0.0 ? l_ref : l_mask};
      acc.gan_g += comp.gan_g;
      acc.gan_f += comp.gan_f;
      acc.cycle += comp.cycle;
      acc.identity += comp.identity;
      acc.ref += ref.value;
      acc.mask += mask.value;
      acc.objective += full_objective(comp, active);
      acc.disc += lr.value + ls.value;
    }
    const double n = static_cast<double>(steps);
    for (double* v : {&acc.gan_g, &acc.gan_f, &acc.cycle, &acc.identity, &acc.ref, &acc.mask,
                      &acc.objective, &acc.disc}) {
      *v /= n;
    }
    res.history.push_back(acc);
  }
  zero(gen_params);
  zero(disc_params);

  const auto p = probe_losses(m, eval_s, eval_x);
  res.final_cycle = p.cycle;
  res.final_mask = p.mask;
  return res;
}

synth::DatasetManifest translate(const TranslationModel& model, const synth::DatasetManifest& source) {
  check_dataset(source, model.arch, "source");
  for (const auto& s : source.samples) {
    if (model.source_domain_id >= 0 && s.domain_id != model.source_domain_id) {
      throw ValidationError("model was trained on domain " + std::to_string(model.source_domain_id) +
                            ", dataset '" + source.name + "' contains domain " +
                            std::to_string(s.domain_id));
    }
  }
  synth::DatasetManifest out;
  out.name = "translated_" + source.name;
  out.height = source.height;
  out.width = source.width;
  constexpr std::size_t kBatch = 32;
  for (std::size_t begin = 0; begin < source.samples.size(); begin += kBatch) {
    const std::size_t end = std::min(source.samples.size(), begin + kBatch);
    std::vector<const Image*> batch;
    for (std::size_t i = begin; i < end; ++i) batch.push_back(&source.samples[i].image);
    auto images = from_batch(model.generate(to_batch(std::span<const Image* const>(batch))));
    for (std::size_t i = begin; i < end; ++i) {
      const auto& in = source.samples[i];
      synth::Sample s;
      s.image = std::move(images[i - begin]);
      s.identity_id = in.identity_id;
      s.domain_id = kTranslatedDomainOffset + in.domain_id;
      s.origin = synth::Origin::synthetic;
      s.path = in.path;
      out.samples.push_back(std::move(s));
    }
  }
  return out;
}

void save_checkpoint(const TranslationModel& model, const std::filesystem::path& path) {
  auto& m = const_cast<TranslationModel&>(model);
  Checkpoint ckpt;
  ckpt.kind = "translation_model";
  ckpt.header["version"] = model.version;
  ckpt.header["arch"] = {{"height", model.arch.height},
                         {"width", model.arch.width},
                         {"base_channels", model.arch.base_channels},
                         {"res_blocks", model.arch.res_blocks},
                         {"disc_channels", model.arch.disc_channels},
                         {"identity_init", model.arch.identity_init}};
  ckpt.header["matte_sigma_frac"] = {model.matte.sigma_u / model.matte.height,
                                     model.matte.sigma_v / model.matte.width};
  ckpt.header["lambdas"] = {model.lambdas.cycle, model.lambdas.identity, model.lambdas.mask};
  ckpt.header["ablation"] = to_string(model.ablation);
  ckpt.header["gan_mode"] = to_string(model.gan_mode);
  ckpt.header["source_domain_id"] = model.source_domain_id;
  const auto params = params_of({&m.g, &m.f, &m.d_s, &m.d_r});
  ckpt.tensors = nn::snapshot(params);
  write_checkpoint(path, ckpt);
}

TranslationModel load_checkpoint(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path, "translation_model");
  try {
    const auto& h = ckpt.header;
    const int version = h.at("version").get<int>();
    if (version != kTranslationModelVersion) {
      throw ValidationError("unsupported translation model version " + std::to_string(version));
    }
    const auto& ja = h.at("arch");
    TranslationArch arch;
    arch.height = ja.at("height").get<int>();
    arch.width = ja.at("width").get<int>();
    arch.base_channels = ja.at("base_channels").get<int>();
    arch.res_blocks = ja.at("res_blocks").get<int>();
    arch.disc_channels = ja.at("disc_channels").get<int>();
    arch.identity_init = ja.at("identity_init").get<bool>();
    const auto sf = h.at("matte_sigma_frac").get<std::vector<double>>();
    const auto l = h.at("lambdas").get<std::vector<double>>();
    if (sf.size() != 2 || l.size() != 3) throw ValidationError("corrupt translation checkpoint header");
    TranslationModel m = make_translation_model(arch, 0, {sf[0], sf[1]});
    m.lambdas = {l[0], l[1], l[2]};
    m.ablation = ablation_from_string(h.at("ablation").get<std::string>());
    m.gan_mode = gan_mode_from_string(h.at("gan_mode").get<std::string>());
    m.source_domain_id = h.at("source_domain_id").get<int>();
    const auto params = params_of({&m.g, &m.f, &m.d_s, &m.d_r});
    nn::restore(params, ckpt.tensors);
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("corrupt translation checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace illumreid::translation
