#include <doctest.h>
#include <fstream>

#include "helpers.hpp"
#include "illumreid/errors.hpp"
#include "illumreid/eval.hpp"
#include "illumreid/reid_model.hpp"
#include "illumreid/translation.hpp"

using namespace illumreid;

namespace {

struct Data {
  std::vector<synth::IdentitySpec> ids = synth::sample_identities(6, 3);
  std::vector<synth::IlluminationSpec> illums = synth::sample_illuminations(3, 4);
  synth::DatasetManifest a = synth::generate_domain(ids, illums[0], 4, 5, {32, 16});
  synth::DatasetManifest b = synth::generate_domain(ids, illums[1], 4, 6, {32, 16});
  synth::DatasetManifest target =
      synth::generate_target_domain(synth::sample_identities(4, 9, 500), illums[2], 2, {}, 7, {}, {32, 16});
};

std::vector<Image> images_of(const synth::DatasetManifest& m) {
  std::vector<Image> out;
  for (const auto& s : m.samples) out.push_back(s.image);
  return out;
}

TrainConfig quick(double lr, int epochs, int batch) {
  TrainConfig c;
  c.seed = 1;
  c.learning_rate = lr;
  c.epochs = epochs;
  c.batch_size = batch;
  return c;
}

translation::TranslationConfig tiny_translation(translation::Ablation ablation) {
  translation::TranslationConfig c;
  c.ablation = ablation;
  c.train.epochs = 2;
  c.train.seed = 2;
  c.steps_per_epoch = 6;
  c.arch.height = 32;
  c.arch.width = 16;
  return c;
}

}  // namespace

TEST_CASE("reid training, features and checkpoint round trip") {
  Data d;
  std::vector<synth::DatasetManifest> both{d.a, d.b};
  reid::ReidArch arch;
  arch.height = 32;
  arch.width = 16;
  const auto res = reid::train_joint(both, quick(0.05, 6, 16), arch);
  CHECK(res.model.num_classes() == 6);
  CHECK(res.log.epoch_loss.size() == 6);
  CHECK(res.log.epoch_loss.back() < res.log.epoch_loss.front());

  const auto imgs = images_of(d.a);
  const auto f = reid::extract_features(res.model, imgs);
  CHECK(f.size() == imgs.size());
  CHECK(f[0].size() == std::size_t(arch.embedding_dim));

  testing::TempDir dir("reid");
  reid::save_checkpoint(res.model, dir.path() / "m.ckpt");
  const auto back = reid::load_checkpoint(dir.path() / "m.ckpt");
  CHECK(reid::extract_features(back, imgs) == f);
  CHECK(back.label_map() == res.model.label_map());

  // same seed, same model
  const auto again = reid::train_joint(both, quick(0.05, 6, 16), arch);
  CHECK(reid::extract_features(again.model, imgs) == f);

  const auto ft = reid::finetune(res.model, d.b, quick(0.005, 1, 8));
  CHECK(ft.model.num_classes() == 6);
  CHECK(ft.model.label_map() == res.model.label_map());
  CHECK(reid::extract_features(res.model, imgs) == f);

  // zero epochs on known ids leaves the model untouched
  const auto idle = reid::finetune(res.model, d.b, quick(0.005, 0, 8));
  CHECK(reid::extract_features(idle.model, imgs) == f);

  // unseen ids get a fresh head of their own
  const auto fresh = reid::finetune(res.model, d.target, quick(0.005, 1, 4));
  CHECK(fresh.model.num_classes() == 4);
  CHECK(fresh.model.label_map().count(500) == 1);
}

TEST_CASE("reid error paths") {
  Data d;
  std::vector<synth::DatasetManifest> none;
  CHECK_THROWS_AS(reid::train_joint(none, quick(0.05, 1, 8)), ValidationError);
  std::vector<synth::DatasetManifest> one_id{synth::generate_domain(std::span(d.ids).first(1), d.illums[0], 3, 1, {32, 16})};
  reid::ReidArch arch;
  arch.height = 32;
  arch.width = 16;
  CHECK_THROWS_AS(reid::train_joint(one_id, quick(0.05, 1, 8), arch), ValidationError);
  std::vector<synth::DatasetManifest> both{d.a, d.b};
  CHECK_THROWS_AS(reid::train_joint(both, quick(1e9, 3, 8), arch), TrainingDiverged);
  CHECK_THROWS_AS(reid::train_joint(both, quick(-1.0, 3, 8), arch), ValidationError);

  testing::TempDir dir("badckpt");
  {
    std::ofstream os(dir.path() / "junk.ckpt");
    os << "not a checkpoint";
  }
  CHECK_THROWS_AS(reid::load_checkpoint(dir.path() / "junk.ckpt"), ValidationError);
}

TEST_CASE("identity-initialised generator starts as the identity map") {
  translation::TranslationArch arch;
  arch.height = 32;
  arch.width = 16;
  arch.identity_init = true;
  const auto model = translation::make_translation_model(arch, 3);
  Data d;
  const auto imgs = images_of(d.a);
  const auto x = to_batch(std::span(imgs).first(2));
  const auto y = model.generate(x);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == doctest::Approx(x[i]).epsilon(1e-3));
}

TEST_CASE("translation training, translate and checkpoint") {
  Data d;
  const auto res = translation::train_translation(d.a, d.target, tiny_translation(translation::Ablation::mask_full));
  CHECK(res.history.size() == 2);
  for (const auto& h : res.history) {
    CHECK(std::isfinite(h.objective));
    CHECK(h.objective == doctest::Approx(h.gan_g + h.gan_f + 10 * h.cycle + 10 * h.identity + 5 * h.mask));
  }

  const auto out = translation::translate(res.model, d.a);
  REQUIRE(out.size() == d.a.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    CHECK(out.samples[i].identity_id == d.a.samples[i].identity_id);
    CHECK(out.samples[i].domain_id == translation::kTranslatedDomainOffset + d.a.samples[i].domain_id);
    CHECK(out.samples[i].path == d.a.samples[i].path);
  }
  CHECK_THROWS_AS(translation::translate(res.model, d.b), ValidationError);

  testing::TempDir dir("translation");
  translation::save_checkpoint(res.model, dir.path() / "t.ckpt");
  const auto back = translation::load_checkpoint(dir.path() / "t.ckpt");
  const auto again = translation::translate(back, d.a);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(again.samples[i].image == out.samples[i].image);
  CHECK(back.ablation == translation::Ablation::mask_full);
}

TEST_CASE("ablation only changes which regularisers are active") {
  Data d;
  const auto none = translation::train_translation(d.a, d.target, tiny_translation(translation::Ablation::none));
  for (const auto& h : none.history) CHECK(h.objective == doctest::Approx(h.gan_g + h.gan_f + 10 * h.cycle));
  const auto ref = translation::train_translation(d.a, d.target, tiny_translation(translation::Ablation::ref));
  for (const auto& h : ref.history) CHECK(h.objective == doctest::Approx(h.gan_g + h.gan_f + 10 * h.cycle + 5 * h.ref));
}

TEST_CASE("translation config validation") {
  using namespace translation;
  CHECK(ablation_from_string(to_string(Ablation::ref)) == Ablation::ref);
  CHECK(gan_mode_from_string("least_squares") == GanMode::least_squares);
  CHECK_THROWS_AS(ablation_from_string("everything"), ValidationError);
  TranslationConfig c;
  c.lambdas.mask = -1.0;
  CHECK_THROWS_AS(validate(c), ValidationError);
  TranslationConfig ok;
  ok.ablation = Ablation::id;
  const auto back = translation_config_from_json(to_json(ok));
  CHECK(back.ablation == Ablation::id);
  CHECK(back.lambdas.cycle == 10.0);
  CHECK(back.lambdas.identity == 10.0);
  CHECK(back.lambdas.mask == 5.0);
  Data d;
  CHECK_THROWS_AS(train_translation(d.target, d.target, tiny_translation(Ablation::none)), ValidationError);
}

TEST_CASE("regularised translation keeps the foreground and lowers the cycle loss") {
  Data d;
  auto config = tiny_translation(translation::Ablation::none);
  config.train.epochs = 3;
  config.steps_per_epoch = 24;
  const auto none = translation::train_translation(d.a, d.target, config);
  config.ablation = translation::Ablation::mask_full;
  const auto full = translation::train_translation(d.a, d.target, config);
  CHECK(none.final_cycle < none.initial_cycle);
  CHECK(full.final_mask <= none.final_mask);
  CHECK(full.final_mask <= 0.15);

  const auto source = images_of(d.a);
  const auto translated = images_of(translation::translate(full.model, d.a));
  const auto shift = eval::foreground_color_shift(source, translated, full.model.matte);
  for (double s : shift) CHECK(s <= 0.25);

  // translate is a pure function of (model, input)
  const auto again = images_of(translation::translate(full.model, d.a));
  CHECK(again == translated);
}
