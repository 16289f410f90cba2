#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>

#include "helpers.hpp"
#include "illumreid/errors.hpp"
#include "illumreid/illum_inference.hpp"

using namespace illumreid;
using namespace illumreid::illum;

namespace {

// Mode by direct counting with a map; ties resolved towards the smaller class.
int mode_oracle(const std::vector<int>& preds) {
  std::map<int, int> count;
  for (int p : preds) ++count[p];
  int best = -1, best_count = -1;
  for (const auto& [k, c] : count)
    if (c > best_count) best = k, best_count = c;
  return best;
}

struct Fixture {
  std::vector<synth::IlluminationSpec> catalog = synth::sample_illuminations(4, 7);
  std::vector<synth::IdentitySpec> ids = synth::sample_identities(6, 8);
  std::vector<synth::DatasetManifest> domains;
  Fixture() {
    for (const auto& il : catalog) domains.push_back(synth::generate_domain(ids, il, 4, 20 + il.illum_id, {32, 16}));
  }
};

TrainConfig quick(std::uint64_t seed) {
  TrainConfig c;
  c.seed = seed;
  c.learning_rate = 0.05;
  c.epochs = 8;
  c.batch_size = 16;
  return c;
}

}  // namespace

TEST_CASE("select_domain equals the brute-force mode on 1000 random predictions") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n_classes = 1 + int(rng() % 12);
    std::vector<int> preds(1 + rng() % 40);
    for (auto& p : preds) p = int(rng() % n_classes);
    const auto sel = select_domain(preds, n_classes);
    REQUIRE(sel.k_star == mode_oracle(preds));
    int total = 0;
    for (int v : sel.vote_counts) total += v;
    CHECK(total == int(preds.size()));
    CHECK(sel.n_images == int(preds.size()));
    std::shuffle(preds.begin(), preds.end(), rng);
    CHECK(select_domain(preds, n_classes).k_star == sel.k_star);
  }
}

TEST_CASE("select_domain over a 140-way catalog") {
  std::vector<int> preds;
  for (int i = 0; i < 140; ++i) preds.push_back(i);
  preds.push_back(139);
  const auto s = select_domain(preds, 140);
  CHECK(s.vote_counts.size() == 140);
  CHECK(s.k_star == 139);
}

TEST_CASE("select_domain examples") {
  const std::vector<int> p{2, 2, 5, 2, 7};
  const auto s = select_domain(p, 8);
  CHECK(s.k_star == 2);
  CHECK(s.vote_counts[2] == 3);
  const std::vector<int> same(9, 4);
  CHECK(select_domain(same, 6).vote_counts[4] == 9);
  const std::vector<int> tie{3, 1, 3, 1};
  CHECK(select_domain(tie, 4).k_star == 1);
  CHECK_THROWS_AS(select_domain({}, 3), ValidationError);
  const std::vector<int> bad{0, 5};
  CHECK_THROWS_AS(select_domain(bad, 3), ValidationError);
}

TEST_CASE("classifier learns distinct illuminations and round-trips") {
  Fixture f;
  const auto res = train_illum_classifier(f.domains, quick(3));
  CHECK(res.heldout_accuracy >= 0.8);
  CHECK(res.classifier.num_classes() == 4);

  // a slightly perturbed catalog illumination maps back to its own domain
  auto probe = f.catalog[2];
  probe.illum_id = 99;
  probe.gamma *= 1.03;
  const auto target = synth::generate_domain(f.ids, probe, 3, 91, {32, 16});
  std::vector<Image> images;
  for (const auto& s : target.samples) images.push_back(s.image);
  const auto sel = infer_domain(res.classifier, images);
  CHECK(sel.k_star == 2);
  CHECK(sel.domain_id == f.catalog[2].illum_id);

  testing::TempDir dir("illum");
  save_checkpoint(res.classifier, dir.path() / "c.ckpt");
  const auto back = load_checkpoint(dir.path() / "c.ckpt");
  CHECK(back.scores(images) == res.classifier.scores(images));
  CHECK(back.domain_ids == res.classifier.domain_ids);
  CHECK_THROWS_AS(infer_domain(back, {}), ValidationError);
}

TEST_CASE("identical illuminations are flagged as degenerate") {
  Fixture f;
  auto twin = f.catalog[0];
  twin.illum_id = 50;
  std::vector<synth::DatasetManifest> two{f.domains[0],
                                          synth::generate_domain(f.ids, twin, 4, 20, {32, 16})};
  const auto res = train_illum_classifier(two, quick(4));
  CHECK(res.heldout_accuracy == doctest::Approx(0.5).epsilon(0.4));
  CHECK_FALSE(res.warnings.empty());
}

TEST_CASE("classifier training preconditions") {
  Fixture f;
  std::vector<synth::DatasetManifest> one{f.domains[0]};
  CHECK_THROWS_AS(train_illum_classifier(one, quick(1)), ValidationError);
  std::vector<synth::DatasetManifest> dup{f.domains[0], f.domains[0]};
  CHECK_THROWS_AS(train_illum_classifier(dup, quick(1)), ValidationError);
}
