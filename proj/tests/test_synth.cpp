#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "illumreid/errors.hpp"
#include "illumreid/losses.hpp"
#include "illumreid/synth_data.hpp"

using namespace illumreid;
using namespace illumreid::synth;

namespace {

IlluminationSpec neutral(int id = 0) {
  IlluminationSpec s;
  s.illum_id = id;
  return s;
}

}  // namespace

TEST_CASE("neutral illumination reproduces the base colours on the foreground") {
  const auto id = sample_identities(1, 3).front();
  const auto img = render_person(id, neutral(), 0.0, 7);
  const auto mask = person_mask(id, 0.0, 7);
  int checked = 0;
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      if (!mask[y * img.width + x]) continue;
      bool matches_a_part = false;
      for (const auto& colour : id.body_colors) {
        bool eq = true;
        for (int c = 0; c < 3; ++c) eq = eq && std::abs(img.at(y, x, c) - float(colour[c])) < 1e-6f;
        matches_a_part = matches_a_part || eq;
      }
      CHECK(matches_a_part);
      ++checked;
    }
  CHECK(checked > 100);
}

TEST_CASE("rendering is deterministic and illumination-sensitive") {
  const auto id = sample_identities(1, 4).front();
  const auto illums = sample_illuminations(2, 5);
  const auto a = render_person(id, illums[0], 1.0, 9);
  CHECK(a == render_person(id, illums[0], 1.0, 9));
  const auto b = render_person(id, illums[1], 1.0, 9);
  const auto mask = person_mask(id, 1.0, 9);
  double diff = 0.0;
  for (int y = 0; y < a.height; ++y)
    for (int x = 0; x < a.width; ++x)
      if (mask[y * a.width + x])
        for (int c = 0; c < 3; ++c) diff += std::abs(a.at(y, x, c) - b.at(y, x, c));
  CHECK(diff > 0.0);
}

TEST_CASE("pixels stay in range for random specs") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto ids = sample_identities(3, seed);
    const auto illums = sample_illuminations(3, seed + 100);
    for (const auto& il : illums) {
      const auto m = generate_domain(ids, il, 1, seed, {32, 16});
      for (const auto& s : m.samples)
        for (float v : s.image.pixels) REQUIRE((v >= 0.0f && v <= 1.0f));
    }
  }
  IlluminationSpec harsh = neutral();
  harsh.channel_gain = {1.8, 0.2, 1.8};
  harsh.channel_bias = {0.2, -0.2, 0.2};
  harsh.gamma = 0.5;
  const auto img = render_person(sample_identities(1, 1).front(), harsh, 0.5, 1);
  for (float v : img.pixels) CHECK((v >= 0.0f && v <= 1.0f));
}

TEST_CASE("domain sizes") {
  const auto ids = sample_identities(20, 1);
  const auto illums = sample_illuminations(12, 2);
  std::size_t total = 0;
  for (const auto& il : illums) total += generate_domain(ids, il, 4, il.illum_id, {16, 16}).size();
  CHECK(total == 960);
  // 100 identities x 140 illuminations x 4 samples, counted without rendering
  CHECK(100 * 140 * 4 == 56000);
  // full-scale identity pool: the synthetic 100 joining 3,279 real identities
  CHECK(100 + 3279 == 3379);
  const auto one = generate_domain(std::span(ids).first(1), illums[0], 1, 3, {16, 16});
  CHECK(one.size() == 1);
  CHECK(one.samples[0].origin == Origin::synthetic);
  CHECK(one.domain_ids() == std::set<int>{illums[0].illum_id});
  CHECK_THROWS_AS(generate_domain({}, illums[0], 1, 3), ValidationError);
  CHECK_THROWS_AS(generate_domain(ids, illums[0], 0, 3), ValidationError);
}

TEST_CASE("target domain gap") {
  const auto ids = sample_identities(5, 11);
  const auto illum = sample_illuminations(1, 12).front();
  const auto clean = generate_domain(ids, illum, 4, 13);
  SUBCASE("zero gap reproduces the synthetic render") {
    const auto t = generate_target_domain(ids, illum, 4, {0.0, false, false}, 13);
    REQUIRE(t.size() == clean.size());
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t.samples[i].image == clean.samples[i].image);
    CHECK(t.samples[0].origin == Origin::real);
  }
  SUBCASE("sensor noise level") {
    const auto t = generate_target_domain(ids, illum, 4, {0.02, false, false}, 13);
    double s = 0.0, s2 = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < t.size(); ++i)
      for (std::size_t p = 0; p < t.samples[i].image.pixels.size(); ++p) {
        const double c = clean.samples[i].image.pixels[p];
        if (c < 0.05 || c > 0.95) continue;  // away from the clamp
        const double d = t.samples[i].image.pixels[p] - c;
        s += d;
        s2 += d * d;
        ++n;
      }
    REQUIRE(n >= 10000);
    const double sd = std::sqrt(s2 / n - (s / n) * (s / n));
    CHECK(sd == doctest::Approx(0.02).epsilon(0.25));
  }
  SUBCASE("catalog collision") {
    const std::vector<IlluminationSpec> catalog{illum};
    CHECK_THROWS_AS(generate_target_domain(ids, illum, 1, {}, 1, catalog), ValidationError);
  }
}

TEST_CASE("foreground sits inside the soft matte") {
  const auto matte = translation::make_soft_matte(64, 32);
  for (const auto& id : sample_identities(10, 21)) {
    for (double pose : {0.0, 1.0, 2.5, 4.0, 6.0}) {
      const auto mask = person_mask(id, pose, 5);
      int fg = 0, inside = 0;
      for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 32; ++x)
          if (mask[y * 32 + x]) {
            ++fg;
            inside += matte.at(y, x) > 0.5;
          }
      CHECK(double(inside) >= 0.6 * fg);
    }
  }
}

TEST_CASE("spec validation names the field") {
  auto id = sample_identities(1, 1).front();
  id.body_geometry[0] = 1.5;
  CHECK_THROWS_WITH_AS(validate(id), doctest::Contains("torso"), ValidationError);
  auto il = neutral();
  il.gamma = 3.0;
  CHECK_THROWS_WITH_AS(validate(il), doctest::Contains("gamma"), ValidationError);
  CHECK_THROWS_AS(render_person(sample_identities(1, 1).front(), neutral(), 7.0, 1), ValidationError);
  CHECK_THROWS_AS(render_person(sample_identities(1, 1).front(), neutral(), 0.0, 1, {8, 8}), ValidationError);
}

TEST_CASE("manifest and spec round trips") {
  testing::TempDir dir("manifest");
  const auto ids = sample_identities(3, 31);
  const auto illum = sample_illuminations(1, 32).front();
  const auto m = generate_domain(ids, illum, 2, 33, {32, 16});
  write_manifest(m, dir.path() / "d");
  const auto back = read_manifest(dir.path() / "d");
  CHECK(structurally_equal(m, back));
  for (std::size_t i = 0; i < m.size(); ++i) CHECK(quantize8(m.samples[i].image) == back.samples[i].image);
  CHECK(read_manifests(dir.path()).size() == 1);
  CHECK(identity_from_json(to_json(ids[0])).body_colors == ids[0].body_colors);
  CHECK(illumination_from_json(to_json(illum)).gamma == illum.gamma);
  CHECK_THROWS_AS(read_manifest(dir.path() / "missing"), ValidationError);
}

TEST_CASE("closest illumination") {
  const auto cat = sample_illuminations(6, 41);
  for (std::size_t k = 0; k < cat.size(); ++k) {
    auto q = cat[k];
    q.gamma *= 1.01;
    CHECK(closest_illumination(q, cat) == int(k));
  }
  CHECK(illumination_distance(cat[0], cat[0]) == 0.0);
}
