#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "helpers.hpp"
#include "illumreid/errors.hpp"
#include "illumreid/eval.hpp"
#include "illumreid/synth_data.hpp"

using namespace illumreid;
using namespace illumreid::eval;

namespace {

// Full sort of the gallery per probe, then the position of the first true match.
std::vector<double> brute_force_cmc(const ProbeGallerySplit& s, Metric metric) {
  const std::size_t g = s.gallery.size();
  std::vector<double> hits(g, 0.0);
  for (const auto& p : s.probe) {
    std::vector<std::pair<double, std::size_t>> scored;
    for (std::size_t j = 0; j < g; ++j) {
      double v = 0.0;
      if (metric == Metric::cosine) {
        double ab = 0, aa = 0, bb = 0;
        for (std::size_t d = 0; d < p.feature.size(); ++d) {
          ab += double(p.feature[d]) * s.gallery[j].feature[d];
          aa += double(p.feature[d]) * p.feature[d];
          bb += double(s.gallery[j].feature[d]) * s.gallery[j].feature[d];
        }
        v = ab / std::sqrt(aa * bb);
      } else {
        for (std::size_t d = 0; d < p.feature.size(); ++d) {
          const double e = double(p.feature[d]) - s.gallery[j].feature[d];
          v -= e * e;
        }
        v = -std::sqrt(-v);
      }
      scored.push_back({-v, j});
    }
    std::sort(scored.begin(), scored.end());
    for (std::size_t r = 0; r < g; ++r) {
      if (s.gallery[scored[r].second].identity_id == p.identity_id) {
        for (std::size_t k = r; k < g; ++k) hits[k] += 1.0;
        break;
      }
    }
  }
  for (auto& h : hits) h /= double(s.probe.size());
  return hits;
}

ProbeGallerySplit random_split(std::uint64_t seed, int n, int dim, bool quantised) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd;
  std::uniform_int_distribution<int> q(-2, 2);
  std::vector<int> ids(n);
  std::iota(ids.begin(), ids.end(), 100);
  std::shuffle(ids.begin(), ids.end(), rng);
  ProbeGallerySplit s;
  auto feat = [&] {
    std::vector<float> f(dim);
    for (auto& v : f) v = quantised ? float(q(rng)) : nd(rng);
    if (quantised) f[0] = 3.0f;  // keeps cosine well defined
    return f;
  };
  for (int i = 0; i < n; ++i) s.gallery.push_back({feat(), 100 + i});
  for (int i = 0; i < n; ++i) s.probe.push_back({feat(), ids[i]});
  return s;
}

}  // namespace

TEST_CASE("cmc equals a brute-force ranking on random 10x10 instances") {
  int agree = 0;
  for (std::uint64_t seed = 0; seed < 120; ++seed) {
    for (Metric m : {Metric::cosine, Metric::euclidean}) {
      // every fourth instance uses coarse integer features so ties actually occur
      const auto split = random_split(seed, 10, 4, seed % 4 == 0);
      const auto curve = cmc(split, m);
      const auto oracle = brute_force_cmc(split, m);
      REQUIRE(curve.accuracies.size() == 10);
      bool same = true;
      for (std::size_t r = 0; r < 10; ++r) same = same && std::abs(curve.accuracies[r] - oracle[r]) < 1e-12;
      agree += same;
      CHECK(same);
      CHECK(std::is_sorted(curve.accuracies.begin(), curve.accuracies.end()));
      CHECK(curve.accuracies.back() == 1.0);
    }
  }
  CHECK(agree == 240);
}

TEST_CASE("cmc hand-worked example") {
  ProbeGallerySplit s;
  s.gallery = {{{1, 0}, 1}, {{0, 1}, 2}, {{-1, 0}, 3}};
  s.probe = {{{1, 0.1f}, 1}, {{1, 0.2f}, 2}, {{0, -1}, 3}};
  const auto c = cmc(s, Metric::cosine);
  // probe 1 -> rank 1, probe 2 -> rank 2, probe 3: ties between 1 and 3 at 0, gallery 1 wins -> rank 2
  CHECK(c.accuracies[0] == doctest::Approx(1.0 / 3));
  CHECK(c.accuracies[1] == doctest::Approx(1.0));
  CHECK(c.n_probes == 3);
}

TEST_CASE("cmc input validation") {
  ProbeGallerySplit s;
  CHECK_THROWS_AS(cmc(s), ValidationError);
  s.gallery = {{{1, 0}, 1}, {{0, 1}, 1}};
  s.probe = {{{1, 0}, 1}};
  CHECK_THROWS_AS(cmc(s), ValidationError);
  s.gallery = {{{1, 0}, 1}, {{0, 1, 0}, 2}};
  CHECK_THROWS_AS(cmc(s), ValidationError);
}

TEST_CASE("similarity") {
  const std::vector<float> a{3, 4}, b{6, 8}, c{0, 0};
  CHECK(similarity(a, b, Metric::cosine) == doctest::Approx(1.0));
  CHECK(similarity(a, b, Metric::euclidean) == doctest::Approx(-5.0));
  CHECK(metric_from_string("euclidean") == Metric::euclidean);
  CHECK_THROWS_AS(metric_from_string("manhattan"), ValidationError);
}

TEST_CASE("make_split pairs one image per identity from each camera") {
  const auto ids = synth::sample_identities(5, 1);
  const auto illums = synth::sample_illuminations(2, 2);
  const auto a = synth::generate_domain(ids, illums[0], 3, 3, {32, 16});
  const auto b = synth::generate_domain(ids, illums[1], 3, 4, {32, 16});
  const auto split = make_split(a, b, 9);
  CHECK(split.identity_ids.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(a.samples[split.probe_index[i]].identity_id == split.identity_ids[i]);
    CHECK(b.samples[split.gallery_index[i]].identity_id == split.identity_ids[i]);
  }
  const auto again = make_split(a, b, 9);
  CHECK(again.probe_index == split.probe_index);
  const auto fewer = synth::generate_domain(std::span(ids).first(4), illums[1], 3, 4, {32, 16});
  CHECK_THROWS_AS(make_split(a, fewer, 9), ValidationError);
}

TEST_CASE("image statistics") {
  std::vector<Image> flat{Image(8, 8, 0.5f)};
  const auto s = image_stats(flat);
  double total = 0.0;
  for (double v : s.intensity_histogram[0]) total += v;
  CHECK(total == doctest::Approx(1.0));
  CHECK(s.gradient_magnitude_histogram[0] == doctest::Approx(1.0));
  CHECK(stats_distance(s, s) == 0.0);
  std::vector<Image> bright{Image(8, 8, 0.9f)};
  const auto t = image_stats(bright);
  CHECK(stats_distance(s, t) > 0.0);
  CHECK(stats_distance(s, t) == doctest::Approx(stats_distance(t, s)));
}

TEST_CASE("foreground colour shift") {
  const auto matte = translation::make_soft_matte(16, 8);
  std::vector<Image> before{Image(16, 8, 0.2f)}, after{Image(16, 8, 0.2f)};
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 8; ++x) after[0].at(y, x, 1) = 0.5f;
  const auto shift = foreground_color_shift(before, after, matte);
  CHECK(shift[0] == doctest::Approx(0.0));
  CHECK(shift[1] == doctest::Approx(0.3));
  std::vector<Image> none;
  CHECK_THROWS_AS(foreground_color_shift(before, none, matte), ValidationError);
}

TEST_CASE("cmc is invariant to gallery order when similarities are distinct") {
  for (std::uint64_t seed = 0; seed < 30; ++seed) {
    auto split = random_split(1000 + seed, 10, 5, false);
    const auto before = cmc(split).accuracies;
    std::mt19937_64 rng(seed);
    std::shuffle(split.gallery.begin(), split.gallery.end(), rng);
    CHECK(cmc(split).accuracies == before);
  }
}

TEST_CASE("stats distance is a pseudometric") {
  const auto illums = synth::sample_illuminations(3, 5);
  const auto ids = synth::sample_identities(3, 6);
  std::vector<ImageStats> stats;
  for (const auto& il : illums) stats.push_back(image_stats(synth::generate_domain(ids, il, 2, 7, {32, 16})));
  for (const auto& a : stats)
    for (const auto& b : stats) {
      CHECK(stats_distance(a, b) >= 0.0);
      CHECK(stats_distance(a, b) == doctest::Approx(stats_distance(b, a)));
    }
  CHECK(stats_distance(stats[0], stats[0]) == 0.0);
}
