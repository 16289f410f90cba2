#include <doctest.h>

#include <fstream>
#include <unistd.h>

#include "helpers.hpp"
#include "illumreid/errors.hpp"
#include "illumreid/pipeline.hpp"

using namespace illumreid;
using namespace illumreid::pipeline;
using nlohmann::json;

namespace {

json tiny_config(std::uint64_t seed) {
  json j = json::parse(R"({
    "schema_version": 1,
    "data": {"synthetic_identities": 4, "illuminations": 3, "samples_per_identity": 2,
             "real_source_domains": 1, "real_identities": 4, "real_samples_per_identity": 2,
             "target_identities": 3, "target_samples_per_identity": 2, "test_identities": 5},
    "reid": {"train": {"epochs": 1}},
    "illum": {"train": {"epochs": 1}},
    "finetune": {"epochs": 1},
    "translation": {"train": {"epochs": 1}, "steps_per_epoch": 4}
  })");
  j["seed"] = seed;
  return j;
}

RunManifest run(const json& config, const std::filesystem::path& out, bool force = false) {
  RunOptions o;
  o.out = out;
  o.force = force;
  return run_pipeline(parse_config(config.dump()), o);
}

}  // namespace

TEST_CASE("config parsing fills defaults") {
  const auto c = parse_config(R"({"schema_version": 1, "seed": 4})");
  CHECK(c.seed == 4u);
  CHECK(c.translation.lambdas.cycle == 10.0);
  CHECK(c.data.illuminations == 12);
  const auto j = to_json(c);
  CHECK(parse_config(j.dump()).data.image_height == 64);
  CHECK(to_json(parse_config(j.dump())) == j);
}

TEST_CASE("config errors") {
  CHECK_THROWS_WITH_AS(parse_config(R"({"schema_version": 1})"), doctest::Contains("'seed' is required"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(parse_config("{\"schema_version\": 1,\n\"seed\": 1,\n\"dta\": {}}"),
                       doctest::Contains("line 3"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"schema_version": 1, "seed": 1, "translation": {"lambda": [1,1,1]}})"),
                       doctest::Contains("did you mean 'translation.lambdas'"), ValidationError);
  CHECK_THROWS_WITH_AS(parse_config(R"({"schema_version": 1, "seed": 1, "data": {"illuminations": "many"}})"),
                       doctest::Contains("illuminations"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 7, "seed": 1})"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "seed": -3})"), ValidationError);
  CHECK_THROWS_AS(parse_config("{ not json"), ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "seed": 1, "translation": {"lambdas": [1,2]}})"),
                  ValidationError);
  CHECK_THROWS_AS(parse_config(R"({"schema_version": 1, "seed": 1, "ablation": {"conditions": ["Magic"]}})"),
                  ValidationError);
}

TEST_CASE("nearest key") {
  CHECK(edit_distance("kitten", "sitting") == 3);
  CHECK(nearest_key("dta", {"data", "seed", "eval"}) == "data");
  CHECK(nearest_key("x", {}).empty());
}

TEST_CASE("run manifest round trip") {
  RunManifest m;
  m.config = {{"seed", 1}};
  m.stages.push_back({"gen_data", "01_gen_data", "abc", {"01_gen_data/catalog.json"}, 1.5, false});
  m.k_star = 3;
  m.k_star_domain_id = 3;
  m.metrics = {{"rank1", 0.25}};
  testing::TempDir dir("manifest_rt");
  write_run_manifest(m, dir.path() / "run_manifest.json");
  const auto back = read_run_manifest(dir.path() / "run_manifest.json");
  CHECK(structurally_equal(m, back));
  auto other = back;
  other.metrics["rank1"] = 0.5;
  CHECK_FALSE(structurally_equal(m, other));
  CHECK_THROWS_AS(run_manifest_from_json(json{{"stages", 3}}), ValidationError);
}

TEST_CASE("pipeline runs, resumes and detects stale stages") {
  testing::TempDir dir("pipeline");
  const auto first = run(tiny_config(5), dir.path() / "a");
  CHECK(first.stages.size() == kStages.size());
  CHECK(check_run_manifest(first, dir.path() / "a").empty());
  CHECK(first.metrics.contains("rank1"));

  const auto resumed = run(tiny_config(5), dir.path() / "a");
  for (const auto& s : resumed.stages) CHECK(s.resumed);
  CHECK(structurally_equal(first, resumed));

  const auto fresh = run(tiny_config(5), dir.path() / "b");
  CHECK(fresh.metrics == first.metrics);

  auto changed = tiny_config(5);
  changed["finetune"]["epochs"] = 2;
  CHECK_THROWS_AS(run(changed, dir.path() / "a"), StaleCheckpoint);
  const auto forced = run(changed, dir.path() / "a", true);
  CHECK(forced.stages[0].resumed);
  CHECK_FALSE(forced.stages.back().resumed);

  // an artifact that disappeared is reported
  std::filesystem::remove(dir.path() / "a" / "08_evaluate" / "cmc.json");
  CHECK_FALSE(check_run_manifest(forced, dir.path() / "a").empty());
}

TEST_CASE("directory lock") {
  testing::TempDir dir("lock");
  {
    DirectoryLock lock(dir.path());
    CHECK(std::filesystem::exists(dir.path() / ".lock"));
    CHECK_THROWS_AS(DirectoryLock(dir.path()), ValidationError);
  }
  CHECK_FALSE(std::filesystem::exists(dir.path() / ".lock"));
  {
    std::ofstream os(dir.path() / ".lock");
    os << 999999999;  // no such process
  }
  CHECK_NOTHROW(DirectoryLock(dir.path()));
}

TEST_CASE("hash is stable and order independent") {
  CHECK(hash_json(json{{"a", 1}, {"b", 2}}) == hash_json(json::parse(R"({"b":2,"a":1})")));
  CHECK(hash_json(json{{"a", 1}}) != hash_json(json{{"a", 2}}));
  CHECK(hash_json(json{{"a", 1}}).size() == 16);
}
