#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "illumreid/experiment.hpp"

namespace illumreid::pipeline {

using experiment::ExperimentConfig;

inline constexpr int kSchemaVersion = 1;

// Full configuration, every default spelled out.
nlohmann::json to_json(const ExperimentConfig& config);

// Parses and validates config text. Unknown keys are rejected with the
// closest known key; errors carry the line number when one can be found.
ExperimentConfig parse_config(const std::string& text, const std::string& origin = "<config>");
ExperimentConfig validate_config(const std::filesystem::path& path);
void validate(const ExperimentConfig& config);

// Closest candidate by edit distance ("" when candidates is empty).
std::string nearest_key(const std::string& key, const std::vector<std::string>& candidates);
std::size_t edit_distance(const std::string& a, const std::string& b);

inline const std::vector<std::string> kStages{"gen_data",        "train_reid", "train_illum",
                                              "infer_illum",     "train_translate",
                                              "translate",       "finetune",   "evaluate"};

struct StageRecord {
  std::string name;
  std::string dir;  // relative to the experiment root
  std::string hash;
  std::vector<std::string> artifacts;  // relative to the experiment root
  double wall_seconds = 0.0;
  bool resumed = false;
};

struct RunManifest {
  nlohmann::json config;
  std::vector<StageRecord> stages;
  int k_star = -1;
  int k_star_domain_id = -1;
  nlohmann::json metrics;
};

nlohmann::json to_json(const RunManifest& manifest);
RunManifest run_manifest_from_json(const nlohmann::json& j);
void write_run_manifest(const RunManifest& manifest, const std::filesystem::path& path);
RunManifest read_run_manifest(const std::filesystem::path& path);
// Config, stage names / hashes / artifacts, selection and metrics; wall times
// and resume flags are ignored.
bool structurally_equal(const RunManifest& a, const RunManifest& b);
// Problems found (missing artifacts, stage hash mismatches); empty when sound.
std::vector<std::string> check_run_manifest(const RunManifest& manifest,
                                            const std::filesystem::path& root);

struct RunOptions {
  std::filesystem::path out;  // overrides config.output_root when set
  bool force = false;
  std::function<void(const std::string&)> progress;
};

// gen_data -> train_reid -> train_illum -> infer_illum -> train_translate ->
// translate -> finetune -> evaluate, each stage in its own directory with a
// stage.json carrying the config hash. A stage whose hash matches is loaded
// instead of recomputed; a mismatch raises StaleCheckpoint unless `force`.
RunManifest run_pipeline(const ExperimentConfig& config, const RunOptions& options = {});

// Exclusive lock on an experiment directory (a lock file holding the pid).
class DirectoryLock {
 public:
  explicit DirectoryLock(const std::filesystem::path& dir);
  ~DirectoryLock();
  DirectoryLock(const DirectoryLock&) = delete;
  DirectoryLock& operator=(const DirectoryLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Stable 64-bit FNV-1a over a compact JSON dump, as 16 hex digits.
std::string hash_json(const nlohmann::json& j);

}  // namespace illumreid::pipeline
