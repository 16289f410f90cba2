#pragma once

// The toy adaptation benchmark: data layout, per-seed shared stages and the
// ablation battery. The staged, on-disk pipeline in pipeline.hpp is built on
// the same pieces.

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "illumreid/eval.hpp"
#include "illumreid/illum_inference.hpp"
#include "illumreid/reid_model.hpp"
#include "illumreid/synth_data.hpp"
#include "illumreid/translation.hpp"

namespace illumreid::experiment {

struct DataConfig {
  int image_height = 64;
  int image_width = 32;
  int synthetic_identities = 20;
  int illuminations = 12;  // catalog size N
  int samples_per_identity = 6;
  int real_source_domains = 2;
  int real_identities = 30;
  int real_samples_per_identity = 4;
  int target_identities = 25;  // unlabeled target camera
  int target_samples_per_identity = 4;
  int test_identities = 50;  // probe / gallery
  synth::RealnessGap gap;
};

struct AblationConfig {
  std::vector<std::uint64_t> seeds;  // empty: seed, seed + 1, seed + 2
  int random_draws = 3;
  std::vector<std::string> conditions{"R", "R+S", "CycleGan", "CycleGan+L_id", "CycleGan+L_Ref", "Ours"};
};

struct ExperimentConfig {
  int schema_version = 1;
  std::optional<std::uint64_t> seed;
  std::string output_root;
  DataConfig data;
  reid::ReidArch reid_arch;
  TrainConfig reid_train{.learning_rate = 0.05, .epochs = 12, .batch_size = 32, .seed = 0,
                         .weight_decay = 5e-4, .momentum = 0.9};
  TrainConfig illum_train{.learning_rate = 0.05, .epochs = 8, .batch_size = 32, .seed = 0,
                          .weight_decay = 5e-4, .momentum = 0.9};
  double illum_holdout = 0.2;
  translation::TranslationConfig translation;
  TrainConfig finetune{.learning_rate = 0.01, .epochs = 8, .batch_size = 16, .seed = 0,
                       .weight_decay = 5e-4, .momentum = 0.9};
  eval::Metric metric = eval::Metric::cosine;
  AblationConfig ablation;

  std::uint64_t require_seed() const;
};

// Everything one seed of the benchmark draws.
struct ToyData {
  std::vector<synth::IdentitySpec> identities;
  std::vector<synth::IlluminationSpec> catalog;  // synthetic illuminations, class k = catalog[k]
  std::vector<synth::IlluminationSpec> real_illuminations;
  synth::IlluminationSpec target_illumination;
  std::vector<synth::DatasetManifest> synthetic;    // S_1..S_N
  std::vector<synth::DatasetManifest> real_source;  // R
  synth::DatasetManifest target_unlabeled;
  synth::DatasetManifest probe;
  synth::DatasetManifest gallery;
};

void validate(const DataConfig& config);

// Images are 8-bit quantised so the in-memory data equals what a disk round
// trip would give.
ToyData generate_toy_data(const DataConfig& config, std::uint64_t seed);

// Stage seeds, one independent stream per stage.
std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage);

struct SharedStages {
  reid::ReidTrainResult r;   // trained on R only
  reid::ReidTrainResult rs;  // trained on R + S
  illum::IllumTrainResult illum;
  illum::DomainSelection selection;
  int nearest_catalog_index = -1;  // by illumination parameters
};

SharedStages run_shared_stages(const ExperimentConfig& config, const ToyData& data, std::uint64_t seed,
                               bool need_r = true);

struct AdaptResult {
  translation::TranslationTrainResult translation;
  synth::DatasetManifest translated;
  reid::ReidTrainResult finetuned;
  eval::CMCCurve curve;
};

// Translate S_k towards the target camera with the given regularisers, then
// fine-tune the R+S model on the result and evaluate on probe / gallery.
AdaptResult adapt(const ExperimentConfig& config, const ToyData& data, const SharedStages& shared,
                  int k, translation::Ablation ablation, std::uint64_t seed);

// Condition name -> ablation for the translated conditions.
std::optional<translation::Ablation> condition_ablation(const std::string& condition);

struct ConditionRecord {
  std::string condition;
  std::uint64_t seed = 0;
  double rank1 = 0.0;
  std::vector<double> cmc;
  int domain_k = -1;  // synthetic domain used, if any
};

struct SeedDiagnostics {
  std::uint64_t seed = 0;
  int k_star = -1;
  int nearest_catalog_index = -1;
  double illum_heldout_accuracy = 0.0;
  double stats_synthetic_vs_target = 0.0;
  double stats_translated_vs_target = 0.0;  // "Ours" translation
  std::array<double, 3> color_shift_ours{};
  std::array<double, 3> color_shift_cyclegan{};
  double mask_loss_ours = 0.0;
  double mask_loss_cyclegan = 0.0;
  std::vector<int> random_k;
  double wall_seconds = 0.0;
};

struct AblationReport {
  std::vector<ConditionRecord> records;
  std::vector<SeedDiagnostics> seeds;

  std::vector<const ConditionRecord*> of(const std::string& condition) const;
  double mean_rank1(const std::string& condition) const;
};

nlohmann::json to_json(const AblationReport& report);

// Condition names beyond the configured list: "inferred_k" (same as Ours),
// "random_k" (one record per draw) and "random_k_min" (per-seed minimum).
// `progress` receives one line per finished condition when set.
AblationReport run_ablation(const ExperimentConfig& config,
                            const std::function<void(const std::string&)>& progress = {});

}  // namespace illumreid::experiment
