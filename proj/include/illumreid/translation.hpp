#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "illumreid/losses.hpp"
#include "illumreid/synth_data.hpp"
#include "illumreid/training.hpp"

namespace illumreid::translation {

// Which regularisers join the cycle-consistent objective.
//   none      : adversarial + cycle
//   id        : + identity mapping
//   ref       : + unmasked reference term E|G(s) - s|
//   mask_full : + identity mapping + masked reference term
enum class Ablation { none, id, ref, mask_full };

// Generator-side adversarial objective. log_saturating minimises
// log(1 - D(G(s))) as written; nonsaturating minimises -log D(G(s)).
enum class GanMode { log_saturating, nonsaturating, least_squares };

const char* to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);
const char* to_string(GanMode m);
GanMode gan_mode_from_string(const std::string& s);

struct TranslationArch {
  int height = 64;
  int width = 32;
  int base_channels = 8;
  int res_blocks = 2;
  int disc_channels = 8;
  // Zero the generators' last layer so both start as the identity map.
  bool identity_init = false;
};

struct TranslationConfig {
  Lambdas lambdas;
  Ablation ablation = Ablation::mask_full;
  GanMode gan_mode = GanMode::nonsaturating;
  // learning_rate, epochs, batch_size, seed are used; momentum is Adam's beta1.
  TrainConfig train{.learning_rate = 1e-3, .epochs = 6, .batch_size = 1, .seed = 0,
                    .weight_decay = 0.0, .momentum = 0.5};
  int replay_buffer = 50;
  std::pair<double, double> matte_sigma_frac{1.0 / 3.0, 0.25};
  // 0 = one pass over the larger of the two datasets per epoch.
  int steps_per_epoch = 0;
  TranslationArch arch;
};

void validate(const TranslationConfig& config);
nlohmann::json to_json(const TranslationConfig& config);
TranslationConfig translation_config_from_json(const nlohmann::json& j,
                                               const TranslationConfig& defaults = {});

inline constexpr int kTranslationModelVersion = 1;
// Translated datasets get domain_id = offset + source domain_id.
inline constexpr int kTranslatedDomainOffset = 1000;

struct TranslationModel {
  TranslationArch arch;
  nn::Sequential g;    // synthetic -> real
  nn::Sequential f;    // real -> synthetic
  nn::Sequential d_s;  // patch discriminator on the synthetic side
  nn::Sequential d_r;  // patch discriminator on the real side
  SoftMatte matte;
  Lambdas lambdas;
  Ablation ablation = Ablation::mask_full;
  GanMode gan_mode = GanMode::nonsaturating;
  int source_domain_id = -1;
  int version = kTranslationModelVersion;

  // G on a [-1,1] NCHW batch.
  nn::Tensor generate(const nn::Tensor& s) const { return g.infer(s); }
};

// Fresh model: random init (or identity init for the generators).
TranslationModel make_translation_model(const TranslationArch& arch, std::uint64_t seed,
                                        std::pair<double, double> matte_sigma_frac = {1.0 / 3.0,
                                                                                     0.25});

struct EpochLosses {
  double gan_g = 0.0;
  double gan_f = 0.0;
  double cycle = 0.0;
  double identity = 0.0;
  double ref = 0.0;
  double mask = 0.0;
  double objective = 0.0;
  double disc = 0.0;
};

struct TranslationTrainResult {
  TranslationModel model;
  std::vector<EpochLosses> history;
  // Measured on a fixed evaluation subset before and after training.
  double initial_cycle = 0.0;
  double final_cycle = 0.0;
  double initial_mask = 0.0;
  double final_mask = 0.0;
};

// Alternating discriminator / generator updates (1:1) with a fake-image replay
// buffer per discriminator. Identity labels of `target` are never read.
TranslationTrainResult train_translation(const synth::DatasetManifest& source,
                                         const synth::DatasetManifest& target,
                                         const TranslationConfig& config);

// Cycle and masked terms of the current model on the given images.
struct ProbeLosses {
  double cycle = 0.0;
  double mask = 0.0;
};
ProbeLosses probe_losses(const TranslationModel& model, std::span<const Image> source,
                         std::span<const Image> target);

// G(s) for every sample; identity ids and paths carried over, domain_id set to
// kTranslatedDomainOffset + source domain.
synth::DatasetManifest translate(const TranslationModel& model,
                                 const synth::DatasetManifest& source);

void save_checkpoint(const TranslationModel& model, const std::filesystem::path& path);
TranslationModel load_checkpoint(const std::filesystem::path& path);

}  // namespace illumreid::translation
