#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "illumreid/synth_data.hpp"
#include "illumreid/training.hpp"

namespace illumreid::illum {

struct IllumArch {
  int height = 64;
  int width = 32;
  int num_classes = 0;
  std::array<int, 3> channels{16, 32, 32};
};

inline constexpr int kIlluminationClassifierVersion = 1;

// N-way classifier predicting which catalog illumination rendered an image.
struct IlluminationClassifier {
  IllumArch arch;
  nn::Sequential trunk;  // conv stack + global pooling
  nn::Sequential head;   // linear scores over the N classes
  std::vector<int> domain_ids;  // class index -> domain_id
  int version = kIlluminationClassifierVersion;

  int num_classes() const { return arch.num_classes; }
  // Per-image class scores (N per image).
  std::vector<std::vector<float>> scores(std::span<const Image> images) const;
  // argmax of the scores, smallest class index on ties.
  std::vector<int> predict(std::span<const Image> images) const;
};

struct IllumTrainResult {
  IlluminationClassifier classifier;
  TrainLog log;
  double heldout_accuracy = 0.0;
  std::vector<std::string> warnings;
};

// One class per manifest (each manifest must carry a single, distinct
// domain_id). A seeded `holdout_fraction` of every domain is kept out of
// training for the accuracy report.
IllumTrainResult train_illum_classifier(std::span<const synth::DatasetManifest> synthetic,
                                        const TrainConfig& config, double holdout_fraction = 0.2,
                                        IllumArch arch = {});

struct DomainSelection {
  int k_star = 0;
  std::vector<int> vote_counts;
  int n_images = 0;
  int domain_id = -1;  // catalog domain_id of k_star, when known
};

// Counting argmax: vote_counts[k] = #{i : predictions[i] == k}, ties go to
// the smallest class index.
DomainSelection select_domain(std::span<const int> predictions, int num_classes);

DomainSelection infer_domain(const IlluminationClassifier& classifier,
                             std::span<const Image> target_images);

void save_checkpoint(const IlluminationClassifier& classifier, const std::filesystem::path& path);
IlluminationClassifier load_checkpoint(const std::filesystem::path& path);

}  // namespace illumreid::illum
