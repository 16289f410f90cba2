#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <span>
#include <vector>

#include "illumreid/synth_data.hpp"
#include "illumreid/training.hpp"

namespace illumreid::reid {

struct ReidArch {
  int height = 64;
  int width = 32;
  int embedding_dim = 64;
  int num_classes = 0;
  std::array<int, 4> channels{16, 32, 64, 64};
};

inline constexpr int kFeatureExtractorVersion = 1;

// Identity classifier whose penultimate (embedding) layer is the re-id
// feature. trunk = conv stack + global pooling + embedding layer; head = linear
// classifier over the contiguous class space.
class FeatureExtractor {
 public:
  FeatureExtractor() = default;
  // Fresh, randomly initialised model.
  FeatureExtractor(const ReidArch& arch, std::uint64_t seed);

  const ReidArch& arch() const { return arch_; }
  int embedding_dim() const { return arch_.embedding_dim; }
  int num_classes() const { return arch_.num_classes; }
  int version() const { return version_; }

  // identity_id -> class index
  const std::map<int, int>& label_map() const { return label_map_; }
  void set_label_map(std::map<int, int> map);

  const nn::Sequential& trunk() const { return trunk_; }
  const nn::Sequential& head() const { return head_; }
  nn::Sequential& trunk() { return trunk_; }
  nn::Sequential& head() { return head_; }

  // Replaces the classifier head with a freshly initialised one over `num_classes`.
  void reset_head(int num_classes, std::uint64_t seed);

  std::vector<nn::Param*> params();

 private:
  ReidArch arch_;
  int version_ = kFeatureExtractorVersion;
  nn::Sequential trunk_;
  nn::Sequential head_;
  std::map<int, int> label_map_;
};

struct ReidTrainResult {
  FeatureExtractor model;
  TrainLog log;
};

// Merges all manifests into one classification problem over the union of
// identity ids (ids are unique across a dataset collection) and trains from
// scratch. `arch` supplies everything except num_classes.
ReidTrainResult train_joint(std::span<const synth::DatasetManifest> manifests,
                            const TrainConfig& config, ReidArch arch = {});

std::vector<std::vector<float>> extract_features(const FeatureExtractor& model,
                                                 std::span<const Image> images);

// Warm-starts trunk and embedding from `model`, re-initialises the head for
// the translated label space. `model` is left untouched.
ReidTrainResult finetune(const FeatureExtractor& model, const synth::DatasetManifest& translated,
                         const TrainConfig& config);

void save_checkpoint(const FeatureExtractor& model, const std::filesystem::path& path);
FeatureExtractor load_checkpoint(const std::filesystem::path& path);

}  // namespace illumreid::reid
