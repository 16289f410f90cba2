#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "illumreid/image.hpp"
#include "illumreid/nn.hpp"

namespace illumreid {

struct TrainConfig {
  double learning_rate = 0.01;
  int epochs = 20;
  int batch_size = 32;
  std::uint64_t seed = 0;
  double weight_decay = 5e-4;
  double momentum = 0.9;
};

void validate(const TrainConfig& config, bool allow_zero_epochs = false);

nlohmann::json to_json(const TrainConfig& config);
// Missing keys keep the values already in `defaults`.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& defaults = {});

struct TrainLog {
  std::vector<double> epoch_loss;
  std::vector<double> epoch_accuracy;
  double final_accuracy = 0.0;
};

// Supervised classification over (trunk -> head) with SGD + momentum and a
// x0.1 learning-rate step at two thirds of the epochs. The batch order is a
// pure function of config.seed and the order of `images`.
TrainLog train_classifier(nn::Sequential& trunk, nn::Sequential& head,
                          std::span<const Image* const> images, std::span<const int> labels,
                          const TrainConfig& config, const std::string& what);

// Accuracy of argmax(head(trunk(x))) against labels, evaluated in batches.
double classification_accuracy(const nn::Sequential& trunk, const nn::Sequential& head,
                               std::span<const Image* const> images, std::span<const int> labels);

// Versioned binary container: magic, format version, JSON header, tensors.
struct Checkpoint {
  std::string kind;
  nlohmann::json header;
  std::vector<nn::Tensor> tensors;
};

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path, const std::string& expected_kind);

}  // namespace illumreid
