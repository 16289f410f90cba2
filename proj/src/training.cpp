#include "illumreid/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <random>

#include "illumreid/errors.hpp"

namespace illumreid {

namespace {

constexpr char kMagic[8] = {'I', 'L', 'R', 'E', 'I', 'D', 'C', 'K'};

template <typename T>
void put(std::ofstream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::ifstream& is, const std::filesystem::path& path) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw ValidationError("truncated checkpoint " + path.string());
  return v;
}

}  // namespace

void validate(const TrainConfig& c, bool allow_zero_epochs) {
  if (!(c.learning_rate > 0.0) || !std::isfinite(c.learning_rate)) {
    throw ValidationError("learning_rate must be > 0");
  }
  if (c.epochs < (allow_zero_epochs ? 0 : 1)) {
    throw ValidationError("epochs must be >= " + std::string(allow_zero_epochs ? "0" : "1"));
  }
  if (c.batch_size < 1) throw ValidationError("batch_size must be >= 1");
  if (!(c.weight_decay >= 0.0)) throw ValidationError("weight_decay must be >= 0");
  if (!(c.momentum >= 0.0 && c.momentum < 1.0)) throw ValidationError("momentum must be in [0, 1)");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate}, {"epochs", c.epochs},
          {"batch_size", c.batch_size},       {"seed", c.seed},
          {"weight_decay", c.weight_decay},   {"momentum", c.momentum}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& defaults) {
  TrainConfig c = defaults;
  if (j.contains("learning_rate")) c.learning_rate = j.at("learning_rate").get<double>();
  if (j.contains("epochs")) c.epochs = j.at("epochs").get<int>();
  if (j.contains("batch_size")) c.batch_size = j.at("batch_size").get<int>();
  if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("weight_decay")) c.weight_decay = j.at("weight_decay").get<double>();
  if (j.contains("momentum")) c.momentum = j.at("momentum").get<double>();
  return c;
}

TrainLog train_classifier(nn::Sequential& trunk, nn::Sequential& head,
                          std::span<const Image* const> images, std::span<const int> labels,
                          const TrainConfig& config, const std::string& what) {
  if (images.size() != labels.size()) throw ValidationError(what + ": image/label count mismatch");
  TrainLog log;
  if (config.epochs == 0 || images.empty()) return log;

  std::vector<nn::Param*> params = trunk.params();
  for (auto* p : head.params()) params.push_back(p);
  nn::Sgd opt(params, config.learning_rate, config.momentum, config.weight_decay);

  std::mt19937_64 rng(derive_seed(config.seed, 0xBA7C));
  std::vector<std::size_t> order(images.size());
  std::iota(order.begin(), order.end(), 0);
  const int decay_epoch = (2 * config.epochs) / 3;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    opt.set_learning_rate(epoch >= decay_epoch && config.epochs >= 3 ? config.learning_rate * 0.1
                                                                     : config.learning_rate);
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    int correct = 0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      std::vector<const Image*> batch_images;
      std::vector<int> batch_labels;
      for (std::size_t k = begin; k < end; ++k) {
        batch_images.push_back(images[order[k]]);
        batch_labels.push_back(labels[order[k]]);
      }
      const nn::Tensor x = to_batch(std::span<const Image* const>(batch_images));
      nn::Cache trunk_cache;
      nn::Cache head_cache;
      const nn::Tensor feat = trunk.forward(x, trunk_cache);
      const nn::Tensor logits = head.forward(feat, head_cache);
      auto ce = nn::softmax_cross_entropy(logits, batch_labels);
      if (!std::isfinite(ce.loss)) throw TrainingDiverged(what + ": non-finite loss", epoch);
      opt.zero_grad();
      trunk.backward(head.backward(ce.grad, head_cache), trunk_cache);
      opt.step();
      loss_sum += ce.loss * static_cast<double>(end - begin);
      correct += ce.correct;
    }
    log.epoch_loss.push_back(loss_sum / static_cast<double>(order.size()));
    log.epoch_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(order.size()));
  }
  log.final_accuracy = classification_accuracy(trunk, head, images, labels);
  return log;
}

double classification_accuracy(const nn::Sequential& trunk, const nn::Sequential& head,
                               std::span<const Image* const> images, std::span<const int> labels) {
  if (images.empty()) return 0.0;
  constexpr std::size_t kBatch = 64;
  int correct = 0;
  for (std::size_t begin = 0; begin < images.size(); begin += kBatch) {
    const std::size_t count = std::min(kBatch, images.size() - begin);
    const nn::Tensor x = to_batch(images.subspan(begin, count));
    const nn::Tensor logits = head.infer(trunk.infer(x));
    for (std::size_t i = 0; i < count; ++i) {
      if (nn::argmax(logits.sample(static_cast<int>(i))) == labels[begin + i]) ++correct;
    }
  }
  return static_cast<double>(correct) / static_cast<double>(images.size());
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  nlohmann::json header = ckpt.header;
  header["kind"] = ckpt.kind;
  const std::string text = header.dump();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw ValidationError("cannot write checkpoint " + path.string());
    os.write(kMagic, sizeof(kMagic));
    put(os, kCheckpointFormatVersion);
    put(os, static_cast<std::uint64_t>(text.size()));
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    put(os, static_cast<std::uint32_t>(ckpt.tensors.size()));
    for (const auto& t : ckpt.tensors) {
      for (int d : {t.n(), t.c(), t.h(), t.w()}) put(os, static_cast<std::int32_t>(d));
      os.write(reinterpret_cast<const char*>(t.data()),
               static_cast<std::streamsize>(t.size() * sizeof(float)));
    }
    if (!os) throw ValidationError("failed writing checkpoint " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::filesystem::path& path, const std::string& expected_kind) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ValidationError("cannot open checkpoint " + path.string());
  char magic[sizeof(kMagic)];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw ValidationError(path.string() + " is not an illumreid checkpoint");
  }
  const auto version = get<std::uint32_t>(is, path);
  if (version != kCheckpointFormatVersion) {
    throw ValidationError("unsupported checkpoint format version " + std::to_string(version));
  }
  const auto header_len = get<std::uint64_t>(is, path);
  std::string text(header_len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(header_len));
  if (!is) throw ValidationError("truncated checkpoint " + path.string());
  Checkpoint ckpt;
  try {
    ckpt.header = nlohmann::json::parse(text);
    ckpt.kind = ckpt.header.at("kind").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }
  if (ckpt.kind != expected_kind) {
    throw ValidationError(path.string() + " holds a '" + ckpt.kind + "' checkpoint, expected '" +
                          expected_kind + "'");
  }
  const auto count = get<std::uint32_t>(is, path);
  for (std::uint32_t i = 0; i < count; ++i) {
    nn::Shape s;
    s.n = get<std::int32_t>(is, path);
    s.c = get<std::int32_t>(is, path);
    s.h = get<std::int32_t>(is, path);
    s.w = get<std::int32_t>(is, path);
    nn::Tensor t(s);
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.size() * sizeof(float)));
    if (!is) throw ValidationError("truncated checkpoint " + path.string());
    ckpt.tensors.push_back(std::move(t));
  }
  return ckpt;
}

}  // namespace illumreid
