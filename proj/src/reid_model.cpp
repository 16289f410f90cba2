#include "illumreid/reid_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <tuple>

#include "illumreid/errors.hpp"

namespace illumreid::reid {

namespace {

nn::Sequential build_trunk(const ReidArch& a) {
  nn::Sequential s;
  const auto& ch = a.channels;
  s.add<nn::Conv2d>(3, ch[0], 3, 2, 1);
  s.add<nn::LeakyReLU>(0.0f);
  s.add<nn::Conv2d>(ch[0], ch[1], 3, 2, 1);
  s.add<nn::LeakyReLU>(0.0f);
  s.add<nn::Conv2d>(ch[1], ch[2], 3, 2, 1);
  s.add<nn::LeakyReLU>(0.0f);
  s.add<nn::Conv2d>(ch[2], ch[3], 3, 1, 1);
  s.add<nn::LeakyReLU>(0.0f);
  s.add<nn::GlobalAvgPool>();
  s.add<nn::Linear>(ch[3], a.embedding_dim, std::sqrt(1.0f / static_cast<float>(ch[3])));
  return s;
}

nn::Sequential build_head(int embedding_dim, int classes) {
  nn::Sequential s;
  s.add<nn::Linear>(embedding_dim, classes, std::sqrt(1.0f / static_cast<float>(embedding_dim)));
  return s;
}

void validate_arch(const ReidArch& a) {
  if (a.height < 16 || a.width < 16) throw ValidationError("reid input must be at least 16x16");
  if (a.embedding_dim < 1) throw ValidationError("embedding_dim must be >= 1");
  if (a.num_classes < 2) {
    throw ValidationError("re-identification training needs at least 2 identities, got " +
                          std::to_string(a.num_classes));
  }
  for (int c : a.channels) {
    if (c < 1) throw ValidationError("reid channel widths must be >= 1");
  }
}

// Canonical sample order, so that the batch stream depends only on the seed
// and the sample set, not on the order the caller listed the samples in.
std::vector<const synth::Sample*> canonical_samples(std::span<const synth::DatasetManifest> manifests,
                                                    int height, int width) {
  std::vector<const synth::Sample*> out;
  for (const auto& m : manifests) {
    if (m.height != height || m.width != width) {
      throw ValidationError("manifest '" + m.name + "' is " + std::to_string(m.height) + "x" +
                            std::to_string(m.width) + ", model expects " + std::to_string(height) +
                            "x" + std::to_string(width));
    }
    for (const auto& s : m.samples) out.push_back(&s);
  }
  std::stable_sort(out.begin(), out.end(), [](const synth::Sample* a, const synth::Sample* b) {
    return std::tie(a->domain_id, a->identity_id, a->path, a->image.pixels) <
           std::tie(b->domain_id, b->identity_id, b->path, b->image.pixels);
  });
  return out;
}

ReidTrainResult fit(FeatureExtractor model, std::span<const synth::DatasetManifest> manifests,
                    const TrainConfig& config, const std::string& what) {
  const auto samples = canonical_samples(manifests, model.arch().height, model.arch().width);
  std::vector<const Image*> images;
  std::vector<int> labels;
  for (const auto* s : samples) {
    images.push_back(&s->image);
    labels.push_back(model.label_map().at(s->identity_id));
  }
  ReidTrainResult res;
  res.log = train_classifier(model.trunk(), model.head(), images, labels, config, what);
  if (config.epochs == 0) {
    res.log.final_accuracy = classification_accuracy(model.trunk(), model.head(), images, labels);
  }
  res.model = std::move(model);
  return res;
}

std::map<int, int> contiguous_labels(std::span<const synth::DatasetManifest> manifests) {
  std::set<int> ids;
  for (const auto& m : manifests)
    for (int id : m.identity_ids()) ids.insert(id);
  std::map<int, int> map;
  int next = 0;
  for (int id : ids) map[id] = next++;
  return map;
}

}  // namespace

FeatureExtractor::FeatureExtractor(const ReidArch& arch, std::uint64_t seed) : arch_(arch) {
  validate_arch(arch_);
  trunk_ = build_trunk(arch_);
  head_ = build_head(arch_.embedding_dim, arch_.num_classes);
  std::mt19937_64 rng(derive_seed(seed, 0x7E1D));
  trunk_.init(rng);
  head_.init(rng);
}

void FeatureExtractor::set_label_map(std::map<int, int> map) {
  if (static_cast<int>(map.size()) != arch_.num_classes) {
    throw ValidationError("label map covers " + std::to_string(map.size()) + " identities, model has " +
                          std::to_string(arch_.num_classes) + " classes");
  }
  label_map_ = std::move(map);
}

void FeatureExtractor::reset_head(int num_classes, std::uint64_t seed) {
  if (num_classes < 2) {
    throw ValidationError("re-identification training needs at least 2 identities, got " +
                          std::to_string(num_classes));
  }
  arch_.num_classes = num_classes;
  head_ = build_head(arch_.embedding_dim, num_classes);
  std::mt19937_64 rng(derive_seed(seed, 0x4EAD));
  head_.init(rng);
  label_map_.clear();
}

std::vector<nn::Param*> FeatureExtractor::params() {
  auto p = trunk_.params();
  for (auto* q : head_.params()) p.push_back(q);
  return p;
}

ReidTrainResult train_joint(std::span<const synth::DatasetManifest> manifests,
                            const TrainConfig& config, ReidArch arch) {
  validate(config);
  if (manifests.empty()) throw ValidationError("train_joint: no datasets");
  auto labels = contiguous_labels(manifests);
  arch.num_classes = static_cast<int>(labels.size());
  arch.height = manifests.front().height;
  arch.width = manifests.front().width;
  FeatureExtractor model(arch, config.seed);
  model.set_label_map(std::move(labels));
  return fit(std::move(model), manifests, config, "train_joint");
}

std::vector<std::vector<float>> extract_features(const FeatureExtractor& model,
                                                 std::span<const Image> images) {
  std::vector<std::vector<float>> out;
  out.reserve(images.size());
  constexpr std::size_t kBatch = 64;
  for (std::size_t begin = 0; begin < images.size(); begin += kBatch) {
    const std::size_t count = std::min(kBatch, images.size() - begin);
    for (std::size_t i = begin; i < begin + count; ++i) {
      if (images[i].height != model.arch().height || images[i].width != model.arch().width) {
        throw ValidationError("extract_features: image " + std::to_string(i) + " is " +
                              std::to_string(images[i].height) + "x" +
                              std::to_string(images[i].width) + ", model expects " +
                              std::to_string(model.arch().height) + "x" +
                              std::to_string(model.arch().width));
      }
    }
    const nn::Tensor emb = model.trunk().infer(to_batch(images.subspan(begin, count)));
    for (int i = 0; i < emb.n(); ++i) {
      auto row = emb.sample(i);
      out.emplace_back(row.begin(), row.end());
    }
  }
  return out;
}

ReidTrainResult finetune(const FeatureExtractor& model, const synth::DatasetManifest& translated,
                         const TrainConfig& config) {
  validate(config, /*allow_zero_epochs=*/true);
  std::span<const synth::DatasetManifest> one(&translated, 1);
  auto labels = contiguous_labels(one);
  FeatureExtractor tuned = model;
  // Identities the classifier already knows keep their rows; only a new label space gets a fresh head.
  const bool known = std::all_of(labels.begin(), labels.end(),
                                 [&](const auto& e) { return model.label_map().contains(e.first); });
  if (!known) {
    tuned.reset_head(static_cast<int>(labels.size()), config.seed);
    tuned.set_label_map(std::move(labels));
  }
  return fit(std::move(tuned), one, config, "finetune");
}

void save_checkpoint(const FeatureExtractor& model, const std::filesystem::path& path) {
  Checkpoint ckpt;
  ckpt.kind = "feature_extractor";
  const auto& a = model.arch();
  ckpt.header["version"] = model.version();
  ckpt.header["arch"] = {{"height", a.height},
                         {"width", a.width},
                         {"embedding_dim", a.embedding_dim},
                         {"num_classes", a.num_classes},
                         {"channels", a.channels}};
  nlohmann::json table = nlohmann::json::array();
  for (const auto& [id, cls] : model.label_map()) table.push_back({id, cls});
  ckpt.header["label_map"] = table;
  auto params = const_cast<FeatureExtractor&>(model).params();
  ckpt.tensors = nn::snapshot(params);
  write_checkpoint(path, ckpt);
}

FeatureExtractor load_checkpoint(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path, "feature_extractor");
  try {
    const int version = ckpt.header.at("version").get<int>();
    if (version != kFeatureExtractorVersion) {
      throw ValidationError("unsupported feature extractor version " + std::to_string(version));
    }
    const auto& ja = ckpt.header.at("arch");
    ReidArch arch;
    arch.height = ja.at("height").get<int>();
    arch.width = ja.at("width").get<int>();
    arch.embedding_dim = ja.at("embedding_dim").get<int>();
    arch.num_classes = ja.at("num_classes").get<int>();
    arch.channels = ja.at("channels").get<std::array<int, 4>>();
    FeatureExtractor model(arch, 0);
    std::map<int, int> labels;
    for (const auto& e : ckpt.header.at("label_map")) labels[e.at(0).get<int>()] = e.at(1).get<int>();
    model.set_label_map(std::move(labels));
    auto params = model.params();
    nn::restore(params, ckpt.tensors);
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("corrupt feature extractor checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace illumreid::reid
