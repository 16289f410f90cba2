#include "illumreid/illum_inference.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <random>

#include "illumreid/errors.hpp"

namespace illumreid::illum {

namespace {

nn::Sequential build_trunk(const IllumArch& a) {
  nn::Sequential s;
  s.add<nn::Conv2d>(3, a.channels[0], 3, 2, 1);
  s.add<nn::LeakyReLU>(0.0f);
  s.add<nn::Conv2d>(a.channels[0], a.channels[1], 3, 2, 1);
  s.add<nn::LeakyReLU>(0.0f);
  s.add<nn::Conv2d>(a.channels[1], a.channels[2], 3, 2, 1);
  s.add<nn::LeakyReLU>(0.0f);
  s.add<nn::GlobalAvgPool>();
  return s;
}

nn::Sequential build_head(const IllumArch& a) {
  nn::Sequential s;
  s.add<nn::Linear>(a.channels[2], a.num_classes);
  return s;
}

IlluminationClassifier make_classifier(const IllumArch& arch, std::uint64_t seed) {
  IlluminationClassifier c;
  c.arch = arch;
  c.trunk = build_trunk(arch);
  c.head = build_head(arch);
  std::mt19937_64 rng(derive_seed(seed, 0x111C));
  c.trunk.init(rng);
  c.head.init(rng);
  return c;
}

// Pairs of classes whose held-out samples are mostly confused with each
// other: the pairwise accuracy restricted to the two classes is near chance.
std::vector<std::string> degenerate_pairs(const std::vector<int>& truth, const std::vector<int>& pred,
                                          const std::vector<int>& domain_ids) {
  const int n = static_cast<int>(domain_ids.size());
  std::vector<std::vector<int>> confusion(n, std::vector<int>(n, 0));
  for (std::size_t i = 0; i < truth.size(); ++i) ++confusion[truth[i]][pred[i]];
  std::vector<std::string> out;
  for (int a = 0; a < n; ++a) {
    for (int b = a + 1; b < n; ++b) {
      const int right = confusion[a][a] + confusion[b][b];
      const int wrong = confusion[a][b] + confusion[b][a];
      if (right + wrong >= 4 && right < 3 * wrong) {
        out.push_back("degenerate domains: " + std::to_string(domain_ids[a]) + " and " +
                      std::to_string(domain_ids[b]) + " are indistinguishable (" +
                      std::to_string(wrong) + " of " + std::to_string(right + wrong) +
                      " held-out images confused)");
      }
    }
  }
  return out;
}

}  // namespace

std::vector<std::vector<float>> IlluminationClassifier::scores(std::span<const Image> images) const {
  std::vector<std::vector<float>> out;
  constexpr std::size_t kBatch = 64;
  for (std::size_t begin = 0; begin < images.size(); begin += kBatch) {
    const std::size_t count = std::min(kBatch, images.size() - begin);
    for (std::size_t i = begin; i < begin + count; ++i) {
      if (images[i].height != arch.height || images[i].width != arch.width) {
        throw ValidationError("illumination classifier expects " + std::to_string(arch.height) + "x" +
                              std::to_string(arch.width) + " images");
      }
    }
    const nn::Tensor logits = head.infer(trunk.infer(to_batch(images.subspan(begin, count))));
    for (int i = 0; i < logits.n(); ++i) {
      auto row = logits.sample(i);
      out.emplace_back(row.begin(), row.end());
    }
  }
  return out;
}

std::vector<int> IlluminationClassifier::predict(std::span<const Image> images) const {
  std::vector<int> out;
  for (const auto& s : scores(images)) out.push_back(nn::argmax(s));
  return out;
}

IllumTrainResult train_illum_classifier(std::span<const synth::DatasetManifest> synthetic,
                                        const TrainConfig& config, double holdout_fraction,
                                        IllumArch arch) {
  validate(config);
  if (synthetic.size() < 2) {
    throw ValidationError("illumination classifier needs at least 2 domains, got " +
                          std::to_string(synthetic.size()));
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw ValidationError("holdout_fraction must be in [0, 1)");
  }
  std::vector<int> domain_ids;
  for (const auto& m : synthetic) {
    const auto ids = m.domain_ids();
    if (ids.size() != 1) {
      throw ValidationError("manifest '" + m.name + "' must hold exactly one domain");
    }
    if (std::find(domain_ids.begin(), domain_ids.end(), *ids.begin()) != domain_ids.end()) {
      throw ValidationError("duplicate domain_id " + std::to_string(*ids.begin()));
    }
    domain_ids.push_back(*ids.begin());
  }
  arch.num_classes = static_cast<int>(synthetic.size());
  arch.height = synthetic.front().height;
  arch.width = synthetic.front().width;

  std::vector<const Image*> train_images;
  std::vector<int> train_labels;
  std::vector<Image> held_images;
  std::vector<int> held_labels;
  std::mt19937_64 split_rng(derive_seed(config.seed, 0x4E1D));
  for (int k = 0; k < arch.num_classes; ++k) {
    const auto& m = synthetic[k];
    if (m.height != arch.height || m.width != arch.width) {
      throw ValidationError("manifest '" + m.name + "' has a different image size");
    }
    std::vector<std::size_t> idx(m.samples.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), split_rng);
    const auto n_held = static_cast<std::size_t>(std::floor(holdout_fraction * idx.size()));
    for (std::size_t j = 0; j < idx.size(); ++j) {
      const auto& s = m.samples[idx[j]];
      if (j < n_held) {
        held_images.push_back(s.image);
        held_labels.push_back(k);
      } else {
        train_images.push_back(&s.image);
        train_labels.push_back(k);
      }
    }
  }

  IllumTrainResult res;
  res.classifier = make_classifier(arch, config.seed);
  res.classifier.domain_ids = domain_ids;
  res.log = train_classifier(res.classifier.trunk, res.classifier.head, train_images, train_labels,
                             config, "train_illum_classifier");
  if (!held_images.empty()) {
    const auto pred = res.classifier.predict(held_images);
    int correct = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == held_labels[i];
    res.heldout_accuracy = static_cast<double>(correct) / static_cast<double>(pred.size());
    res.warnings = degenerate_pairs(held_labels, pred, domain_ids);
    for (const auto& w : res.warnings) std::cerr << "warning: " << w << "\n";
  } else {
    res.heldout_accuracy = res.log.final_accuracy;
  }
  return res;
}

DomainSelection select_domain(std::span<const int> predictions, int num_classes) {
  if (predictions.empty()) throw ValidationError("illumination inference needs at least one image");
  if (num_classes < 1) throw ValidationError("num_classes must be >= 1");
  DomainSelection sel;
  sel.vote_counts.assign(num_classes, 0);
  for (int p : predictions) {
    if (p < 0 || p >= num_classes) {
      throw ValidationError("prediction " + std::to_string(p) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
    ++sel.vote_counts[p];
  }
  sel.n_images = static_cast<int>(predictions.size());
  sel.k_star = 0;
  for (int k = 1; k < num_classes; ++k) {
    if (sel.vote_counts[k] > sel.vote_counts[sel.k_star]) sel.k_star = k;
  }
  return sel;
}

DomainSelection infer_domain(const IlluminationClassifier& classifier,
                             std::span<const Image> target_images) {
  if (target_images.empty()) throw ValidationError("illumination inference needs at least one image");
  const auto pred = classifier.predict(target_images);
  DomainSelection sel = select_domain(pred, classifier.num_classes());
  if (sel.k_star < static_cast<int>(classifier.domain_ids.size())) {
    sel.domain_id = classifier.domain_ids[sel.k_star];
  }
  return sel;
}

void save_checkpoint(const IlluminationClassifier& c, const std::filesystem::path& path) {
  Checkpoint ckpt;
  ckpt.kind = "illumination_classifier";
  ckpt.header["version"] = c.version;
  ckpt.header["arch"] = {{"height", c.arch.height},
                         {"width", c.arch.width},
                         {"num_classes", c.arch.num_classes},
                         {"channels", c.arch.channels}};
  ckpt.header["domain_ids"] = c.domain_ids;
  auto& mut = const_cast<IlluminationClassifier&>(c);
  auto params = mut.trunk.params();
  for (auto* p : mut.head.params()) params.push_back(p);
  ckpt.tensors = nn::snapshot(params);
  write_checkpoint(path, ckpt);
}

IlluminationClassifier load_checkpoint(const std::filesystem::path& path) {
  const Checkpoint ckpt = read_checkpoint(path, "illumination_classifier");
  try {
    const int version = ckpt.header.at("version").get<int>();
    if (version != kIlluminationClassifierVersion) {
      throw ValidationError("unsupported illumination classifier version " + std::to_string(version));
    }
    IllumArch arch;
    const auto& ja = ckpt.header.at("arch");
    arch.height = ja.at("height").get<int>();
    arch.width = ja.at("width").get<int>();
    arch.num_classes = ja.at("num_classes").get<int>();
    arch.channels = ja.at("channels").get<std::array<int, 3>>();
    IlluminationClassifier c = make_classifier(arch, 0);
    c.domain_ids = ckpt.header.at("domain_ids").get<std::vector<int>>();
    auto params = c.trunk.params();
    for (auto* p : c.head.params()) params.push_back(p);
    nn::restore(params, ckpt.tensors);
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("corrupt illumination classifier checkpoint " + path.string() + ": " +
                          e.what());
  }
}

}  // namespace illumreid::illum
