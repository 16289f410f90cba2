#include "illumreid/eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>

#include "illumreid/errors.hpp"

namespace illumreid::eval {

namespace {

std::map<int, std::vector<std::size_t>> by_identity(const synth::DatasetManifest& m) {
  std::map<int, std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < m.samples.size(); ++i) out[m.samples[i].identity_id].push_back(i);
  return out;
}

std::string id_list(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size() && i < 20; ++i) s += (i ? ", " : "") + std::to_string(ids[i]);
  if (ids.size() > 20) s += ", ...";
  return s;
}

std::vector<double> normalized(const std::vector<double>& counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  std::vector<double> out(counts.size(), 0.0);
  if (total > 0.0)
    for (std::size_t i = 0; i < counts.size(); ++i) out[i] = counts[i] / total;
  return out;
}

int bin_of(double v, double hi) {
  const int b = static_cast<int>(std::floor(v / hi * kHistogramBins));
  return std::clamp(b, 0, kHistogramBins - 1);
}

double chi2(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double denom = a[i] + b[i];
    if (denom > 0.0) s += (a[i] - b[i]) * (a[i] - b[i]) / denom;
  }
  return s;
}

}  // namespace

const char* to_string(Metric m) { return m == Metric::cosine ? "cosine" : "euclidean"; }

Metric metric_from_string(const std::string& s) {
  if (s == "cosine") return Metric::cosine;
  if (s == "euclidean") return Metric::euclidean;
  throw ValidationError("unknown metric '" + s + "' (expected cosine or euclidean)");
}

nlohmann::json to_json(const CMCCurve& c) {
  return {{"rank1", c.rank1()}, {"n_probes", c.n_probes}, {"cmc", c.accuracies}};
}

ImageSplit make_split(const synth::DatasetManifest& probe_camera,
                      const synth::DatasetManifest& gallery_camera, std::uint64_t seed) {
  const auto probe_ids = by_identity(probe_camera);
  const auto gallery_ids = by_identity(gallery_camera);
  std::vector<int> only_probe;
  std::vector<int> only_gallery;
  for (const auto& [id, _] : probe_ids)
    if (!gallery_ids.contains(id)) only_probe.push_back(id);
  for (const auto& [id, _] : gallery_ids)
    if (!probe_ids.contains(id)) only_gallery.push_back(id);
  if (!only_probe.empty() || !only_gallery.empty()) {
    std::string msg = "probe and gallery cameras must share their identities;";
    if (!only_probe.empty()) msg += " only in '" + probe_camera.name + "': " + id_list(only_probe) + ";";
    if (!only_gallery.empty()) {
      msg += " only in '" + gallery_camera.name + "': " + id_list(only_gallery) + ";";
    }
    throw ValidationError(msg);
  }
  if (probe_ids.empty()) throw ValidationError("make_split: no identities");
  ImageSplit split;
  split.seed = seed;
  std::mt19937_64 rng(derive_seed(seed, 0x5B17));
  for (const auto& [id, probes] : probe_ids) {
    const auto& gallery = gallery_ids.at(id);
    split.identity_ids.push_back(id);
    split.probe_index.push_back(
        probes[std::uniform_int_distribution<std::size_t>(0, probes.size() - 1)(rng)]);
    split.gallery_index.push_back(
        gallery[std::uniform_int_distribution<std::size_t>(0, gallery.size() - 1)(rng)]);
  }
  return split;
}

ProbeGallerySplit embed_split(const ImageSplit& split, const synth::DatasetManifest& probe_camera,
                              const synth::DatasetManifest& gallery_camera,
                              const reid::FeatureExtractor& model) {
  std::vector<Image> probe_images;
  std::vector<Image> gallery_images;
  for (std::size_t i = 0; i < split.identity_ids.size(); ++i) {
    probe_images.push_back(probe_camera.samples.at(split.probe_index[i]).image);
    gallery_images.push_back(gallery_camera.samples.at(split.gallery_index[i]).image);
  }
  const auto pf = reid::extract_features(model, probe_images);
  const auto gf = reid::extract_features(model, gallery_images);
  ProbeGallerySplit out;
  out.seed = split.seed;
  for (std::size_t i = 0; i < split.identity_ids.size(); ++i) {
    out.probe.push_back({pf[i], split.identity_ids[i]});
    out.gallery.push_back({gf[i], split.identity_ids[i]});
  }
  return out;
}

double similarity(std::span<const float> a, std::span<const float> b, Metric metric) {
  if (a.size() != b.size()) {
    throw ValidationError("feature dimension mismatch: " + std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()));
  }
  if (metric == Metric::euclidean) {
    double d = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) d += (static_cast<double>(a[i]) - b[i]) * (a[i] - b[i]);
    return -std::sqrt(d);
  }
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += static_cast<double>(a[i]) * b[i];
    na += static_cast<double>(a[i]) * a[i];
    nb += static_cast<double>(b[i]) * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / std::sqrt(na * nb);
}

CMCCurve cmc(const ProbeGallerySplit& split, Metric metric) {
  if (split.probe.empty() || split.gallery.empty()) throw ValidationError("cmc: empty probe or gallery");
  const std::size_t dim = split.gallery.front().feature.size();
  std::map<int, std::size_t> where;
  for (std::size_t j = 0; j < split.gallery.size(); ++j) {
    if (split.gallery[j].feature.size() != dim) {
      throw ValidationError("cmc: gallery entry " + std::to_string(j) + " has dimension " +
                            std::to_string(split.gallery[j].feature.size()) + ", expected " +
                            std::to_string(dim));
    }
    if (!where.emplace(split.gallery[j].identity_id, j).second) {
      throw ValidationError("cmc: gallery identity " + std::to_string(split.gallery[j].identity_id) +
                            " appears more than once");
    }
  }
  const std::size_t g = split.gallery.size();
  std::vector<double> hits(g, 0.0);
  std::vector<double> sims(g);
  for (const auto& p : split.probe) {
    if (p.feature.size() != dim) {
      throw ValidationError("cmc: probe dimension " + std::to_string(p.feature.size()) +
                            ", expected " + std::to_string(dim));
    }
    for (std::size_t j = 0; j < g; ++j) sims[j] = similarity(p.feature, split.gallery[j].feature, metric);
    const auto it = where.find(p.identity_id);
    if (it == where.end()) continue;
    const std::size_t t = it->second;
    std::size_t rank = 0;  // number of entries ranked ahead of the true match
    for (std::size_t j = 0; j < g; ++j) {
      if (j == t) continue;
      if (sims[j] > sims[t] || (sims[j] == sims[t] && j < t)) ++rank;
    }
    hits[rank] += 1.0;
  }
  CMCCurve out;
  out.n_probes = static_cast<int>(split.probe.size());
  out.accuracies.resize(g);
  double cum = 0.0;
  for (std::size_t r = 0; r < g; ++r) {
    cum += hits[r];
    out.accuracies[r] = cum / static_cast<double>(split.probe.size());
  }
  return out;
}

CMCCurve evaluate(const reid::FeatureExtractor& model, const synth::DatasetManifest& probe_camera,
                  const synth::DatasetManifest& gallery_camera, std::uint64_t seed, Metric metric) {
  const auto split = make_split(probe_camera, gallery_camera, seed);
  return cmc(embed_split(split, probe_camera, gallery_camera, model), metric);
}

nlohmann::json to_json(const ImageStats& s) {
  return {{"intensity_histogram", s.intensity_histogram},
          {"gradient_magnitude_histogram", s.gradient_magnitude_histogram}};
}

ImageStats image_stats(std::span<const Image> images) {
  if (images.empty()) throw ValidationError("image_stats: no images");
  std::array<std::vector<double>, 3> intensity;
  for (auto& h : intensity) h.assign(kHistogramBins, 0.0);
  std::vector<double> gradient(kHistogramBins, 0.0);
  const double gmax = std::sqrt(2.0);
  for (const auto& img : images) {
    std::vector<double> grey(static_cast<std::size_t>(img.height) * img.width);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double sum = 0.0;
        for (int c = 0; c < 3; ++c) {
          const double v = img.at(y, x, c);
          intensity[c][bin_of(v, 1.0)] += 1.0;
          sum += v;
        }
        grey[static_cast<std::size_t>(y) * img.width + x] = sum / 3.0;
      }
    for (int y = 0; y + 1 < img.height; ++y)
      for (int x = 0; x + 1 < img.width; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * img.width + x;
        const double gx = grey[i + 1] - grey[i];
        const double gy = grey[i + img.width] - grey[i];
        gradient[bin_of(std::sqrt(gx * gx + gy * gy), gmax)] += 1.0;
      }
  }
  ImageStats out;
  for (int c = 0; c < 3; ++c) out.intensity_histogram[c] = normalized(intensity[c]);
  out.gradient_magnitude_histogram = normalized(gradient);
  return out;
}

ImageStats image_stats(const synth::DatasetManifest& manifest) {
  std::vector<Image> images;
  images.reserve(manifest.samples.size());
  for (const auto& s : manifest.samples) images.push_back(s.image);
  return image_stats(images);
}

double stats_distance(const ImageStats& a, const ImageStats& b) {
  double d = 0.0;
  for (int c = 0; c < 3; ++c) d += chi2(a.intensity_histogram[c], b.intensity_histogram[c]);
  return d + chi2(a.gradient_magnitude_histogram, b.gradient_magnitude_histogram);
}

std::array<double, 3> foreground_color_shift(std::span<const Image> before,
                                             std::span<const Image> after,
                                             const translation::SoftMatte& matte, double threshold) {
  if (before.size() != after.size() || before.empty()) {
    throw ValidationError("foreground_color_shift: needs equally many (>0) images before and after");
  }
  std::array<double, 3> sum_b{}, sum_a{};
  double count = 0.0;
  for (std::size_t i = 0; i < before.size(); ++i) {
    const auto& b = before[i];
    const auto& a = after[i];
    if (b.height != matte.height || b.width != matte.width || a.height != b.height ||
        a.width != b.width) {
      throw ValidationError("foreground_color_shift: image/matte size mismatch");
    }
    for (int y = 0; y < b.height; ++y)
      for (int x = 0; x < b.width; ++x) {
        if (matte.at(y, x) <= threshold) continue;
        for (int c = 0; c < 3; ++c) {
          sum_b[c] += b.at(y, x, c);
          sum_a[c] += a.at(y, x, c);
        }
        count += 1.0;
      }
  }
  if (count == 0.0) throw ValidationError("foreground_color_shift: empty matte region");
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) out[c] = std::abs(sum_a[c] - sum_b[c]) / count;
  return out;
}

}  // namespace illumreid::eval
