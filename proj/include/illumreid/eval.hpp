#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "illumreid/losses.hpp"
#include "illumreid/reid_model.hpp"
#include "illumreid/synth_data.hpp"

namespace illumreid::eval {

enum class Metric { cosine, euclidean };
const char* to_string(Metric m);
Metric metric_from_string(const std::string& s);

// Single-shot pairing: for every shared identity, one sample index from each camera.
struct ImageSplit {
  std::vector<int> identity_ids;         // sorted
  std::vector<std::size_t> probe_index;  // into the probe camera manifest
  std::vector<std::size_t> gallery_index;
  std::uint64_t seed = 0;
};

struct Entry {
  std::vector<float> feature;
  int identity_id = 0;
};

struct ProbeGallerySplit {
  std::vector<Entry> probe;
  std::vector<Entry> gallery;
  std::uint64_t seed = 0;
};

struct CMCCurve {
  std::vector<double> accuracies;  // accuracies[r]: true match within the top r+1
  int n_probes = 0;

  double rank1() const { return accuracies.empty() ? 0.0 : accuracies.front(); }
};

nlohmann::json to_json(const CMCCurve& curve);

// Both manifests must hold exactly the same identity set.
ImageSplit make_split(const synth::DatasetManifest& probe_camera,
                      const synth::DatasetManifest& gallery_camera, std::uint64_t seed);

ProbeGallerySplit embed_split(const ImageSplit& split, const synth::DatasetManifest& probe_camera,
                              const synth::DatasetManifest& gallery_camera,
                              const reid::FeatureExtractor& model);

double similarity(std::span<const float> a, std::span<const float> b, Metric metric);

// Gallery ranked by decreasing similarity; equal similarities rank the lower
// gallery index first.
CMCCurve cmc(const ProbeGallerySplit& split, Metric metric = Metric::cosine);

// make_split + embed_split + cmc.
CMCCurve evaluate(const reid::FeatureExtractor& model, const synth::DatasetManifest& probe_camera,
                  const synth::DatasetManifest& gallery_camera, std::uint64_t seed,
                  Metric metric = Metric::cosine);

inline constexpr int kHistogramBins = 64;

struct ImageStats {
  std::array<std::vector<double>, 3> intensity_histogram;  // per channel, over [0, 1]
  std::vector<double> gradient_magnitude_histogram;        // over [0, sqrt(2)]
};

nlohmann::json to_json(const ImageStats& stats);

// Histograms over all pixels of all images. Gradients are forward differences
// of the channel-mean grey level.
ImageStats image_stats(std::span<const Image> images);
ImageStats image_stats(const synth::DatasetManifest& manifest);

// sum over every histogram bin of (a - b)^2 / (a + b), empty bins skipped.
double stats_distance(const ImageStats& a, const ImageStats& b);

// Per-channel |mean over the matte region of `after` - same for `before`|, in
// [0,1] pixel units. Region: matte > threshold. The two lists are paired.
std::array<double, 3> foreground_color_shift(std::span<const Image> before,
                                             std::span<const Image> after,
                                             const translation::SoftMatte& matte,
                                             double threshold = 0.5);

}  // namespace illumreid::eval
