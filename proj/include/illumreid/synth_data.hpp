#pragma once

// Procedural stand-in for a synthetic re-identification corpus: P sprite
// "characters", each rendered under a catalog of parametric illuminations,
// plus "real" target cameras that add a sensor/background/optics gap.

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "illumreid/image.hpp"

namespace illumreid::synth {

struct IdentitySpec {
  int identity_id = 0;
  // head, torso, legs
  std::array<Rgb, 3> body_colors{};
  // torso width (of W), torso height (of H), head radius (of W), leg width (of W)
  std::array<double, 4> body_geometry{0.45, 0.34, 0.15, 0.15};
};

struct IlluminationSpec {
  int illum_id = 0;
  Rgb channel_gain{1.0, 1.0, 1.0};
  Rgb channel_bias{0.0, 0.0, 0.0};
  double gamma = 1.0;
  Rgb background_color{0.5, 0.5, 0.5};
};

enum class Origin { synthetic, real };

const char* to_string(Origin o);
Origin origin_from_string(const std::string& s);

struct Sample {
  Image image;
  int identity_id = 0;
  int domain_id = 0;
  Origin origin = Origin::synthetic;
  std::string path;  // relative to the manifest directory
};

struct DatasetManifest {
  std::string name;
  int height = 0;
  int width = 0;
  std::vector<Sample> samples;

  std::set<int> domain_ids() const;
  std::set<int> identity_ids() const;
  std::size_t size() const { return samples.size(); }
};

struct RenderSize {
  int height = 64;
  int width = 32;
};

// Differences between a synthetic render and the target "real" camera.
struct RealnessGap {
  double noise_sigma = 0.02;
  bool texture = true;
  bool blur = true;
};

void validate(const IdentitySpec& spec);
void validate(const IlluminationSpec& spec);
void validate(const DatasetManifest& manifest);

// clamp(gain * v + bias, 0, 1) ^ gamma per channel.
Image apply_illumination(const Image& base, const IlluminationSpec& illum);

Image render_person(const IdentitySpec& identity, const IlluminationSpec& illum, double pose_angle,
                    std::uint64_t rng_seed, RenderSize size = {});

// Foreground sprite mask for the same arguments as render_person (1 = person).
std::vector<std::uint8_t> person_mask(const IdentitySpec& identity, double pose_angle,
                                      std::uint64_t rng_seed, RenderSize size = {});

DatasetManifest generate_domain(std::span<const IdentitySpec> identities,
                                const IlluminationSpec& illum, int samples_per_identity,
                                std::uint64_t rng_seed, RenderSize size = {});

// `training_catalog` lists the illuminations used for training data; the
// target illumination must be held out from it.
DatasetManifest generate_target_domain(std::span<const IdentitySpec> identities,
                                       const IlluminationSpec& illum, int samples_per_identity,
                                       const RealnessGap& gap, std::uint64_t rng_seed,
                                       std::span<const IlluminationSpec> training_catalog = {},
                                       RenderSize size = {});

// Identities with ids first_id.. and pairwise body-colour distance >= min_color_distance.
std::vector<IdentitySpec> sample_identities(int count, std::uint64_t seed, int first_id = 0,
                                            double min_color_distance = 0.15);
std::vector<IlluminationSpec> sample_illuminations(int count, std::uint64_t seed,
                                                   int first_id = 0);

// L2 distance between the numeric parameters of two illuminations.
double illumination_distance(const IlluminationSpec& a, const IlluminationSpec& b);
// Index of the closest catalog entry (smallest index on ties).
int closest_illumination(const IlluminationSpec& query, std::span<const IlluminationSpec> catalog);

// Writes dir/manifest.json plus one PPM per sample.
void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir);
DatasetManifest read_manifest(const std::filesystem::path& dir);
// Accepts either a manifest directory or a directory of manifest directories.
std::vector<DatasetManifest> read_manifests(const std::filesystem::path& dir);

nlohmann::json to_json(const IdentitySpec& spec);
nlohmann::json to_json(const IlluminationSpec& spec);
IdentitySpec identity_from_json(const nlohmann::json& j);
IlluminationSpec illumination_from_json(const nlohmann::json& j);

// Structural equality: name, size, and per-sample labels and paths.
bool structurally_equal(const DatasetManifest& a, const DatasetManifest& b);

}  // namespace illumreid::synth
