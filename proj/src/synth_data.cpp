#include "illumreid/synth_data.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "illumreid/errors.hpp"

namespace illumreid::synth {

namespace {

using json = nlohmann::json;

constexpr std::array<const char*, 3> kPartNames{"head", "torso", "legs"};
constexpr std::array<const char*, 4> kGeometryNames{"torso_width", "torso_height", "head_radius",
                                                     "leg_width"};

void check_range(double v, double lo, double hi, const std::string& field) {
  if (!(v >= lo && v <= hi)) {
    throw ValidationError(field + " = " + std::to_string(v) + " outside [" + std::to_string(lo) +
                          ", " + std::to_string(hi) + "]");
  }
}

void check_size(RenderSize size) {
  if (size.height < 16 || size.width < 16) {
    throw ValidationError("render size must be at least 16x16, got " + std::to_string(size.height) +
                          "x" + std::to_string(size.width));
  }
}

struct Layout {
  Image base;
  std::vector<std::uint8_t> mask;
};

enum Part : int { kNone = -1, kHead = 0, kTorso = 1, kLegs = 2 };

// Sprite composition in canonical (un-posed) coordinates; returns the body part.
Part classify(const IdentitySpec& id, double xs, double ys, int h, int w) {
  const double torso_w = id.body_geometry[0] * w;
  const double torso_h = id.body_geometry[1] * h;
  const double head_r = id.body_geometry[2] * w;
  const double leg_w = id.body_geometry[3] * w;

  const double top = 0.08 * h;
  const double head_cy = top + head_r;
  const double torso_top = top + 2.0 * head_r + 1.0;
  const double torso_bottom = torso_top + torso_h;
  const double legs_bottom = 0.92 * h;

  if (xs * xs + (ys - head_cy) * (ys - head_cy) <= head_r * head_r) return kHead;
  if (ys >= torso_top && ys < torso_bottom) {
    if (std::abs(xs) <= 0.5 * torso_w) return kTorso;
    // one-sided arm: the asymmetry makes mirrored viewpoints distinguishable
    const double arm_w = std::max(1.5, 0.08 * w);
    if (xs > 0.5 * torso_w && xs <= 0.5 * torso_w + arm_w && ys < torso_top + 0.8 * torso_h) {
      return kHead;
    }
  }
  if (ys >= torso_bottom && ys < legs_bottom) {
    const double offset = 0.25 * torso_w;
    if (std::abs(xs - offset) <= 0.5 * leg_w || std::abs(xs + offset) <= 0.5 * leg_w) return kLegs;
  }
  return kNone;
}

Layout compose(const IdentitySpec& identity, const Rgb& background, double pose_angle,
               std::uint64_t rng_seed, RenderSize size) {
  check_size(size);
  validate(identity);
  if (!(pose_angle >= 0.0 && pose_angle < 2.0 * std::numbers::pi)) {
    throw ValidationError("pose_angle = " + std::to_string(pose_angle) + " outside [0, 2pi)");
  }
  const int h = size.height;
  const int w = size.width;

  std::mt19937_64 rng(derive_seed(rng_seed, 0x5EED));
  std::uniform_int_distribution<int> jitter(-1, 1);
  const int jx = jitter(rng);
  const int jy = jitter(rng);

  const double width_scale = 0.7 + 0.3 * std::abs(std::cos(pose_angle));
  const bool mirrored = std::cos(pose_angle) < 0.0;
  const double shear = 0.12 * std::sin(pose_angle);
  const double cx = 0.5 * (w - 1) + jx;
  const double cy = 0.5 * (h - 1);

  Layout out{Image(h, w), std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w, 0)};
  for (int y = 0; y < h; ++y) {
    const double ys = y - jy;
    for (int x = 0; x < w; ++x) {
      double xs = (x - cx - shear * (ys - cy)) / width_scale;
      if (mirrored) xs = -xs;
      const Part part = classify(identity, xs, ys, h, w);
      const Rgb& color = part == kNone ? background : identity.body_colors[part];
      for (int c = 0; c < 3; ++c) out.base.at(y, x, c) = static_cast<float>(color[c]);
      if (part != kNone) out.mask[static_cast<std::size_t>(y) * w + x] = 1;
    }
  }
  return out;
}

// Two-octave bilinear value noise in [0, 1].
std::vector<float> value_noise(int h, int w, std::uint64_t seed) {
  std::vector<float> field(static_cast<std::size_t>(h) * w, 0.0f);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  const std::array<std::pair<int, float>, 2> octaves{{{8, 0.65f}, {4, 0.35f}}};
  for (const auto& [cell, weight] : octaves) {
    const int gh = h / cell + 2;
    const int gw = w / cell + 2;
    std::vector<float> grid(static_cast<std::size_t>(gh) * gw);
    for (auto& g : grid) g = u(rng);
    for (int y = 0; y < h; ++y) {
      const float fy = static_cast<float>(y) / cell;
      const int y0 = static_cast<int>(fy);
      const float ty = fy - y0;
      for (int x = 0; x < w; ++x) {
        const float fx = static_cast<float>(x) / cell;
        const int x0 = static_cast<int>(fx);
        const float tx = fx - x0;
        const float a = grid[y0 * gw + x0];
        const float b = grid[y0 * gw + x0 + 1];
        const float c = grid[(y0 + 1) * gw + x0];
        const float d = grid[(y0 + 1) * gw + x0 + 1];
        const float v = (a * (1 - tx) + b * tx) * (1 - ty) + (c * (1 - tx) + d * tx) * ty;
        field[static_cast<std::size_t>(y) * w + x] += weight * v;
      }
    }
  }
  return field;
}

Image box_blur3(const Image& img) {
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < 3; ++c) {
        float s = 0.0f;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            const int yy = std::clamp(y + dy, 0, img.height - 1);
            const int xx = std::clamp(x + dx, 0, img.width - 1);
            s += img.at(yy, xx, c);
          }
        out.at(y, x, c) = s / 9.0f;
      }
  return out;
}

// Pose angles and per-sample render seeds shared by generate_domain and
// generate_target_domain so that a zero gap reproduces the clean domain.
struct SamplePlan {
  int identity_index;
  double pose;
  std::uint64_t render_seed;
  std::uint64_t index;
};

std::vector<SamplePlan> plan_samples(std::size_t identities, int per_identity, std::uint64_t seed) {
  std::mt19937_64 rng(derive_seed(seed, 1));
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::vector<SamplePlan> plan;
  std::uint64_t index = 0;
  for (std::size_t i = 0; i < identities; ++i) {
    for (int k = 0; k < per_identity; ++k) {
      double pose = angle(rng);
      if (pose >= 2.0 * std::numbers::pi) pose = 0.0;
      plan.push_back({static_cast<int>(i), pose, derive_seed(seed, 1000 + index), index});
      ++index;
    }
  }
  return plan;
}

std::string sample_path(std::uint64_t index) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "img_%05llu.ppm", static_cast<unsigned long long>(index));
  return buf;
}

bool same_parameters(const IlluminationSpec& a, const IlluminationSpec& b) {
  return illumination_distance(a, b) < 1e-12;
}

}  // namespace

const char* to_string(Origin o) { return o == Origin::synthetic ? "synthetic" : "real"; }

Origin origin_from_string(const std::string& s) {
  if (s == "synthetic") return Origin::synthetic;
  if (s == "real") return Origin::real;
  throw ValidationError("unknown origin '" + s + "' (expected synthetic or real)");
}

std::set<int> DatasetManifest::domain_ids() const {
  std::set<int> out;
  for (const auto& s : samples) out.insert(s.domain_id);
  return out;
}

std::set<int> DatasetManifest::identity_ids() const {
  std::set<int> out;
  for (const auto& s : samples) out.insert(s.identity_id);
  return out;
}

void validate(const IdentitySpec& spec) {
  if (spec.identity_id < 0) throw ValidationError("identity_id must be >= 0");
  for (int p = 0; p < 3; ++p)
    for (int c = 0; c < 3; ++c)
      check_range(spec.body_colors[p][c], 0.0, 1.0,
                  std::string("body_colors.") + kPartNames[p] + "[" + std::to_string(c) + "]");
  for (int g = 0; g < 4; ++g) {
    const double v = spec.body_geometry[g];
    if (!(v > 0.0 && v < 1.0)) {
      throw ValidationError(std::string("body_geometry.") + kGeometryNames[g] + " = " +
                            std::to_string(v) + " outside (0, 1)");
    }
  }
}

void validate(const IlluminationSpec& spec) {
  if (spec.illum_id < 0) throw ValidationError("illum_id must be >= 0");
  for (int c = 0; c < 3; ++c) {
    const std::string idx = "[" + std::to_string(c) + "]";
    check_range(spec.channel_gain[c], 0.2, 1.8, "channel_gain" + idx);
    check_range(spec.channel_bias[c], -0.2, 0.2, "channel_bias" + idx);
    check_range(spec.background_color[c], 0.0, 1.0, "background_color" + idx);
  }
  check_range(spec.gamma, 0.5, 2.0, "gamma");
}

void validate(const DatasetManifest& manifest) {
  if (manifest.height <= 0 || manifest.width <= 0) {
    throw ValidationError("manifest '" + manifest.name + "' has invalid size");
  }
  for (const auto& s : manifest.samples) {
    if (s.image.height != manifest.height || s.image.width != manifest.width) {
      throw ValidationError("sample " + s.path + " has shape " + std::to_string(s.image.height) +
                            "x" + std::to_string(s.image.width) + ", manifest declares " +
                            std::to_string(manifest.height) + "x" + std::to_string(manifest.width));
    }
    for (float v : s.image.pixels) {
      if (!(v >= 0.0f && v <= 1.0f)) throw ValidationError("sample " + s.path + " has pixel outside [0,1]");
    }
  }
}

Image apply_illumination(const Image& base, const IlluminationSpec& illum) {
  Image out(base.height, base.width);
  for (std::size_t i = 0; i < base.pixels.size(); ++i) {
    const int c = static_cast<int>(i % 3);
    const double lin =
        std::clamp(illum.channel_gain[c] * base.pixels[i] + illum.channel_bias[c], 0.0, 1.0);
    out.pixels[i] = static_cast<float>(illum.gamma == 1.0 ? lin : std::pow(lin, illum.gamma));
  }
  return out;
}

Image render_person(const IdentitySpec& identity, const IlluminationSpec& illum, double pose_angle,
                    std::uint64_t rng_seed, RenderSize size) {
  validate(illum);
  Layout layout = compose(identity, illum.background_color, pose_angle, rng_seed, size);
  return apply_illumination(layout.base, illum);
}

std::vector<std::uint8_t> person_mask(const IdentitySpec& identity, double pose_angle,
                                      std::uint64_t rng_seed, RenderSize size) {
  return compose(identity, Rgb{0, 0, 0}, pose_angle, rng_seed, size).mask;
}

DatasetManifest generate_domain(std::span<const IdentitySpec> identities,
                                const IlluminationSpec& illum, int samples_per_identity,
                                std::uint64_t rng_seed, RenderSize size) {
  if (identities.empty()) throw ValidationError("generate_domain: empty identity list");
  if (samples_per_identity < 1) throw ValidationError("samples_per_identity must be >= 1");
  validate(illum);
  DatasetManifest m;
  m.name = "domain_" + std::to_string(illum.illum_id);
  m.height = size.height;
  m.width = size.width;
  for (const auto& p : plan_samples(identities.size(), samples_per_identity, rng_seed)) {
    const auto& id = identities[p.identity_index];
    m.samples.push_back({render_person(id, illum, p.pose, p.render_seed, size), id.identity_id,
                         illum.illum_id, Origin::synthetic, sample_path(p.index)});
  }
  return m;
}

DatasetManifest generate_target_domain(std::span<const IdentitySpec> identities,
                                       const IlluminationSpec& illum, int samples_per_identity,
                                       const RealnessGap& gap, std::uint64_t rng_seed,
                                       std::span<const IlluminationSpec> training_catalog,
                                       RenderSize size) {
  if (identities.empty()) throw ValidationError("generate_target_domain: empty identity list");
  if (samples_per_identity < 1) throw ValidationError("samples_per_identity must be >= 1");
  if (!(gap.noise_sigma >= 0.0)) throw ValidationError("gap noise_sigma must be >= 0");
  validate(illum);
  for (const auto& c : training_catalog) {
    if (c.illum_id == illum.illum_id || same_parameters(c, illum)) {
      throw ValidationError("target illumination " + std::to_string(illum.illum_id) +
                            " collides with training catalog entry " + std::to_string(c.illum_id));
    }
  }

  DatasetManifest m;
  m.name = "target_" + std::to_string(illum.illum_id);
  m.height = size.height;
  m.width = size.width;
  for (const auto& p : plan_samples(identities.size(), samples_per_identity, rng_seed)) {
    const auto& id = identities[p.identity_index];
    Layout layout = compose(id, illum.background_color, p.pose, p.render_seed, size);
    if (gap.texture) {
      const auto noise = value_noise(size.height, size.width, derive_seed(rng_seed, 2000 + p.index));
      for (int y = 0; y < size.height; ++y)
        for (int x = 0; x < size.width; ++x) {
          const std::size_t k = static_cast<std::size_t>(y) * size.width + x;
          if (layout.mask[k]) continue;
          const double mod = 0.55 + 0.9 * noise[k];
          for (int c = 0; c < 3; ++c) {
            layout.base.at(y, x, c) =
                static_cast<float>(std::clamp(illum.background_color[c] * mod, 0.0, 1.0));
          }
        }
    }
    Image img = apply_illumination(layout.base, illum);
    if (gap.blur) img = box_blur3(img);
    if (gap.noise_sigma > 0.0) {
      std::mt19937_64 rng(derive_seed(rng_seed, 3000 + p.index));
      std::normal_distribution<double> n(0.0, gap.noise_sigma);
      for (auto& v : img.pixels) v = static_cast<float>(std::clamp(v + n(rng), 0.0, 1.0));
    }
    m.samples.push_back(
        {std::move(img), id.identity_id, illum.illum_id, Origin::real, sample_path(p.index)});
  }
  return m;
}

std::vector<IdentitySpec> sample_identities(int count, std::uint64_t seed, int first_id,
                                            double min_color_distance) {
  if (count < 1) throw ValidationError("identity count must be >= 1");
  std::mt19937_64 rng(derive_seed(seed, 0x1D));
  std::uniform_real_distribution<double> color(0.05, 0.95);
  std::uniform_real_distribution<double> torso_w(0.38, 0.52);
  std::uniform_real_distribution<double> torso_h(0.30, 0.36);
  std::uniform_real_distribution<double> head_r(0.11, 0.15);
  std::uniform_real_distribution<double> leg_w(0.12, 0.17);

  auto distance = [](const IdentitySpec& a, const IdentitySpec& b) {
    double s = 0.0;
    for (int p = 0; p < 3; ++p)
      for (int c = 0; c < 3; ++c) {
        const double d = a.body_colors[p][c] - b.body_colors[p][c];
        s += d * d;
      }
    return std::sqrt(s);
  };

  std::vector<IdentitySpec> out;
  int attempts = 0;
  while (static_cast<int>(out.size()) < count) {
    if (++attempts > 1000 * count) {
      throw ValidationError("could not sample " + std::to_string(count) +
                            " identities with colour distance >= " + std::to_string(min_color_distance));
    }
    IdentitySpec spec;
    spec.identity_id = first_id + static_cast<int>(out.size());
    for (auto& part : spec.body_colors)
      for (auto& ch : part) ch = color(rng);
    spec.body_geometry = {torso_w(rng), torso_h(rng), head_r(rng), leg_w(rng)};
    const bool ok = std::all_of(out.begin(), out.end(), [&](const IdentitySpec& o) {
      return distance(o, spec) >= min_color_distance;
    });
    if (ok) out.push_back(spec);
  }
  return out;
}

std::vector<IlluminationSpec> sample_illuminations(int count, std::uint64_t seed, int first_id) {
  if (count < 1) throw ValidationError("illumination count must be >= 1");
  std::mt19937_64 rng(derive_seed(seed, 0x111));
  std::uniform_real_distribution<double> gain(0.45, 1.55);
  std::uniform_real_distribution<double> bias(-0.1, 0.1);
  std::uniform_real_distribution<double> log_gamma(std::log(0.6), std::log(1.6));
  std::uniform_real_distribution<double> bg(0.1, 0.9);
  std::vector<IlluminationSpec> out;
  for (int i = 0; i < count; ++i) {
    IlluminationSpec s;
    s.illum_id = first_id + i;
    for (int c = 0; c < 3; ++c) s.channel_gain[c] = gain(rng);
    for (int c = 0; c < 3; ++c) s.channel_bias[c] = bias(rng);
    s.gamma = std::exp(log_gamma(rng));
    for (int c = 0; c < 3; ++c) s.background_color[c] = bg(rng);
    out.push_back(s);
  }
  return out;
}

double illumination_distance(const IlluminationSpec& a, const IlluminationSpec& b) {
  double s = 0.0;
  for (int c = 0; c < 3; ++c) {
    s += std::pow(a.channel_gain[c] - b.channel_gain[c], 2);
    s += std::pow(a.channel_bias[c] - b.channel_bias[c], 2);
    s += std::pow(a.background_color[c] - b.background_color[c], 2);
  }
  s += std::pow(a.gamma - b.gamma, 2);
  return std::sqrt(s);
}

int closest_illumination(const IlluminationSpec& query, std::span<const IlluminationSpec> catalog) {
  if (catalog.empty()) throw ValidationError("closest_illumination: empty catalog");
  int best = 0;
  double best_d = illumination_distance(query, catalog[0]);
  for (int i = 1; i < static_cast<int>(catalog.size()); ++i) {
    const double d = illumination_distance(query, catalog[i]);
    if (d < best_d) {
      best = i;
      best_d = d;
    }
  }
  return best;
}

void write_manifest(const DatasetManifest& manifest, const std::filesystem::path& dir) {
  validate(manifest);
  std::filesystem::create_directories(dir);
  json j;
  j["name"] = manifest.name;
  j["height"] = manifest.height;
  j["width"] = manifest.width;
  j["samples"] = json::array();
  for (const auto& s : manifest.samples) {
    if (s.path.empty()) throw ValidationError("sample without path in manifest " + manifest.name);
    write_ppm(dir / s.path, s.image);
    j["samples"].push_back({{"path", s.path},
                            {"identity_id", s.identity_id},
                            {"domain_id", s.domain_id},
                            {"origin", to_string(s.origin)}});
  }
  const auto tmp = dir / "manifest.json.tmp";
  {
    std::ofstream os(tmp);
    os << j.dump(1) << "\n";
    if (!os) throw ValidationError("failed writing manifest in " + dir.string());
  }
  std::filesystem::rename(tmp, dir / "manifest.json");
}

DatasetManifest read_manifest(const std::filesystem::path& dir) {
  const auto file = dir / "manifest.json";
  std::ifstream is(file);
  if (!is) throw ValidationError("no manifest.json in " + dir.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
  DatasetManifest m;
  try {
    m.name = j.at("name").get<std::string>();
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    for (const auto& s : j.at("samples")) {
      Sample sample;
      sample.path = s.at("path").get<std::string>();
      sample.identity_id = s.at("identity_id").get<int>();
      sample.domain_id = s.at("domain_id").get<int>();
      sample.origin = origin_from_string(s.at("origin").get<std::string>());
      sample.image = read_ppm(dir / sample.path);
      m.samples.push_back(std::move(sample));
    }
  } catch (const json::exception& e) {
    throw ValidationError(file.string() + ": " + e.what());
  }
  validate(m);
  return m;
}

std::vector<DatasetManifest> read_manifests(const std::filesystem::path& dir) {
  if (std::filesystem::exists(dir / "manifest.json")) return {read_manifest(dir)};
  if (!std::filesystem::is_directory(dir)) throw ValidationError("not a directory: " + dir.string());
  std::vector<std::filesystem::path> subdirs;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_directory() && std::filesystem::exists(e.path() / "manifest.json")) {
      subdirs.push_back(e.path());
    }
  }
  if (subdirs.empty()) throw ValidationError("no datasets found under " + dir.string());
  std::sort(subdirs.begin(), subdirs.end());
  std::vector<DatasetManifest> out;
  for (const auto& d : subdirs) out.push_back(read_manifest(d));
  return out;
}

json to_json(const IdentitySpec& spec) {
  return {{"identity_id", spec.identity_id},
          {"body_colors", spec.body_colors},
          {"body_geometry", spec.body_geometry}};
}

json to_json(const IlluminationSpec& spec) {
  return {{"illum_id", spec.illum_id},
          {"channel_gain", spec.channel_gain},
          {"channel_bias", spec.channel_bias},
          {"gamma", spec.gamma},
          {"background_color", spec.background_color}};
}

IdentitySpec identity_from_json(const json& j) {
  IdentitySpec s;
  try {
    s.identity_id = j.at("identity_id").get<int>();
    s.body_colors = j.at("body_colors").get<std::array<Rgb, 3>>();
    s.body_geometry = j.at("body_geometry").get<std::array<double, 4>>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad identity spec: ") + e.what());
  }
  validate(s);
  return s;
}

IlluminationSpec illumination_from_json(const json& j) {
  IlluminationSpec s;
  try {
    s.illum_id = j.at("illum_id").get<int>();
    s.channel_gain = j.at("channel_gain").get<Rgb>();
    s.channel_bias = j.at("channel_bias").get<Rgb>();
    s.gamma = j.at("gamma").get<double>();
    s.background_color = j.at("background_color").get<Rgb>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("bad illumination spec: ") + e.what());
  }
  validate(s);
  return s;
}

bool structurally_equal(const DatasetManifest& a, const DatasetManifest& b) {
  if (a.name != b.name || a.height != b.height || a.width != b.width ||
      a.samples.size() != b.samples.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    const auto& x = a.samples[i];
    const auto& y = b.samples[i];
    if (x.path != y.path || x.identity_id != y.identity_id || x.domain_id != y.domain_id ||
        x.origin != y.origin) {
      return false;
    }
  }
  return true;
}

}  // namespace illumreid::synth
