#include "illumreid/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <signal.h>
#include <unistd.h>

#include "illumreid/errors.hpp"

namespace illumreid::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

json train_json(const TrainConfig& c) {
  json j = illumreid::to_json(c);
  j.erase("seed");
  return j;
}

json read_json_file(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

void write_json_atomic(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp);
    if (!os) throw ValidationError("cannot write " + path.string());
    os << j.dump(2) << "\n";
    if (!os) throw ValidationError("failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

int line_of(const std::string& text, const std::string& key) {
  const auto pos = text.find("\"" + key + "\"");
  if (pos == std::string::npos) return 0;
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<long>(pos), '\n'));
}

std::string at_line(const std::string& text, const std::string& key) {
  const int line = line_of(text, key);
  return line > 0 ? " (line " + std::to_string(line) + ")" : "";
}

// Rejects keys absent from the defaults document, recursively.
void check_keys(const json& user, const json& defaults, const std::string& path, const std::string& text,
                const std::string& origin) {
  std::vector<std::string> known;
  for (const auto& [k, _] : defaults.items()) known.push_back(k);
  for (const auto& [key, value] : user.items()) {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!defaults.contains(key)) {
      std::string msg = origin + at_line(text, key) + ": unknown key '" + full + "'";
      const std::string guess = nearest_key(key, known);
      if (!guess.empty()) msg += "; did you mean '" + (path.empty() ? guess : path + "." + guess) + "'?";
      throw ValidationError(msg);
    }
    const json& def = defaults.at(key);
    if (def.is_object()) {
      if (!value.is_object()) {
        throw ValidationError(origin + at_line(text, key) + ": '" + full + "' must be an object");
      }
      check_keys(value, def, full, text, origin);
    }
  }
}

struct Reader {
  const std::string& text;
  const std::string& origin;

  template <typename T>
  void operator()(const json& obj, const char* key, T& dst, const std::string& path) const {
    if (!obj.contains(key)) return;
    try {
      dst = obj.at(key).get<T>();
    } catch (const json::exception&) {
      throw ValidationError(origin + at_line(text, key) + ": '" + (path.empty() ? "" : path + ".") + key +
                            "' has the wrong type (" + obj.at(key).dump() + ")");
    }
  }

  void train(const json& obj, const char* key, TrainConfig& dst, const std::string& path) const {
    if (!obj.contains(key)) return;
    const json& t = obj.at(key);
    const std::string p = path.empty() ? key : path + "." + key;
    (*this)(t, "learning_rate", dst.learning_rate, p);
    (*this)(t, "epochs", dst.epochs, p);
    (*this)(t, "batch_size", dst.batch_size, p);
    (*this)(t, "weight_decay", dst.weight_decay, p);
    (*this)(t, "momentum", dst.momentum, p);
  }
};

void validate_train(const TrainConfig& c, const std::string& what, bool allow_zero_epochs = false) {
  try {
    illumreid::validate(c, allow_zero_epochs);
  } catch (const ValidationError& e) {
    throw ValidationError(what + ": " + e.what());
  }
}

// ----------------------------------------------------------------- stages

std::string stage_dir_name(std::size_t index, const std::string& name) {
  char buf[8];
  std::snprintf(buf, sizeof(buf), "%02zu_", index + 1);
  return buf + name;
}

std::string rel(const fs::path& p, const fs::path& root) { return fs::relative(p, root).generic_string(); }

std::vector<synth::DatasetManifest> sorted_by_domain(std::vector<synth::DatasetManifest> ms) {
  std::stable_sort(ms.begin(), ms.end(), [](const auto& a, const auto& b) {
    return *a.domain_ids().begin() < *b.domain_ids().begin();
  });
  return ms;
}

std::string domain_dir(const char* prefix, int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s_%03d", prefix, id);
  return buf;
}

std::vector<Image> images_of(const synth::DatasetManifest& m) {
  std::vector<Image> out;
  for (const auto& s : m.samples) out.push_back(s.image);
  return out;
}

class StageRunner {
 public:
  StageRunner(fs::path root, bool force, std::function<void(const std::string&)> progress)
      : root_(std::move(root)), force_(force), progress_(std::move(progress)) {}

  // Runs or resumes one stage. `compute` writes artifacts into the stage
  // directory and returns their paths.
  const StageRecord& run(const std::string& name, const json& stage_config,
                         const std::vector<std::string>& upstream,
                         const std::function<std::vector<fs::path>(const fs::path&)>& compute) {
    const std::size_t index =
        static_cast<std::size_t>(std::find(kStages.begin(), kStages.end(), name) - kStages.begin());
    json basis = {{"stage", name}, {"config", stage_config}, {"upstream", json::array()}};
    for (const auto& u : upstream) basis["upstream"].push_back(hashes_.at(u));
    StageRecord rec;
    rec.name = name;
    rec.dir = stage_dir_name(index, name);
    rec.hash = hash_json(basis);
    const fs::path dir = root_ / rec.dir;
    const fs::path marker = dir / "stage.json";

    bool reuse = false;
    if (fs::exists(marker)) {
      const json old = read_json_file(marker);
      const std::string old_hash = old.value("hash", "");
      if (old_hash != rec.hash) {
        if (!force_) {
          throw StaleCheckpoint("stage '" + name + "' in " + dir.string() +
                                " was produced by a different configuration (hash " + old_hash +
                                ", expected " + rec.hash + "); rerun with --force to recompute");
        }
      } else {
        reuse = true;
        for (const auto& a : old.at("artifacts")) {
          if (!fs::exists(root_ / a.get<std::string>())) reuse = false;
        }
        if (reuse) {
          rec.artifacts = old.at("artifacts").get<std::vector<std::string>>();
          rec.wall_seconds = old.value("wall_seconds", 0.0);
          rec.resumed = true;
        }
      }
    }
    if (!reuse) {
      if (progress_) progress_("stage " + name + ": running");
      fs::remove_all(dir);
      fs::create_directories(dir);
      const auto t0 = std::chrono::steady_clock::now();
      std::vector<fs::path> artifacts;
      try {
        artifacts = compute(dir);
      } catch (const TrainingDiverged& e) {
        throw e.with_context("stage '" + name + "': ");
      } catch (const ValidationError& e) {
        throw ValidationError("stage '" + name + "': " + e.what());
      } catch (const NumericalError& e) {
        throw NumericalError("stage '" + name + "': " + e.what());
      }
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
      for (const auto& a : artifacts) rec.artifacts.push_back(rel(a, root_));
      write_json_atomic({{"stage", name},
                         {"hash", rec.hash},
                         {"artifacts", rec.artifacts},
                         {"wall_seconds", rec.wall_seconds}},
                        marker);
    } else if (progress_) {
      progress_("stage " + name + ": up to date, reusing " + rec.dir);
    }
    hashes_[name] = rec.hash;
    records_.push_back(rec);
    return records_.back();
  }

  fs::path dir(const std::string& name) const {
    for (const auto& r : records_)
      if (r.name == name) return root_ / r.dir;
    throw ValidationError("stage '" + name + "' has not run");
  }
  const std::vector<StageRecord>& records() const { return records_; }

 private:
  fs::path root_;
  bool force_;
  std::function<void(const std::string&)> progress_;
  std::map<std::string, std::string> hashes_;
  std::vector<StageRecord> records_;
};

}  // namespace

std::size_t edit_distance(const std::string& a, const std::string& b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string nearest_key(const std::string& key, const std::vector<std::string>& candidates) {
  std::string best;
  std::size_t best_d = 0;
  for (const auto& c : candidates) {
    const std::size_t d = edit_distance(key, c);
    if (best.empty() || d < best_d) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

std::string hash_json(const json& j) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : j.dump()) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json to_json(const ExperimentConfig& c) {
  json t = translation::to_json(c.translation);
  t["train"].erase("seed");
  t["arch"].erase("height");
  t["arch"].erase("width");
  const auto& d = c.data;
  return {
      {"schema_version", c.schema_version},
      {"seed", c.seed ? json(*c.seed) : json(nullptr)},
      {"output_root", c.output_root},
      {"data",
       {{"image_height", d.image_height},
        {"image_width", d.image_width},
        {"synthetic_identities", d.synthetic_identities},
        {"illuminations", d.illuminations},
        {"samples_per_identity", d.samples_per_identity},
        {"real_source_domains", d.real_source_domains},
        {"real_identities", d.real_identities},
        {"real_samples_per_identity", d.real_samples_per_identity},
        {"target_identities", d.target_identities},
        {"target_samples_per_identity", d.target_samples_per_identity},
        {"test_identities", d.test_identities},
        {"noise_sigma", d.gap.noise_sigma},
        {"texture", d.gap.texture},
        {"blur", d.gap.blur}}},
      {"reid",
       {{"embedding_dim", c.reid_arch.embedding_dim},
        {"channels", c.reid_arch.channels},
        {"train", train_json(c.reid_train)}}},
      {"illum", {{"holdout_fraction", c.illum_holdout}, {"train", train_json(c.illum_train)}}},
      {"translation", t},
      {"finetune", train_json(c.finetune)},
      {"eval", {{"metric", eval::to_string(c.metric)}}},
      {"ablation",
       {{"seeds", c.ablation.seeds},
        {"random_draws", c.ablation.random_draws},
        {"conditions", c.ablation.conditions}}},
  };
}

ExperimentConfig parse_config(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError(origin + ": top level must be an object");
  ExperimentConfig c;
  check_keys(j, to_json(c), "", text, origin);

  if (!j.contains("schema_version")) {
    throw ValidationError(origin + ": config field 'schema_version' is required (current: " +
                          std::to_string(kSchemaVersion) + ")");
  }
  const Reader read{text, origin};
  read(j, "schema_version", c.schema_version, "");
  if (c.schema_version != kSchemaVersion) {
    throw ValidationError(origin + at_line(text, "schema_version") + ": unsupported schema_version " +
                          std::to_string(c.schema_version) + " (expected " +
                          std::to_string(kSchemaVersion) + ")");
  }
  if (!j.contains("seed") || j.at("seed").is_null()) {
    throw ValidationError(origin + ": config field 'seed' is required");
  }
  std::uint64_t seed = 0;
  if (!j.at("seed").is_number_unsigned()) {
    throw ValidationError(origin + at_line(text, "seed") + ": 'seed' must be a non-negative integer");
  }
  read(j, "seed", seed, "");
  c.seed = seed;
  read(j, "output_root", c.output_root, "");

  if (j.contains("data")) {
    const json& d = j.at("data");
    auto& dc = c.data;
    read(d, "image_height", dc.image_height, "data");
    read(d, "image_width", dc.image_width, "data");
    read(d, "synthetic_identities", dc.synthetic_identities, "data");
    read(d, "illuminations", dc.illuminations, "data");
    read(d, "samples_per_identity", dc.samples_per_identity, "data");
    read(d, "real_source_domains", dc.real_source_domains, "data");
    read(d, "real_identities", dc.real_identities, "data");
    read(d, "real_samples_per_identity", dc.real_samples_per_identity, "data");
    read(d, "target_identities", dc.target_identities, "data");
    read(d, "target_samples_per_identity", dc.target_samples_per_identity, "data");
    read(d, "test_identities", dc.test_identities, "data");
    read(d, "noise_sigma", dc.gap.noise_sigma, "data");
    read(d, "texture", dc.gap.texture, "data");
    read(d, "blur", dc.gap.blur, "data");
  }
  if (j.contains("reid")) {
    const json& r = j.at("reid");
    read(r, "embedding_dim", c.reid_arch.embedding_dim, "reid");
    read(r, "channels", c.reid_arch.channels, "reid");
    read.train(r, "train", c.reid_train, "reid");
  }
  if (j.contains("illum")) {
    const json& r = j.at("illum");
    read(r, "holdout_fraction", c.illum_holdout, "illum");
    read.train(r, "train", c.illum_train, "illum");
  }
  if (j.contains("translation")) {
    const json& t = j.at("translation");
    auto& tc = c.translation;
    std::vector<double> lambdas{tc.lambdas.cycle, tc.lambdas.identity, tc.lambdas.mask};
    read(t, "lambdas", lambdas, "translation");
    if (lambdas.size() != 3) {
      throw ValidationError(origin + at_line(text, "lambdas") + ": 'translation.lambdas' needs 3 values");
    }
    tc.lambdas = {lambdas[0], lambdas[1], lambdas[2]};
    std::string s = translation::to_string(tc.ablation);
    read(t, "ablation", s, "translation");
    tc.ablation = translation::ablation_from_string(s);
    s = translation::to_string(tc.gan_mode);
    read(t, "gan_mode", s, "translation");
    tc.gan_mode = translation::gan_mode_from_string(s);
    read.train(t, "train", tc.train, "translation");
    read(t, "replay_buffer", tc.replay_buffer, "translation");
    std::vector<double> sf{tc.matte_sigma_frac.first, tc.matte_sigma_frac.second};
    read(t, "matte_sigma_frac", sf, "translation");
    if (sf.size() != 2) {
      throw ValidationError(origin + at_line(text, "matte_sigma_frac") +
                            ": 'translation.matte_sigma_frac' needs 2 values");
    }
    tc.matte_sigma_frac = {sf[0], sf[1]};
    read(t, "steps_per_epoch", tc.steps_per_epoch, "translation");
    if (t.contains("arch")) {
      const json& a = t.at("arch");
      read(a, "base_channels", tc.arch.base_channels, "translation.arch");
      read(a, "res_blocks", tc.arch.res_blocks, "translation.arch");
      read(a, "disc_channels", tc.arch.disc_channels, "translation.arch");
      read(a, "identity_init", tc.arch.identity_init, "translation.arch");
    }
  }
  read.train(j, "finetune", c.finetune, "");
  if (j.contains("eval")) {
    std::string m = eval::to_string(c.metric);
    read(j.at("eval"), "metric", m, "eval");
    c.metric = eval::metric_from_string(m);
  }
  if (j.contains("ablation")) {
    const json& a = j.at("ablation");
    read(a, "seeds", c.ablation.seeds, "ablation");
    read(a, "random_draws", c.ablation.random_draws, "ablation");
    read(a, "conditions", c.ablation.conditions, "ablation");
  }
  try {
    validate(c);
  } catch (const ValidationError& e) {
    throw ValidationError(origin + ": " + e.what());
  }
  return c;
}

ExperimentConfig validate_config(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config(ss.str(), path.string());
}

void validate(const ExperimentConfig& c) {
  c.require_seed();
  if (c.schema_version != kSchemaVersion) throw ValidationError("unsupported schema_version");
  experiment::validate(c.data);
  if (c.reid_arch.embedding_dim < 1) throw ValidationError("reid.embedding_dim must be >= 1");
  for (int ch : c.reid_arch.channels) {
    if (ch < 1) throw ValidationError("reid.channels must be >= 1");
  }
  validate_train(c.reid_train, "reid.train");
  validate_train(c.illum_train, "illum.train");
  validate_train(c.finetune, "finetune", true);
  if (!(c.illum_holdout >= 0.0 && c.illum_holdout < 1.0)) {
    throw ValidationError("illum.holdout_fraction must be in [0, 1)");
  }
  translation::TranslationConfig tc = c.translation;
  tc.arch.height = c.data.image_height;
  tc.arch.width = c.data.image_width;
  try {
    translation::validate(tc);
  } catch (const ValidationError& e) {
    throw ValidationError(std::string("translation: ") + e.what());
  }
  for (const auto& cond : c.ablation.conditions) {
    if (cond != "R" && cond != "R+S" && !experiment::condition_ablation(cond)) {
      throw ValidationError("ablation.conditions: unknown condition '" + cond +
                            "' (expected R, R+S, CycleGan, CycleGan+L_id, CycleGan+L_Ref or Ours)");
    }
  }
  if (c.ablation.random_draws < 0) throw ValidationError("ablation.random_draws must be >= 0");
}

// ------------------------------------------------------------ run manifest

json to_json(const RunManifest& m) {
  json stages = json::array();
  for (const auto& s : m.stages) {
    stages.push_back({{"name", s.name},
                      {"dir", s.dir},
                      {"hash", s.hash},
                      {"artifacts", s.artifacts},
                      {"wall_seconds", s.wall_seconds},
                      {"resumed", s.resumed}});
  }
  return {{"config", m.config},
          {"stages", stages},
          {"k_star", m.k_star},
          {"k_star_domain_id", m.k_star_domain_id},
          {"metrics", m.metrics}};
}

RunManifest run_manifest_from_json(const json& j) {
  RunManifest m;
  try {
    m.config = j.at("config");
    for (const auto& s : j.at("stages")) {
      StageRecord r;
      r.name = s.at("name").get<std::string>();
      r.dir = s.at("dir").get<std::string>();
      r.hash = s.at("hash").get<std::string>();
      r.artifacts = s.at("artifacts").get<std::vector<std::string>>();
      r.wall_seconds = s.at("wall_seconds").get<double>();
      r.resumed = s.at("resumed").get<bool>();
      m.stages.push_back(std::move(r));
    }
    m.k_star = j.at("k_star").get<int>();
    m.k_star_domain_id = j.at("k_star_domain_id").get<int>();
    m.metrics = j.at("metrics");
  } catch (const json::exception& e) {
    throw ValidationError(std::string("malformed run manifest: ") + e.what());
  }
  return m;
}

void write_run_manifest(const RunManifest& m, const fs::path& path) { write_json_atomic(to_json(m), path); }

RunManifest read_run_manifest(const fs::path& path) { return run_manifest_from_json(read_json_file(path)); }

bool structurally_equal(const RunManifest& a, const RunManifest& b) {
  if (a.config != b.config || a.k_star != b.k_star || a.k_star_domain_id != b.k_star_domain_id ||
      a.metrics != b.metrics || a.stages.size() != b.stages.size()) {
    return false;
  }
  for (std::size_t i = 0; i < a.stages.size(); ++i) {
    const auto& x = a.stages[i];
    const auto& y = b.stages[i];
    if (x.name != y.name || x.dir != y.dir || x.hash != y.hash || x.artifacts != y.artifacts) return false;
  }
  return true;
}

std::vector<std::string> check_run_manifest(const RunManifest& m, const fs::path& root) {
  std::vector<std::string> problems;
  for (const auto& s : m.stages) {
    for (const auto& a : s.artifacts) {
      if (!fs::exists(root / a)) problems.push_back("stage " + s.name + ": missing artifact " + a);
    }
    const fs::path marker = root / s.dir / "stage.json";
    if (!fs::exists(marker)) {
      problems.push_back("stage " + s.name + ": missing " + marker.string());
      continue;
    }
    const json j = read_json_file(marker);
    if (j.value("hash", "") != s.hash) problems.push_back("stage " + s.name + ": hash mismatch");
  }
  return problems;
}

// ------------------------------------------------------------------- lock

DirectoryLock::DirectoryLock(const fs::path& dir) : path_(dir / ".lock") {
  fs::create_directories(dir);
  for (int attempt = 0; attempt < 2; ++attempt) {
    std::FILE* f = std::fopen(path_.c_str(), "wx");
    if (f) {
      std::fprintf(f, "%ld\n", static_cast<long>(::getpid()));
      std::fclose(f);
      return;
    }
    long pid = 0;
    if (std::FILE* r = std::fopen(path_.c_str(), "r")) {
      if (std::fscanf(r, "%ld", &pid) != 1) pid = 0;
      std::fclose(r);
    }
    if (pid > 0 && ::kill(static_cast<pid_t>(pid), 0) == 0) {
      throw ValidationError("experiment directory " + dir.string() + " is locked by process " +
                            std::to_string(pid));
    }
    fs::remove(path_);  // stale lock left by a dead process
  }
  throw ValidationError("cannot lock experiment directory " + dir.string());
}

DirectoryLock::~DirectoryLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// --------------------------------------------------------------- pipeline

RunManifest run_pipeline(const ExperimentConfig& config, const RunOptions& options) {
  validate(config);
  const std::uint64_t seed = config.require_seed();
  const fs::path root = options.out.empty() ? fs::path(config.output_root) : options.out;
  if (root.empty()) throw ValidationError("no output directory: set output_root or pass --out");
  DirectoryLock lock(root);
  StageRunner runner(root, options.force, options.progress);
  const json cj = to_json(config);
  const json seed_j = seed;

  runner.run("gen_data", {{"seed", seed_j}, {"data", cj.at("data")}}, {}, [&](const fs::path& dir) {
    const auto d = experiment::generate_toy_data(config.data, seed);
    std::vector<fs::path> out;
    json catalog = {{"identities", json::array()},
                    {"catalog", json::array()},
                    {"real_illuminations", json::array()},
                    {"target_illumination", synth::to_json(d.target_illumination)}};
    for (const auto& i : d.identities) catalog["identities"].push_back(synth::to_json(i));
    for (const auto& i : d.catalog) catalog["catalog"].push_back(synth::to_json(i));
    for (const auto& i : d.real_illuminations) catalog["real_illuminations"].push_back(synth::to_json(i));
    write_json_atomic(catalog, dir / "catalog.json");
    out.push_back(dir / "catalog.json");
    auto put = [&](const synth::DatasetManifest& m, const fs::path& where) {
      synth::write_manifest(m, where);
      out.push_back(where / "manifest.json");
    };
    for (const auto& m : d.synthetic) put(m, dir / "synthetic" / domain_dir("domain", *m.domain_ids().begin()));
    for (const auto& m : d.real_source) put(m, dir / "real" / domain_dir("real", *m.domain_ids().begin()));
    put(d.target_unlabeled, dir / "target");
    put(d.probe, dir / "probe");
    put(d.gallery, dir / "gallery");
    return out;
  });
  const fs::path data_dir = runner.dir("gen_data");
  const auto synthetic = sorted_by_domain(synth::read_manifests(data_dir / "synthetic"));
  const auto real = fs::exists(data_dir / "real") ? sorted_by_domain(synth::read_manifests(data_dir / "real"))
                                                  : std::vector<synth::DatasetManifest>{};
  const auto target = synth::read_manifest(data_dir / "target");
  const auto probe = synth::read_manifest(data_dir / "probe");
  const auto gallery = synth::read_manifest(data_dir / "gallery");

  runner.run("train_reid", cj.at("reid"), {"gen_data"}, [&](const fs::path& dir) {
    std::vector<synth::DatasetManifest> joint = real;
    joint.insert(joint.end(), synthetic.begin(), synthetic.end());
    TrainConfig rc = config.reid_train;
    rc.seed = experiment::stage_seed(seed, "train_reid");
    const auto res = reid::train_joint(joint, rc, config.reid_arch);
    reid::save_checkpoint(res.model, dir / "model.ckpt");
    write_json_atomic({{"epoch_loss", res.log.epoch_loss},
                       {"epoch_accuracy", res.log.epoch_accuracy},
                       {"final_accuracy", res.log.final_accuracy}},
                      dir / "log.json");
    return std::vector<fs::path>{dir / "model.ckpt", dir / "log.json"};
  });
  const auto rs_model = reid::load_checkpoint(runner.dir("train_reid") / "model.ckpt");

  runner.run("train_illum", cj.at("illum"), {"gen_data"}, [&](const fs::path& dir) {
    TrainConfig ic = config.illum_train;
    ic.seed = experiment::stage_seed(seed, "train_illum");
    const auto res = illum::train_illum_classifier(synthetic, ic, config.illum_holdout);
    illum::save_checkpoint(res.classifier, dir / "classifier.ckpt");
    write_json_atomic({{"heldout_accuracy", res.heldout_accuracy},
                       {"final_accuracy", res.log.final_accuracy},
                       {"warnings", res.warnings}},
                      dir / "report.json");
    return std::vector<fs::path>{dir / "classifier.ckpt", dir / "report.json"};
  });
  const auto illum_report = read_json_file(runner.dir("train_illum") / "report.json");

  runner.run("infer_illum", json::object(), {"train_illum"}, [&](const fs::path& dir) {
    const auto classifier = illum::load_checkpoint(runner.dir("train_illum") / "classifier.ckpt");
    const auto sel = illum::infer_domain(classifier, images_of(target));
    write_json_atomic({{"k_star", sel.k_star},
                       {"domain_id", sel.domain_id},
                       {"vote_counts", sel.vote_counts},
                       {"n_images", sel.n_images}},
                      dir / "selection.json");
    return std::vector<fs::path>{dir / "selection.json"};
  });
  const auto selection = read_json_file(runner.dir("infer_illum") / "selection.json");
  const int k_star = selection.at("k_star").get<int>();
  const int k_domain = selection.at("domain_id").get<int>();
  const synth::DatasetManifest* source = nullptr;
  for (const auto& m : synthetic)
    if (*m.domain_ids().begin() == k_domain) source = &m;
  if (!source) throw ValidationError("selected domain " + std::to_string(k_domain) + " not found in data");

  runner.run("train_translate", cj.at("translation"), {"infer_illum"}, [&](const fs::path& dir) {
    translation::TranslationConfig tc = config.translation;
    tc.arch.height = source->height;
    tc.arch.width = source->width;
    tc.train.seed = experiment::stage_seed(seed, "train_translate");
    const auto res = translation::train_translation(*source, target, tc);
    translation::save_checkpoint(res.model, dir / "translation.ckpt");
    json history = json::array();
    for (const auto& h : res.history) {
      history.push_back({{"gan_g", h.gan_g}, {"gan_f", h.gan_f}, {"cycle", h.cycle},
                         {"identity", h.identity}, {"ref", h.ref}, {"mask", h.mask},
                         {"objective", h.objective}, {"disc", h.disc}});
    }
    write_json_atomic({{"history", history},
                       {"initial_cycle", res.initial_cycle},
                       {"final_cycle", res.final_cycle},
                       {"initial_mask", res.initial_mask},
                       {"final_mask", res.final_mask}},
                      dir / "history.json");
    return std::vector<fs::path>{dir / "translation.ckpt", dir / "history.json"};
  });
  const auto history = read_json_file(runner.dir("train_translate") / "history.json");

  runner.run("translate", json::object(), {"train_translate"}, [&](const fs::path& dir) {
    const auto model = translation::load_checkpoint(runner.dir("train_translate") / "translation.ckpt");
    synth::write_manifest(translation::translate(model, *source), dir / "translated");
    return std::vector<fs::path>{dir / "translated" / "manifest.json"};
  });
  const auto translated = synth::read_manifest(runner.dir("translate") / "translated");

  runner.run("finetune", cj.at("finetune"), {"translate", "train_reid"}, [&](const fs::path& dir) {
    TrainConfig fc = config.finetune;
    fc.seed = experiment::stage_seed(seed, "finetune");
    const auto res = reid::finetune(rs_model, translated, fc);
    reid::save_checkpoint(res.model, dir / "model.ckpt");
    return std::vector<fs::path>{dir / "model.ckpt"};
  });

  runner.run("evaluate", cj.at("eval"), {"finetune", "train_reid"}, [&](const fs::path& dir) {
    const auto tuned = reid::load_checkpoint(runner.dir("finetune") / "model.ckpt");
    const std::uint64_t es = experiment::stage_seed(seed, "evaluate");
    const auto adapted = eval::evaluate(tuned, probe, gallery, es, config.metric);
    const auto baseline = eval::evaluate(rs_model, probe, gallery, es, config.metric);
    const auto target_stats = eval::image_stats(target);
    write_json_atomic({{"metric", eval::to_string(config.metric)},
                       {"adapted", eval::to_json(adapted)},
                       {"baseline", eval::to_json(baseline)},
                       {"stats_synthetic_vs_target", eval::stats_distance(eval::image_stats(*source), target_stats)},
                       {"stats_translated_vs_target",
                        eval::stats_distance(eval::image_stats(translated), target_stats)}},
                      dir / "cmc.json");
    return std::vector<fs::path>{dir / "cmc.json"};
  });
  const auto cmc = read_json_file(runner.dir("evaluate") / "cmc.json");

  RunManifest manifest;
  manifest.config = cj;
  manifest.stages = runner.records();
  manifest.k_star = k_star;
  manifest.k_star_domain_id = k_domain;
  manifest.metrics = {{"rank1", cmc.at("adapted").at("rank1")},
                      {"cmc", cmc.at("adapted").at("cmc")},
                      {"baseline_rank1", cmc.at("baseline").at("rank1")},
                      {"baseline_cmc", cmc.at("baseline").at("cmc")},
                      {"illum_heldout_accuracy", illum_report.at("heldout_accuracy")},
                      {"translation_final_cycle", history.at("final_cycle")},
                      {"translation_final_mask", history.at("final_mask")},
                      {"stats_synthetic_vs_target", cmc.at("stats_synthetic_vs_target")},
                      {"stats_translated_vs_target", cmc.at("stats_translated_vs_target")}};
  write_run_manifest(manifest, root / "run_manifest.json");
  return manifest;
}

}  // namespace illumreid::pipeline
