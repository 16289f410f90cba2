#include "illumreid/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <map>
#include <mutex>
#include <random>
#include <thread>

#include "illumreid/errors.hpp"

namespace illumreid::experiment {

namespace {

using synth::DatasetManifest;

void quantize_all(DatasetManifest& m) {
  for (auto& s : m.samples) s.image = quantize8(s.image);
}

std::vector<Image> images_of(const DatasetManifest& m) {
  std::vector<Image> out;
  out.reserve(m.samples.size());
  for (const auto& s : m.samples) out.push_back(s.image);
  return out;
}

void require_positive(int v, const char* field) {
  if (v < 1) throw ValidationError(std::string("data.") + field + " must be >= 1");
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

std::uint64_t ExperimentConfig::require_seed() const {
  if (!seed) throw ValidationError("config field 'seed' is required");
  return *seed;
}

void validate(const DataConfig& c) {
  if (c.image_height < 16 || c.image_width < 16 || c.image_height % 4 || c.image_width % 4) {
    throw ValidationError("data.image_height / image_width must be >= 16 and divisible by 4");
  }
  if (c.synthetic_identities < 2) throw ValidationError("data.synthetic_identities must be >= 2");
  if (c.illuminations < 2) throw ValidationError("data.illuminations must be >= 2");
  require_positive(c.samples_per_identity, "samples_per_identity");
  if (c.real_source_domains < 0) throw ValidationError("data.real_source_domains must be >= 0");
  if (c.real_source_domains > 0) {
    require_positive(c.real_identities, "real_identities");
    require_positive(c.real_samples_per_identity, "real_samples_per_identity");
  }
  require_positive(c.target_identities, "target_identities");
  require_positive(c.target_samples_per_identity, "target_samples_per_identity");
  if (c.test_identities < 2) throw ValidationError("data.test_identities must be >= 2");
  if (!(c.gap.noise_sigma >= 0.0)) throw ValidationError("data.noise_sigma must be >= 0");
}

std::uint64_t stage_seed(std::uint64_t seed, const std::string& stage) {
  return derive_seed(seed, fnv1a(stage));
}

ToyData generate_toy_data(const DataConfig& c, std::uint64_t seed) {
  validate(c);
  const synth::RenderSize size{c.image_height, c.image_width};
  const int n_real = c.real_source_domains * c.real_identities;
  const int total = c.synthetic_identities + n_real + c.target_identities + c.test_identities;
  ToyData d;
  d.identities = synth::sample_identities(total, stage_seed(seed, "identities"));
  const auto illums =
      synth::sample_illuminations(c.illuminations + c.real_source_domains + 1, stage_seed(seed, "illuminations"));
  d.catalog.assign(illums.begin(), illums.begin() + c.illuminations);
  d.real_illuminations.assign(illums.begin() + c.illuminations, illums.end() - 1);
  d.target_illumination = illums.back();

  auto slice = [&](int begin, int count) {
    return std::span<const synth::IdentitySpec>(d.identities).subspan(begin, count);
  };
  const auto synthetic_ids = slice(0, c.synthetic_identities);
  int next = c.synthetic_identities;
  for (int k = 0; k < c.illuminations; ++k) {
    d.synthetic.push_back(synth::generate_domain(synthetic_ids, d.catalog[k], c.samples_per_identity,
                                                 stage_seed(seed, "synthetic/" + std::to_string(k)),
                                                 size));
  }
  for (int m = 0; m < c.real_source_domains; ++m) {
    auto r = synth::generate_target_domain(slice(next, c.real_identities), d.real_illuminations[m],
                                           c.real_samples_per_identity, c.gap,
                                           stage_seed(seed, "real/" + std::to_string(m)), d.catalog, size);
    r.name = "real_" + std::to_string(d.real_illuminations[m].illum_id);
    d.real_source.push_back(std::move(r));
    next += c.real_identities;
  }
  d.target_unlabeled = synth::generate_target_domain(
      slice(next, c.target_identities), d.target_illumination, c.target_samples_per_identity, c.gap,
      stage_seed(seed, "target"), d.catalog, size);
  next += c.target_identities;
  d.probe = synth::generate_target_domain(slice(next, c.test_identities), d.target_illumination, 1,
                                          c.gap, stage_seed(seed, "probe"), d.catalog, size);
  d.probe.name = "probe";
  d.gallery = synth::generate_target_domain(slice(next, c.test_identities), d.target_illumination, 1,
                                            c.gap, stage_seed(seed, "gallery"), d.catalog, size);
  d.gallery.name = "gallery";

  for (auto& m : d.synthetic) quantize_all(m);
  for (auto& m : d.real_source) quantize_all(m);
  quantize_all(d.target_unlabeled);
  quantize_all(d.probe);
  quantize_all(d.gallery);
  return d;
}

SharedStages run_shared_stages(const ExperimentConfig& config, const ToyData& data, std::uint64_t seed,
                               bool need_r) {
  SharedStages out;
  std::vector<DatasetManifest> joint = data.real_source;
  joint.insert(joint.end(), data.synthetic.begin(), data.synthetic.end());
  TrainConfig rc = config.reid_train;
  rc.seed = stage_seed(seed, "train_reid");
  out.rs = reid::train_joint(joint, rc, config.reid_arch);
  if (need_r) {
    if (data.real_source.empty()) throw ValidationError("condition 'R' needs real_source_domains >= 1");
    rc.seed = stage_seed(seed, "train_reid_real");
    out.r = reid::train_joint(data.real_source, rc, config.reid_arch);
  }
  TrainConfig ic = config.illum_train;
  ic.seed = stage_seed(seed, "train_illum");
  out.illum = illum::train_illum_classifier(data.synthetic, ic, config.illum_holdout);
  out.selection = illum::infer_domain(out.illum.classifier, images_of(data.target_unlabeled));
  out.nearest_catalog_index = synth::closest_illumination(data.target_illumination, data.catalog);
  return out;
}

AdaptResult adapt(const ExperimentConfig& config, const ToyData& data, const SharedStages& shared,
                  int k, translation::Ablation ablation, std::uint64_t seed) {
  if (k < 0 || k >= static_cast<int>(data.synthetic.size())) {
    throw ValidationError("synthetic domain index " + std::to_string(k) + " out of range");
  }
  AdaptResult out;
  translation::TranslationConfig tc = config.translation;
  tc.ablation = ablation;
  tc.arch.height = data.synthetic[k].height;
  tc.arch.width = data.synthetic[k].width;
  tc.train.seed = stage_seed(seed, "train_translate");
  out.translation = translation::train_translation(data.synthetic[k], data.target_unlabeled, tc);
  out.translated = translation::translate(out.translation.model, data.synthetic[k]);
  quantize_all(out.translated);
  TrainConfig fc = config.finetune;
  fc.seed = stage_seed(seed, "finetune");
  out.finetuned = reid::finetune(shared.rs.model, out.translated, fc);
  out.curve = eval::evaluate(out.finetuned.model, data.probe, data.gallery, stage_seed(seed, "evaluate"),
                             config.metric);
  return out;
}

std::optional<translation::Ablation> condition_ablation(const std::string& c) {
  using translation::Ablation;
  if (c == "CycleGan") return Ablation::none;
  if (c == "CycleGan+L_id") return Ablation::id;
  if (c == "CycleGan+L_Ref") return Ablation::ref;
  if (c == "Ours") return Ablation::mask_full;
  return std::nullopt;
}

std::vector<const ConditionRecord*> AblationReport::of(const std::string& condition) const {
  std::vector<const ConditionRecord*> out;
  for (const auto& r : records)
    if (r.condition == condition) out.push_back(&r);
  return out;
}

double AblationReport::mean_rank1(const std::string& condition) const {
  const auto rs = of(condition);
  if (rs.empty()) throw ValidationError("report has no condition '" + condition + "'");
  double s = 0.0;
  for (const auto* r : rs) s += r->rank1;
  return s / static_cast<double>(rs.size());
}

nlohmann::json to_json(const AblationReport& report) {
  nlohmann::json j;
  j["records"] = nlohmann::json::array();
  std::vector<std::string> names;
  for (const auto& r : report.records) {
    nlohmann::json e = {{"condition", r.condition}, {"seed", r.seed}, {"rank1", r.rank1}, {"cmc", r.cmc}};
    if (r.domain_k >= 0) e["domain_k"] = r.domain_k;
    j["records"].push_back(e);
    if (std::find(names.begin(), names.end(), r.condition) == names.end()) names.push_back(r.condition);
  }
  j["means"] = nlohmann::json::object();
  for (const auto& n : names) j["means"][n] = report.mean_rank1(n);
  j["seeds"] = nlohmann::json::array();
  for (const auto& s : report.seeds) {
    j["seeds"].push_back({{"seed", s.seed},
                          {"k_star", s.k_star},
                          {"nearest_catalog_index", s.nearest_catalog_index},
                          {"illum_heldout_accuracy", s.illum_heldout_accuracy},
                          {"stats_synthetic_vs_target", s.stats_synthetic_vs_target},
                          {"stats_translated_vs_target", s.stats_translated_vs_target},
                          {"color_shift_ours", s.color_shift_ours},
                          {"color_shift_cyclegan", s.color_shift_cyclegan},
                          {"mask_loss_ours", s.mask_loss_ours},
                          {"mask_loss_cyclegan", s.mask_loss_cyclegan},
                          {"random_k", s.random_k},
                          {"wall_seconds", s.wall_seconds}});
  }
  return j;
}

AblationReport run_ablation(const ExperimentConfig& config,
                            const std::function<void(const std::string&)>& progress) {
  const std::uint64_t base = config.require_seed();
  std::vector<std::uint64_t> seeds = config.ablation.seeds;
  if (seeds.empty()) seeds = {base, base + 1, base + 2};
  for (const auto& c : config.ablation.conditions) {
    if (c != "R" && c != "R+S" && !condition_ablation(c)) {
      throw ValidationError("unknown ablation condition '" + c + "'");
    }
  }
  if (config.ablation.random_draws < 0) throw ValidationError("ablation.random_draws must be >= 0");
  auto say = [&](const std::string& line) {
    if (progress) progress(line);
  };
  const bool need_r = std::find(config.ablation.conditions.begin(), config.ablation.conditions.end(),
                                "R") != config.ablation.conditions.end();

  std::mutex say_mutex;
  auto say_locked = [&](const std::string& line) {
    std::lock_guard<std::mutex> lock(say_mutex);
    say(line);
  };
  // One independent partial report per seed; seeds run on separate threads.
  std::vector<AblationReport> partial(seeds.size());
  std::vector<std::exception_ptr> errors(seeds.size());
  auto run_seed = [&](std::size_t index) {
    const std::uint64_t seed = seeds[index];
    AblationReport& report = partial[index];
    auto say = say_locked;
    const auto t0 = std::chrono::steady_clock::now();
    const std::string tag = " seed=" + std::to_string(seed);
    auto fail = [&](const std::string& condition, const std::exception& e) -> std::string {
      return "condition '" + condition + "'" + tag + ": " + e.what();
    };
    ToyData data;
    SharedStages shared;
    try {
      data = generate_toy_data(config.data, seed);
      shared = run_shared_stages(config, data, seed, need_r);
    } catch (const ValidationError& e) {
      throw ValidationError(fail("shared stages", e));
    } catch (const TrainingDiverged& e) {
      throw e.with_context("condition 'shared stages'" + tag + ": ");
    }
    SeedDiagnostics diag;
    diag.seed = seed;
    diag.k_star = shared.selection.k_star;
    diag.nearest_catalog_index = shared.nearest_catalog_index;
    diag.illum_heldout_accuracy = shared.illum.heldout_accuracy;
    const auto target_stats = eval::image_stats(data.target_unlabeled);
    diag.stats_synthetic_vs_target =
        eval::stats_distance(eval::image_stats(data.synthetic[diag.k_star]), target_stats);
    say("seed " + std::to_string(seed) + ": k*=" + std::to_string(diag.k_star) + " (nearest " +
        std::to_string(diag.nearest_catalog_index) + "), illum held-out acc " +
        std::to_string(diag.illum_heldout_accuracy));

    std::map<int, ConditionRecord> mask_full_by_k;
    auto record_of = [&](const std::string& name, const eval::CMCCurve& c, int k) {
      return ConditionRecord{name, seed, c.rank1(), c.accuracies, k};
    };
    auto run_adapt = [&](const std::string& name, int k, translation::Ablation a) {
      try {
        return adapt(config, data, shared, k, a, seed);
      } catch (const ValidationError& e) {
        throw ValidationError(fail(name, e));
      } catch (const TrainingDiverged& e) {
        throw e.with_context("condition '" + name + "'" + tag + ": ");
      }
    };
    const auto source_images = images_of(data.synthetic[diag.k_star]);

    for (const auto& c : config.ablation.conditions) {
      ConditionRecord rec;
      if (c == "R") {
        rec = record_of(c, eval::evaluate(shared.r.model, data.probe, data.gallery,
                                          stage_seed(seed, "evaluate"), config.metric), -1);
      } else if (c == "R+S") {
        rec = record_of(c, eval::evaluate(shared.rs.model, data.probe, data.gallery,
                                          stage_seed(seed, "evaluate"), config.metric), -1);
      } else {
        const auto a = *condition_ablation(c);
        const AdaptResult res = run_adapt(c, diag.k_star, a);
        rec = record_of(c, res.curve, diag.k_star);
        const auto shift = eval::foreground_color_shift(source_images, images_of(res.translated),
                                                        res.translation.model.matte);
        if (a == translation::Ablation::mask_full) {
          mask_full_by_k[diag.k_star] = rec;
          diag.stats_translated_vs_target =
              eval::stats_distance(eval::image_stats(res.translated), target_stats);
          diag.color_shift_ours = shift;
          diag.mask_loss_ours = res.translation.final_mask;
        } else if (a == translation::Ablation::none) {
          diag.color_shift_cyclegan = shift;
          diag.mask_loss_cyclegan = res.translation.final_mask;
        }
      }
      say("  " + c + tag + ": rank-1 " + std::to_string(rec.rank1));
      report.records.push_back(std::move(rec));
    }

    auto mask_full_at = [&](int k) {
      auto it = mask_full_by_k.find(k);
      if (it == mask_full_by_k.end()) {
        const AdaptResult res = run_adapt(k == diag.k_star ? "inferred_k" : "random_k", k,
                                          translation::Ablation::mask_full);
        it = mask_full_by_k.emplace(k, record_of("", res.curve, k)).first;
      }
      return it->second;
    };
    if (config.ablation.random_draws > 0) {
      ConditionRecord inferred = mask_full_at(diag.k_star);
      inferred.condition = "inferred_k";
      report.records.push_back(inferred);
      std::mt19937_64 rng(stage_seed(seed, "random_k"));
      std::uniform_int_distribution<int> pick(0, static_cast<int>(data.synthetic.size()) - 1);
      ConditionRecord worst;
      for (int draw = 0; draw < config.ablation.random_draws; ++draw) {
        const int k = pick(rng);
        diag.random_k.push_back(k);
        ConditionRecord r = mask_full_at(k);
        r.condition = "random_k";
        say("  random_k draw " + std::to_string(draw) + " k=" + std::to_string(k) + tag +
            ": rank-1 " + std::to_string(r.rank1));
        if (draw == 0 || r.rank1 < worst.rank1) worst = r;
        report.records.push_back(std::move(r));
      }
      worst.condition = "random_k_min";
      report.records.push_back(std::move(worst));
    }
    diag.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    report.seeds.push_back(diag);
  };
  const std::size_t workers =
      std::clamp<std::size_t>(std::thread::hardware_concurrency(), 1, seeds.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < seeds.size(); i = next++) {
        try {
          run_seed(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  AblationReport report;
  for (auto& p : partial) {
    for (auto& r : p.records) report.records.push_back(std::move(r));
    for (auto& d : p.seeds) report.seeds.push_back(std::move(d));
  }
  return report;
}

}  // namespace illumreid::experiment
