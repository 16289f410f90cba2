// illumreid: command-line front end for the adaptation pipeline.

#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "illumreid/errors.hpp"
#include "illumreid/eval.hpp"
#include "illumreid/experiment.hpp"
#include "illumreid/illum_inference.hpp"
#include "illumreid/pipeline.hpp"
#include "illumreid/reid_model.hpp"
#include "illumreid/synth_data.hpp"
#include "illumreid/translation.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace illumreid;

namespace {

enum Exit { kOk = 0, kFailure = 1, kValidation = 2, kDiverged = 3, kStale = 4 };

struct Globals {
  std::uint64_t seed = 0;
  std::string out;
  std::string config;
  bool force = false;
};

void require_out(const Globals& g, const char* what) {
  if (g.out.empty()) throw ValidationError(std::string("--out ") + what + " is required");
}

void write_json(const json& j, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw ValidationError("cannot write " + path.string());
  os << j.dump(2) << "\n";
}

json read_json(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
  }
}

std::vector<synth::DatasetManifest> read_many(const std::vector<std::string>& dirs) {
  std::vector<synth::DatasetManifest> out;
  for (const auto& d : dirs) {
    for (auto& m : synth::read_manifests(d)) out.push_back(std::move(m));
  }
  if (out.empty()) throw ValidationError("no datasets found");
  return out;
}

std::vector<Image> images_of(const synth::DatasetManifest& m) {
  std::vector<Image> out;
  for (const auto& s : m.samples) out.push_back(s.image);
  return out;
}

TrainConfig train_config(const Globals& g, double lr, int epochs, int batch) {
  TrainConfig c;
  c.seed = g.seed;
  c.learning_rate = lr;
  c.epochs = epochs;
  c.batch_size = batch;
  return c;
}

std::string format_domain(int id) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "domain_%03d", id);
  return buf;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Illumination-aware synthetic-to-real adaptation for person re-identification"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "Random seed")->capture_default_str();
  app.add_option("--out", g.out, "Output file or directory");
  app.add_option("--config", g.config, "Experiment config file (JSON)");
  app.add_flag("--force", g.force, "Recompute stages whose checkpoints are stale");
  app.fallthrough();

  std::function<void()> action;

  // gen-data
  int identities = 20, illums = 12, per_id = 6, height = 64, width = 32;
  auto* gen = app.add_subcommand("gen-data", "Render N synthetic illumination domains");
  gen->add_option("--identities", identities, "Number of identities P")->capture_default_str();
  gen->add_option("--illums", illums, "Number of illumination conditions N")->capture_default_str();
  gen->add_option("--per-id", per_id, "Samples per identity and domain")->capture_default_str();
  gen->add_option("--height", height)->capture_default_str();
  gen->add_option("--width", width)->capture_default_str();
  gen->callback([&] {
    action = [&] {
      require_out(g, "DIR");
      const auto ids = synth::sample_identities(identities, derive_seed(g.seed, 1));
      const auto catalog = synth::sample_illuminations(illums, derive_seed(g.seed, 2));
      json cat = {{"identities", json::array()}, {"catalog", json::array()}};
      for (const auto& i : ids) cat["identities"].push_back(synth::to_json(i));
      for (const auto& i : catalog) cat["catalog"].push_back(synth::to_json(i));
      for (const auto& illum : catalog) {
        const auto m = synth::generate_domain(ids, illum, per_id, derive_seed(g.seed, 100 + illum.illum_id),
                                              {height, width});
        synth::write_manifest(m, fs::path(g.out) / format_domain(illum.illum_id));
      }
      write_json(cat, fs::path(g.out) / "catalog.json");
      std::cout << "wrote " << illums << " domains x " << identities * per_id << " images to " << g.out
                << "\n";
    };
  });

  // gen-target
  std::string illum_spec, catalog_file;
  double gap_sigma = 0.02;
  int first_id = 100000;
  bool no_texture = false, no_blur = false;
  auto* gent = app.add_subcommand("gen-target", "Render a \"real\" target camera");
  gent->add_option("--illum-spec", illum_spec, "Illumination spec JSON file")->required();
  gent->add_option("--gap-sigma", gap_sigma, "Sensor noise sigma")->capture_default_str();
  gent->add_option("--identities", identities, "Number of identities")->capture_default_str();
  gent->add_option("--per-id", per_id, "Samples per identity")->capture_default_str();
  gent->add_option("--first-id", first_id, "First identity id")->capture_default_str();
  gent->add_option("--catalog", catalog_file, "catalog.json of the training domains (held-out check)");
  gent->add_flag("--no-texture", no_texture, "Flat background");
  gent->add_flag("--no-blur", no_blur, "Skip the optics blur");
  gent->add_option("--height", height)->capture_default_str();
  gent->add_option("--width", width)->capture_default_str();
  gent->callback([&] {
    action = [&] {
      require_out(g, "DIR");
      const auto spec = synth::illumination_from_json(read_json(illum_spec));
      std::vector<synth::IlluminationSpec> catalog;
      if (!catalog_file.empty()) {
        for (const auto& c : read_json(catalog_file).at("catalog")) {
          catalog.push_back(synth::illumination_from_json(c));
        }
      }
      const auto ids = synth::sample_identities(identities, derive_seed(g.seed, 1), first_id);
      synth::RealnessGap gap{gap_sigma, !no_texture, !no_blur};
      const auto m = synth::generate_target_domain(ids, spec, per_id, gap, g.seed, catalog, {height, width});
      synth::write_manifest(m, g.out);
      std::cout << "wrote " << m.size() << " target images to " << g.out << "\n";
    };
  });

  // train-reid
  std::vector<std::string> data_dirs;
  int epochs = 12, batch = 32;
  double lr = 0.05;
  auto* treid = app.add_subcommand("train-reid", "Train the identity feature extractor jointly");
  treid->add_option("--data", data_dirs, "Dataset directories")->required()->delimiter(',');
  treid->add_option("--epochs", epochs)->capture_default_str();
  treid->add_option("--lr", lr)->capture_default_str();
  treid->add_option("--batch", batch)->capture_default_str();
  treid->callback([&] {
    action = [&] {
      require_out(g, "CKPT");
      const auto res = reid::train_joint(read_many(data_dirs), train_config(g, lr, epochs, batch));
      reid::save_checkpoint(res.model, g.out);
      std::cout << "train accuracy " << res.log.final_accuracy << ", " << res.model.num_classes()
                << " identities -> " << g.out << "\n";
    };
  });

  // finetune
  std::string ckpt, data_dir;
  int ft_epochs = 8, ft_batch = 16;
  double ft_lr = 0.01;
  auto* ft = app.add_subcommand("finetune", "Fine-tune a feature extractor on translated images");
  ft->add_option("--ckpt", ckpt)->required();
  ft->add_option("--data", data_dir)->required();
  ft->add_option("--epochs", ft_epochs)->capture_default_str();
  ft->add_option("--lr", ft_lr)->capture_default_str();
  ft->add_option("--batch", ft_batch)->capture_default_str();
  ft->callback([&] {
    action = [&] {
      require_out(g, "CKPT2");
      const auto model = reid::load_checkpoint(ckpt);
      const auto res = reid::finetune(model, synth::read_manifest(data_dir),
                                      train_config(g, ft_lr, ft_epochs, ft_batch));
      reid::save_checkpoint(res.model, g.out);
      std::cout << "fine-tune accuracy " << res.log.final_accuracy << " -> " << g.out << "\n";
    };
  });

  // train-illum
  int il_epochs = 8;
  double holdout = 0.2;
  auto* till = app.add_subcommand("train-illum", "Train the N-way illumination classifier");
  till->add_option("--data", data_dir, "Directory of synthetic domain datasets")->required();
  till->add_option("--epochs", il_epochs)->capture_default_str();
  till->add_option("--holdout", holdout)->capture_default_str();
  till->callback([&] {
    action = [&] {
      require_out(g, "CKPT");
      auto domains = synth::read_manifests(data_dir);
      const auto res =
          illum::train_illum_classifier(domains, train_config(g, 0.05, il_epochs, 32), holdout);
      illum::save_checkpoint(res.classifier, g.out);
      std::cout << "held-out accuracy " << res.heldout_accuracy << " over " << domains.size()
                << " domains -> " << g.out << "\n";
    };
  });

  // infer-illum
  std::string target_dir;
  auto* inf = app.add_subcommand("infer-illum", "Select the synthetic domain closest to a target camera");
  inf->add_option("--ckpt", ckpt)->required();
  inf->add_option("--target", target_dir)->required();
  inf->callback([&] {
    action = [&] {
      require_out(g, "selection.json");
      const auto classifier = illum::load_checkpoint(ckpt);
      const auto sel = illum::infer_domain(classifier, images_of(synth::read_manifest(target_dir)));
      write_json({{"k_star", sel.k_star},
                  {"domain_id", sel.domain_id},
                  {"vote_counts", sel.vote_counts},
                  {"n_images", sel.n_images}},
                 g.out);
      std::cout << "k* = " << sel.k_star << " (domain " << sel.domain_id << ")\n";
    };
  });

  // train-translate
  std::string source_dir, ablation = "mask_full", gan_mode = "nonsaturating";
  int tr_epochs = 6;
  auto* ttr = app.add_subcommand("train-translate", "Train the synthetic-to-real translation");
  ttr->add_option("--source", source_dir)->required();
  ttr->add_option("--target", target_dir)->required();
  ttr->add_option("--ablation", ablation)
      ->check(CLI::IsMember({"none", "id", "ref", "mask_full"}))
      ->capture_default_str();
  ttr->add_option("--gan-mode", gan_mode)
      ->check(CLI::IsMember({"log_saturating", "nonsaturating", "least_squares"}))
      ->capture_default_str();
  ttr->add_option("--epochs", tr_epochs)->capture_default_str();
  ttr->callback([&] {
    action = [&] {
      require_out(g, "CKPT");
      const auto source = synth::read_manifest(source_dir);
      translation::TranslationConfig tc;
      tc.ablation = translation::ablation_from_string(ablation);
      tc.gan_mode = translation::gan_mode_from_string(gan_mode);
      tc.train.epochs = tr_epochs;
      tc.train.seed = g.seed;
      tc.arch.height = source.height;
      tc.arch.width = source.width;
      const auto res = translation::train_translation(source, synth::read_manifest(target_dir), tc);
      translation::save_checkpoint(res.model, g.out);
      for (std::size_t e = 0; e < res.history.size(); ++e) {
        const auto& h = res.history[e];
        std::cout << "epoch " << e << ": objective " << h.objective << " cycle " << h.cycle << " mask "
                  << h.mask << "\n";
      }
      std::cout << "cycle " << res.initial_cycle << " -> " << res.final_cycle << ", mask "
                << res.final_mask << " -> " << g.out << "\n";
    };
  });

  // translate
  auto* tr = app.add_subcommand("translate", "Apply G to a synthetic dataset");
  tr->add_option("--ckpt", ckpt)->required();
  tr->add_option("--source", source_dir)->required();
  tr->callback([&] {
    action = [&] {
      require_out(g, "DIR");
      const auto model = translation::load_checkpoint(ckpt);
      const auto m = translation::translate(model, synth::read_manifest(source_dir));
      synth::write_manifest(m, g.out);
      std::cout << "translated " << m.size() << " images -> " << g.out << "\n";
    };
  });

  // evaluate
  std::string probe_dir, gallery_dir, metric = "cosine";
  auto* ev = app.add_subcommand("evaluate", "CMC / rank-1 on a probe and gallery camera");
  ev->add_option("--ckpt", ckpt)->required();
  ev->add_option("--probe", probe_dir)->required();
  ev->add_option("--gallery", gallery_dir)->required();
  ev->add_option("--metric", metric)->check(CLI::IsMember({"cosine", "euclidean"}))->capture_default_str();
  ev->callback([&] {
    action = [&] {
      require_out(g, "cmc.json");
      const auto model = reid::load_checkpoint(ckpt);
      const auto curve = eval::evaluate(model, synth::read_manifest(probe_dir),
                                        synth::read_manifest(gallery_dir), g.seed,
                                        eval::metric_from_string(metric));
      json j = eval::to_json(curve);
      j["metric"] = metric;
      write_json(j, g.out);
      std::cout << "rank-1 " << curve.rank1() << " over " << curve.n_probes << " probes\n";
    };
  });

  // stats
  std::string versus_dir;
  auto* st = app.add_subcommand("stats", "Intensity / gradient histograms of a dataset");
  st->add_option("--data", data_dir)->required();
  st->add_option("--versus", versus_dir, "Second dataset; adds the chi-squared distance");
  st->callback([&] {
    action = [&] {
      require_out(g, "stats.json");
      const auto a = eval::image_stats(synth::read_manifest(data_dir));
      json j = eval::to_json(a);
      if (!versus_dir.empty()) {
        const double d = eval::stats_distance(a, eval::image_stats(synth::read_manifest(versus_dir)));
        j["distance"] = d;
        std::cout << "stats distance " << d << "\n";
      }
      write_json(j, g.out);
    };
  });

  // ablation
  auto* ab = app.add_subcommand("ablation", "Run the condition x seed rank-1 battery");
  ab->callback([&] {
    action = [&] {
      require_out(g, "report.json");
      if (g.config.empty()) throw ValidationError("--config FILE is required");
      const auto config = pipeline::validate_config(g.config);
      const auto report =
          experiment::run_ablation(config, [](const std::string& line) { std::cerr << line << "\n"; });
      const json j = experiment::to_json(report);
      write_json(j, g.out);
      for (const auto& [name, mean] : j.at("means").items()) {
        std::cout << name << ": mean rank-1 " << mean.get<double>() << "\n";
      }
    };
  });

  // run
  bool echo = false;
  auto* run = app.add_subcommand("run", "Full pipeline with resumable stages");
  run->add_flag("--echo-config", echo, "Print the validated config with all defaults and exit");
  run->callback([&] {
    action = [&] {
      if (g.config.empty()) throw ValidationError("--config FILE is required");
      auto config = pipeline::validate_config(g.config);
      if (app.get_option("--seed")->count() > 0) config.seed = g.seed;
      if (echo) {
        std::cout << pipeline::to_json(config).dump(2) << "\n";
        return;
      }
      pipeline::RunOptions opts;
      opts.out = g.out;
      opts.force = g.force;
      opts.progress = [](const std::string& line) { std::cerr << line << "\n"; };
      const auto m = pipeline::run_pipeline(config, opts);
      std::cout << "k* = " << m.k_star << " (domain " << m.k_star_domain_id << ")\n"
                << "rank-1 adapted " << m.metrics.at("rank1").get<double>() << ", baseline "
                << m.metrics.at("baseline_rank1").get<double>() << "\n";
    };
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kValidation;
  }
  try {
    if (action) action();
    return kOk;
  } catch (const ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kValidation;
  } catch (const TrainingDiverged& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kDiverged;
  } catch (const StaleCheckpoint& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kStale;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
}
