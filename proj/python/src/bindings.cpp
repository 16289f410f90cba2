#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "illumreid/errors.hpp"
#include "illumreid/eval.hpp"
#include "illumreid/illum_inference.hpp"
#include "illumreid/losses.hpp"
#include "illumreid/pipeline.hpp"
#include "illumreid/synth_data.hpp"

namespace py = pybind11;
using namespace illumreid;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

nn::Tensor to_tensor(const FloatArray& a) {
  if (a.ndim() != 4) throw ValidationError("expected an NCHW array");
  nn::Tensor t(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(2)),
               static_cast<int>(a.shape(3)));
  std::copy(a.data(), a.data() + a.size(), t.data());
  return t;
}

FloatArray from_image(const Image& img) {
  FloatArray out({img.height, img.width, 3});
  std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
  return out;
}

Image to_image(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ValidationError("expected an H x W x 3 array");
  Image img(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)));
  std::copy(a.data(), a.data() + a.size(), img.pixels.begin());
  return img;
}

std::vector<Image> to_images(const std::vector<FloatArray>& arrays) {
  std::vector<Image> out;
  for (const auto& a : arrays) out.push_back(to_image(a));
  return out;
}

eval::ProbeGallerySplit make_pg(const FloatArray& probe, const std::vector<int>& probe_ids,
                                const FloatArray& gallery, const std::vector<int>& gallery_ids) {
  auto fill = [](const FloatArray& f, const std::vector<int>& ids, std::vector<eval::Entry>& out) {
    if (f.ndim() != 2 || static_cast<std::size_t>(f.shape(0)) != ids.size()) {
      throw ValidationError("features must be (n, d) with one id per row");
    }
    const auto d = static_cast<std::size_t>(f.shape(1));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      out.push_back({std::vector<float>(f.data() + i * d, f.data() + (i + 1) * d), ids[i]});
    }
  };
  eval::ProbeGallerySplit s;
  fill(probe, probe_ids, s.probe);
  fill(gallery, gallery_ids, s.gallery);
  return s;
}

py::object to_py(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

}  // namespace

PYBIND11_MODULE(_illumreid, m) {
  m.doc() = "Illumination-aware synthetic-to-real adaptation for person re-identification";

  py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<TrainingDiverged>(m, "TrainingDiverged", PyExc_RuntimeError);
  py::register_exception<StaleCheckpoint>(m, "StaleCheckpoint", PyExc_RuntimeError);

  m.def("derive_seed", &derive_seed, py::arg("seed"), py::arg("tag"));

  // losses
  m.def("adversarial_loss",
        [](const std::vector<double>& real, const std::vector<double>& fake) {
          return translation::adversarial_loss(real, fake);
        },
        py::arg("real_scores"), py::arg("fake_scores"));
  m.def("cycle_loss",
        [](const FloatArray& s, const FloatArray& fgs, const FloatArray& x, const FloatArray& gfx) {
          return translation::cycle_loss(to_tensor(s), to_tensor(fgs), to_tensor(x), to_tensor(gfx));
        },
        py::arg("s"), py::arg("fgs"), py::arg("x"), py::arg("gfx"));
  m.def("identity_mapping_loss",
        [](const FloatArray& gx, const FloatArray& x, const FloatArray& fs, const FloatArray& s) {
          return translation::identity_mapping_loss(to_tensor(gx), to_tensor(x), to_tensor(fs), to_tensor(s));
        },
        py::arg("gx"), py::arg("x"), py::arg("fs"), py::arg("s"));
  m.def("ref_loss",
        [](const FloatArray& gs, const FloatArray& s) { return translation::ref_loss(to_tensor(gs), to_tensor(s)); },
        py::arg("gs"), py::arg("s"));
  m.def("masked_reg_loss",
        [](const FloatArray& gs, const FloatArray& s, std::pair<double, double> sigma_frac) {
          const auto t = to_tensor(gs);
          return translation::masked_reg_loss(t, to_tensor(s), translation::make_soft_matte(t.h(), t.w(), sigma_frac));
        },
        py::arg("gs"), py::arg("s"), py::arg("sigma_frac") = std::pair<double, double>{1.0 / 3.0, 0.25});
  m.def("soft_matte",
        [](int h, int w, std::pair<double, double> sigma_frac) {
          const auto matte = translation::make_soft_matte(h, w, sigma_frac);
          py::array_t<double> out({h, w});
          std::copy(matte.values.begin(), matte.values.end(), out.mutable_data());
          return out;
        },
        py::arg("height"), py::arg("width"), py::arg("sigma_frac") = std::pair<double, double>{1.0 / 3.0, 0.25});
  m.def("full_objective",
        [](double gan_g, double gan_f, double cycle, double identity, double mask, std::array<double, 3> lambdas) {
          return translation::full_objective({gan_g, gan_f, cycle, identity, mask},
                                             {lambdas[0], lambdas[1], lambdas[2]});
        },
        py::arg("gan_g"), py::arg("gan_f"), py::arg("cycle"), py::arg("identity"), py::arg("mask"),
        py::arg("lambdas") = std::array<double, 3>{10.0, 10.0, 5.0});

  // domain selection
  m.def("select_domain",
        [](const std::vector<int>& predictions, int num_classes) {
          const auto s = illum::select_domain(predictions, num_classes);
          return py::make_tuple(s.k_star, s.vote_counts);
        },
        py::arg("predictions"), py::arg("num_classes"));

  // evaluation
  m.def("cmc",
        [](const FloatArray& probe, const std::vector<int>& probe_ids, const FloatArray& gallery,
           const std::vector<int>& gallery_ids, const std::string& metric) {
          return eval::cmc(make_pg(probe, probe_ids, gallery, gallery_ids), eval::metric_from_string(metric))
              .accuracies;
        },
        py::arg("probe"), py::arg("probe_ids"), py::arg("gallery"), py::arg("gallery_ids"),
        py::arg("metric") = "cosine");
  m.def("stats_distance",
        [](const std::vector<FloatArray>& a, const std::vector<FloatArray>& b) {
          const auto ia = to_images(a);
          const auto ib = to_images(b);
          return eval::stats_distance(eval::image_stats(ia), eval::image_stats(ib));
        },
        py::arg("images_a"), py::arg("images_b"));

  // datasets
  m.def("read_dataset",
        [](const std::filesystem::path& dir) {
          const auto manifest = synth::read_manifest(dir);
          py::list images;
          std::vector<int> ids, domains;
          for (const auto& s : manifest.samples) {
            images.append(from_image(s.image));
            ids.push_back(s.identity_id);
            domains.push_back(s.domain_id);
          }
          py::dict d;
          d["name"] = manifest.name;
          d["images"] = images;
          d["identity_ids"] = ids;
          d["domain_ids"] = domains;
          return d;
        },
        py::arg("dir"));

  // pipeline
  m.def("validate_config",
        [](const std::string& text) { return to_py(pipeline::to_json(pipeline::parse_config(text))); },
        py::arg("text"), "Parse config JSON text and return it with all defaults filled in.");
  m.def("run_pipeline",
        [](const std::filesystem::path& config, const std::filesystem::path& out, bool force) {
          const auto cfg = pipeline::validate_config(config);
          pipeline::RunOptions opts;
          opts.out = out;
          opts.force = force;
          pipeline::RunManifest manifest;
          {
            py::gil_scoped_release release;
            manifest = pipeline::run_pipeline(cfg, opts);
          }
          return to_py(pipeline::to_json(manifest));
        },
        py::arg("config"), py::arg("out"), py::arg("force") = false);
}
