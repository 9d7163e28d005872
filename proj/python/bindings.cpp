#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <string>
#include <vector>

#include "partmatch/checkpoint.hpp"
#include "partmatch/cmpm.hpp"
#include "partmatch/errors.hpp"
#include "partmatch/retrieval.hpp"
#include "partmatch/trainer.hpp"

namespace py = pybind11;
using namespace partmatch;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_matrix(const Array& a, const char* what) {
  if (a.ndim() != 2) throw ShapeError(std::string(what) + " must be two-dimensional");
  const auto rows = static_cast<std::size_t>(a.shape(0));
  const auto cols = static_cast<std::size_t>(a.shape(1));
  return Tensor(Shape{rows, cols}, std::vector<double>(a.data(), a.data() + rows * cols));
}

Array to_array(const Tensor& t) {
  std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
  Array out(shape);
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

py::dict topk_dict(const TopK& t) {
  py::dict d;
  d["top1"] = t.top1;
  d["top5"] = t.top5;
  d["top10"] = t.top10;
  return d;
}

py::list history_list(const std::vector<EpochRecord>& history) {
  py::list out;
  for (const auto& r : history) {
    py::dict d;
    d["epoch"] = r.epoch;
    d["loss"] = r.loss;
    d["lr"] = r.lr;
    d["eval"] = r.eval ? py::object(topk_dict(*r.eval)) : py::none();
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of partmatch";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<LabelError>(m, "LabelError", PyExc_ValueError);
  py::register_exception<LookupError>(m, "LookupError", PyExc_KeyError);
  py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);

  m.def("default_config_json", [] { return to_json_text(TrainConfig{}); });
  m.def("reference_config_json", [] { return to_json_text(TrainConfig::reference()); });
  m.def("normalize_config_json", [](const std::string& text) { return to_json_text(parse_train_config(text)); });
  m.def("default_spec_json", [] { return to_json_text(SyntheticSpec{}); });
  m.def("normalize_spec_json", [](const std::string& text) { return to_json_text(parse_synthetic_spec(text)); });

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("separability", [](const Dataset& d) { return d.separability; })
      .def_property_readonly("spec_json", [](const Dataset& d) { return to_json_text(d.spec); })
      .def("split_sizes",
           [](const Dataset& d, const std::string& split) {
             const SplitIndex s = d.split(parse_split(split));
             return py::make_tuple(s.images.size(), s.texts.size());
           })
      .def("image", [](const Dataset& d, std::size_t i) { return to_array(d.images.at(i)); })
      .def("save", [](const Dataset& d, const std::string& dir) { save_dataset(d, dir); });
  m.def("generate", [](const std::string& spec_json) { return generate(parse_synthetic_spec(spec_json)); });
  m.def("load_dataset", [](const std::string& dir) { return load_dataset(dir); });

  py::class_<Checkpoint>(m, "Checkpoint")
      .def_property_readonly("epoch", [](const Checkpoint& c) { return c.epoch; })
      .def_property_readonly("step", [](const Checkpoint& c) { return c.step; })
      .def_property_readonly("config_json", [](const Checkpoint& c) { return to_json_text(c.config); })
      .def("array_names",
           [](const Checkpoint& c) {
             std::vector<std::string> names;
             for (const auto& a : c.arrays) names.push_back(a.name);
             return names;
           })
      .def("save", [](const Checkpoint& c, const std::string& path) { c.save(path); })
      .def("__eq__", [](const Checkpoint& a, const Checkpoint& b) { return a == b; });
  m.def("load_checkpoint", [](const std::string& path) { return Checkpoint::load(path); });

  m.def(
      "train",
      [](const std::string& config_json, const Dataset& dataset) {
        const TrainConfig config = parse_train_config(config_json);
        TrainResult r;
        {
          py::gil_scoped_release release;
          r = train(config, dataset);
        }
        return py::make_tuple(history_list(r.history), r.checkpoint);
      },
      py::arg("config_json"), py::arg("dataset"));
  m.def("evaluate", [](const Checkpoint& c, const Dataset& d, const std::string& split) {
    return topk_dict(evaluate(c, d, parse_split(split)));
  });
  m.def("embed", [](const Checkpoint& c, const Dataset& d, const std::string& split) {
    Model model(c.config.model, c.config.seed);
    load_model_state(model, c);
    const SplitEmbeddings e = embed_split(model, d, parse_split(split));
    py::dict out;
    out["images"] = to_array(e.images);
    out["image_ids"] = e.image_ids;
    out["texts"] = to_array(e.texts);
    out["text_ids"] = e.text_ids;
    return out;
  });

  m.def(
      "gradcheck",
      [](double step, double tolerance, std::uint64_t seed) {
        GradCheckConfig gc;
        gc.step = step;
        gc.tolerance = tolerance;
        gc.seed = seed;
        const GradCheckReport rep = gradcheck(gc);
        py::dict d;
        d["passed"] = rep.passed;
        d["max_rel_error"] = rep.max_rel_error;
        d["elements_checked"] = rep.elements_checked;
        py::list entries;
        for (const auto& e : rep.entries) entries.append(py::make_tuple(e.name, e.max_rel_error));
        d["entries"] = entries;
        return d;
      },
      py::arg("step") = 1e-5, py::arg("tolerance") = 1e-4, py::arg("seed") = 3);

  m.def("lr_schedule", [](std::size_t epoch, const std::string& config_json) {
    return lr_schedule(epoch, parse_train_config(config_json));
  });

  m.def(
      "cmpm_loss",
      [](const Array& img, const Array& txt, const std::vector<int>& image_ids, const std::vector<int>& text_ids,
         double epsilon) {
        const MatchLabels y = MatchLabels::from_identities(image_ids, text_ids);
        return cmpm_bidirectional(Var(to_matrix(img, "img")), Var(to_matrix(txt, "txt")), y, epsilon).value().item();
      },
      py::arg("img"), py::arg("txt"), py::arg("image_ids"), py::arg("text_ids"), py::arg("epsilon") = 1e-8);
  m.def("match_probabilities", [](const Array& img, const Array& txt) {
    return to_array(match_probabilities(Var(to_matrix(img, "img")), Var(to_matrix(txt, "txt"))).value());
  });
  m.def("cosine_similarity", [](const Array& q, const Array& g) {
    return to_array(cosine_similarity_matrix(to_matrix(q, "queries"), to_matrix(g, "gallery")));
  });
  m.def(
      "topk_accuracy",
      [](const Array& sims, const std::vector<int>& query_ids, const std::vector<int>& gallery_ids,
         const std::vector<std::size_t>& ks) { return topk_accuracy(to_matrix(sims, "sims"), query_ids, gallery_ids, ks); },
      py::arg("sims"), py::arg("query_ids"), py::arg("gallery_ids"), py::arg("ks") = std::vector<std::size_t>{1, 5, 10});
}
