#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ehrtraj/codec.hpp"
#include "ehrtraj/io.hpp"
#include "ehrtraj/mask.hpp"
#include "ehrtraj/metrics.hpp"
#include "ehrtraj/pipeline.hpp"
#include "ehrtraj/simulator.hpp"
#include "ehrtraj/synth.hpp"

namespace py = pybind11;
using namespace ehrtraj;

// Records and outputs cross the boundary as JSON text; the Python package
// turns them into dicts.

namespace {

PatientRecord record_of(const std::string& text) { return record_from_json(Json::parse(text)); }

std::vector<PatientRecord> cohort_of(const std::vector<std::string>& texts) {
  std::vector<PatientRecord> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(record_of(t));
  return out;
}

Json diagnostics_json(const std::vector<Diagnostic>& ds) {
  Json out = Json::array();
  for (const auto& d : ds) out.push_back({{"line", d.line}, {"column", d.column}, {"message", d.message}});
  return out;
}

struct LoadedModel {
  PathwayModel model;
  std::optional<Summarizer> summarizer;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "ehrtraj native core";

  py::register_exception<RecordError>(m, "RecordError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  m.def("default_cohort_config", [] { return CohortConfig::defaults().to_json().dump(); });

  m.def("generate_cohort", [](const std::string& config) {
    const auto cfg = CohortConfig::from_json(Json::parse(config));
    std::vector<std::string> out;
    for (const auto& r : generate_cohort(cfg)) out.push_back(to_json(r).dump());
    return out;
  });

  m.def("read_cohort", [](const std::filesystem::path& p) {
    std::vector<std::string> out;
    for (const auto& r : read_cohort(p)) out.push_back(to_json(r).dump());
    return out;
  });

  m.def("write_cohort", [](const std::filesystem::path& p, const std::vector<std::string>& records) {
    write_cohort(p, cohort_of(records));
  });

  m.def("snapshot", [](const std::string& record, int t) { return to_json(snapshot(record_of(record), t)).dump(); });

  m.def("label_at", [](const std::string& record, int t) { return to_json(label_at(record_of(record), t)).dump(); });

  m.def("true_los", [](const std::string& record, int t) {
    std::map<std::string, int> out;
    for (const auto& [u, h] : true_los(record_of(record), t)) out[std::string(unit_name(u))] = h;
    return out;
  });

  m.def(
      "render_input",
      [](const std::string& record, int t, std::optional<int> window_hours, bool include_los) {
        RenderConfig cfg;
        cfg.window_hours = window_hours;
        cfg.include_los = include_los;
        return render_input(record_of(record), t, cfg).text();
      },
      py::arg("record"), py::arg("t"), py::arg("window_hours") = py::none(), py::arg("include_los") = true);

  m.def("render_output", [](const std::string& out) { return render_output(output_from_json(Json::parse(out))); });

  m.def("parse_output", [](const std::string& text) {
    const auto r = parse_output(text);
    return Json{{"status", std::string(status_name(r.status))},
                {"output", to_json(r.output)},
                {"diagnostics", diagnostics_json(r.diagnostics)}}
        .dump();
  });

  m.def("check_input", [](const std::string& text) { return diagnostics_json(check_input_text(text)).dump(); });

  m.def(
      "bottleneck_mask",
      [](int n, int m_slots, int o) {
        const auto mask = bottleneck_mask({n, m_slots, o});
        const auto size = static_cast<py::ssize_t>(mask.size());
        py::array_t<bool> out({size, size});
        auto v = out.mutable_unchecked<2>();
        for (py::ssize_t i = 0; i < size; ++i) {
          for (py::ssize_t j = 0; j < size; ++j) v(i, j) = mask.allowed(static_cast<int>(i), static_cast<int>(j));
        }
        return out;
      },
      py::arg("n"), py::arg("m"), py::arg("o"));

  m.def("event_f1", [](const std::vector<std::set<std::string>>& preds,
                       const std::vector<std::set<std::string>>& truths) {
    const auto r = event_f1(preds, truths);
    return py::make_tuple(r.micro, r.macro);
  });

  m.def(
      "section_accounting",
      [](std::size_t tokens, int m_slots, int max_section_tokens) {
        const auto c = section_accounting(tokens, {m_slots, max_section_tokens});
        return py::make_tuple(c.context_tokens, c.input_tokens);
      },
      py::arg("section_tokens"), py::arg("m") = 8, py::arg("max_section_tokens") = 5000);

  m.def(
      "train_text_model",
      [](const std::vector<std::string>& records, const std::filesystem::path& out, long steps, double lr,
         std::uint64_t seed, int layers, int heads, int dim, int ff, int max_seq, bool include_los) {
        const auto cohort = cohort_of(records);
        PathwaySetup setup;
        setup.net = {0, max_seq, layers, heads, dim, ff};
        setup.pathway.include_los = include_los;
        setup.train.steps = steps;
        setup.train.lr = lr;
        setup.train.seed = seed;
        setup.train.eval_every = 0;
        setup.val_samples = 0;
        py::gil_scoped_release release;
        const auto trained = train_pathway(cohort, {}, corpus_vocab(cohort), setup, nullptr);
        save_checkpoint(out, to_checkpoint(trained));
        return trained.result.final_loss;
      },
      py::arg("records"), py::arg("out"), py::arg("steps") = 200, py::arg("lr") = 3e-3, py::arg("seed") = 1,
      py::arg("layers") = 2, py::arg("heads") = 4, py::arg("dim") = 32, py::arg("ff") = 128,
      py::arg("max_seq") = 256, py::arg("include_los") = true);

  py::class_<LoadedModel>(m, "Model")
      .def(py::init([](const std::filesystem::path& path, std::optional<std::filesystem::path> summarizer) {
             auto lm = std::make_unique<LoadedModel>();
             lm->model = pathway_from_checkpoint(load_checkpoint(path));
             if (summarizer) lm->summarizer = summarizer_from_checkpoint(load_checkpoint(*summarizer));
             if (uses_summaries(lm->model.config().variant) && !lm->summarizer) {
               throw std::invalid_argument("this model variant needs a summarizer checkpoint");
             }
             return lm;
           }),
           py::arg("path"), py::arg("summarizer") = py::none())
      .def_property_readonly("variant",
                             [](const LoadedModel& lm) { return std::string(variant_name(lm.model.config().variant)); })
      .def_property_readonly("num_params", [](const LoadedModel& lm) { return lm.model.net().num_params(); })
      .def(
          "simulate",
          [](const LoadedModel& lm, const std::string& record, int t0, int max_steps, std::uint64_t seed,
             double temperature, int top_k, double top_p, int retries) {
            const auto r = record_of(record);
            DecodeConfig decode;
            decode.temperature = temperature;
            decode.top_k = top_k;
            decode.top_p = top_p;
            SimConfig cfg;
            cfg.max_steps = max_steps;
            cfg.retries = retries;
            cfg.schema = schema_of({r});
            py::gil_scoped_release release;
            ModelPredictor predictor(lm.model, lm.summarizer ? &*lm.summarizer : nullptr, decode);
            Rng rng(seed);
            return simulate(r, t0, predictor, cfg, rng).to_json().dump();
          },
          py::arg("record"), py::arg("t0"), py::arg("max_steps") = 24, py::arg("seed") = 1,
          py::arg("temperature") = 0.7, py::arg("top_k") = 20, py::arg("top_p") = 0.8, py::arg("retries") = 3);
}
