#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <vector>

#include "negmem/cli.hpp"
#include "negmem/engine.hpp"
#include "negmem/error.hpp"
#include "negmem/eval.hpp"
#include "negmem/features.hpp"
#include "negmem/memory.hpp"
#include "negmem/svm.hpp"

namespace py = pybind11;
using namespace negmem;

namespace {

using FloatRows = py::array_t<float, py::array::c_style | py::array::forcecast>;
using IdArray = py::array_t<ClassId, py::array::c_style | py::array::forcecast>;

std::vector<FeatureVector> rows_of(const FloatRows& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D array of feature rows");
  const auto n = static_cast<std::size_t>(a.shape(0));
  const auto d = static_cast<std::size_t>(a.shape(1));
  const float* p = a.data();
  std::vector<FeatureVector> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i].assign(p + i * d, p + (i + 1) * d);
  return out;
}

py::array_t<float> to_array(const std::vector<FeatureVector>& rows, std::size_t d) {
  py::array_t<float> out({rows.size(), d});
  auto m = out.mutable_unchecked<2>();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t k = 0; k < d; ++k) m(i, k) = rows[i][k];
  }
  return out;
}

FeatureTable table_of(const IdArray& labels, const FloatRows& x) {
  auto rows = rows_of(x);
  if (static_cast<std::size_t>(labels.size()) != rows.size()) {
    throw py::value_error("labels and rows differ in length");
  }
  FeatureTable t;
  t.dimension = static_cast<std::size_t>(x.shape(1));
  const ClassId* ids = labels.data();
  for (std::size_t i = 0; i < rows.size(); ++i) t.records.push_back({ids[i], std::move(rows[i])});
  return t;
}

py::tuple table_to_py(const FeatureTable& t) {
  py::array_t<ClassId> labels(static_cast<py::ssize_t>(t.records.size()));
  auto l = labels.mutable_unchecked<1>();
  std::vector<FeatureVector> rows;
  rows.reserve(t.records.size());
  for (std::size_t i = 0; i < t.records.size(); ++i) {
    l(static_cast<py::ssize_t>(i)) = t.records[i].class_id;
    rows.push_back(t.records[i].values);
  }
  return py::make_tuple(labels, to_array(rows, t.dimension));
}

SolverConfig solver_config(double c, double tolerance, std::size_t max_epochs, std::uint64_t seed,
                           double positive_weight) {
  SolverConfig cfg;
  cfg.c = c;
  cfg.tolerance = tolerance;
  cfg.max_epochs = max_epochs;
  cfg.seed = seed;
  cfg.positive_weight = positive_weight;
  cfg.validate();
  return cfg;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["state"] = r.state_index;
  d["classes"] = r.known_class_count;
  d["top1"] = r.top1;
  d["top5"] = r.top5;
  d["per_class"] = r.per_class_accuracy;
  d["wall_time"] = r.wall_time;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "negmem core bindings";

  py::register_exception<Error>(m, "Error", PyExc_RuntimeError);

  py::class_<LinearClassifier>(m, "LinearClassifier")
      .def_readonly("class_id", &LinearClassifier::class_id)
      .def_readonly("weights", &LinearClassifier::weights)
      .def_readonly("bias", &LinearClassifier::bias)
      .def_readonly("c_used", &LinearClassifier::c_used)
      .def("score", [](const LinearClassifier& c, const std::vector<float>& x) { return score(c, x); })
      .def("__repr__", [](const LinearClassifier& c) {
        return "<LinearClassifier class_id=" + std::to_string(c.class_id) +
               " dim=" + std::to_string(c.dimension()) + ">";
      });

  m.def("normalize", [](const std::vector<float>& v) { return l2_normalize(v); }, py::arg("v"),
        "Return v scaled to unit L2 norm.");

  m.def(
      "load_features",
      [](const std::string& path, const std::string& format) {
        return table_to_py(load_samples(path, parse_format(format)));
      },
      py::arg("path"), py::arg("format") = "binary",
      "Read a labeled feature file. Returns (labels, rows) with rows L2-normalized.");

  m.def(
      "save_features",
      [](const std::string& path, const IdArray& labels, const FloatRows& x, const std::string& format) {
        write_feature_table(table_of(labels, x), path, parse_format(format));
      },
      py::arg("path"), py::arg("labels"), py::arg("rows"), py::arg("format") = "binary");

  m.def(
      "train_svm",
      [](const FloatRows& positives, const FloatRows& negatives, double c, double tolerance,
         std::size_t max_epochs, std::uint64_t seed, double positive_weight) {
        const auto pos = rows_of(positives);
        const auto neg = rows_of(negatives);
        const std::vector<FeatureView> pv(pos.begin(), pos.end()), nv(neg.begin(), neg.end());
        py::gil_scoped_release release;
        return train_svm(pv, nv, solver_config(c, tolerance, max_epochs, seed, positive_weight));
      },
      py::arg("positives"), py::arg("negatives"), py::arg("c") = 1.0, py::arg("tolerance") = 1e-4,
      py::arg("max_epochs") = 1000, py::arg("seed") = 0, py::arg("positive_weight") = 1.0);

  m.def(
      "dual_gap",
      [](const LinearClassifier& clf, const FloatRows& positives, const FloatRows& negatives, double c,
         double positive_weight) {
        const auto pos = rows_of(positives);
        const auto neg = rows_of(negatives);
        const std::vector<FeatureView> pv(pos.begin(), pos.end()), nv(neg.begin(), neg.end());
        return dual_gap(clf, pv, nv, solver_config(c, 1e-4, 1, 0, positive_weight));
      },
      py::arg("classifier"), py::arg("positives"), py::arg("negatives"), py::arg("c") = 1.0,
      py::arg("positive_weight") = 1.0);

  m.def(
      "greedy_diversify", [](const FloatRows& items, std::size_t n) { return greedy_diversify(rows_of(items), n); },
      py::arg("items"), py::arg("n"));

  m.def(
      "compute_quota",
      [](const std::map<ClassId, std::size_t>& available, std::size_t budget) {
        std::vector<QuotaRequest> reqs;
        for (const auto& [id, n] : available) reqs.push_back({id, n});
        return compute_quota(reqs, budget).per_class;
      },
      py::arg("available"), py::arg("budget"));

  m.def(
      "generate_synthetic",
      [](std::size_t classes, std::size_t dim, std::size_t train_per_class, std::size_t test_per_class,
         double separation, std::uint64_t seed) {
        SyntheticSpec spec{classes, dim, train_per_class, test_per_class, separation, seed, 0};
        const auto data = generate_synthetic(spec);
        py::dict out;
        out["train"] = table_to_py(data.train);
        out["test"] = table_to_py(data.test);
        out["means"] = to_array(data.means, dim);
        out["noise_scale"] = data.noise_scale;
        return out;
      },
      py::arg("classes"), py::arg("dim"), py::arg("train_per_class") = 100, py::arg("test_per_class") = 20,
      py::arg("separation") = 6.0, py::arg("seed") = 0);

  m.def(
      "run_experiment",
      [](const IdArray& train_labels, const FloatRows& train_rows, std::optional<IdArray> test_labels,
         std::optional<FloatRows> test_rows, const std::string& strategy, std::size_t memory_budget,
         std::size_t batch_size, std::vector<double> c_grid, std::size_t validation_per_class,
         std::uint64_t seed, std::optional<FloatRows> external, std::size_t workers) {
        ExperimentConfig cfg;
        cfg.strategy = parse_strategy(strategy);
        cfg.memory_budget = memory_budget;
        cfg.batch_size = batch_size;
        cfg.c_grid = std::move(c_grid);
        cfg.validation_per_class = validation_per_class;
        cfg.seed = seed;
        cfg.workers = workers;

        auto table = table_of(train_labels, train_rows);
        for (auto& r : table.records) normalize_in_place(r.values);
        const auto dataset = split_dataset(table, validation_per_class, seed);
        std::vector<LabeledSample> eval;
        if (test_labels && test_rows) {
          eval = table_of(*test_labels, *test_rows).records;
          for (auto& s : eval) normalize_in_place(s.values);
        }
        std::vector<FeatureVector> ext;
        if (external) {
          ext = rows_of(*external);
          for (auto& v : ext) normalize_in_place(v);
        }
        ProtocolResult result;
        {
          py::gil_scoped_release release;
          result = run_protocol(dataset, cfg.plan(dataset), cfg, eval, ext);
        }
        py::list reports;
        for (const auto& r : result.reports) reports.append(report_dict(r));
        py::dict out;
        out["reports"] = reports;
        out["c"] = result.states.back().c_value;
        std::vector<LinearClassifier> classifiers;
        for (const auto& [id, c] : result.states.back().classifiers) classifiers.push_back(c);
        out["classifiers"] = classifiers;
        return out;
      },
      py::arg("train_labels"), py::arg("train_rows"), py::arg("test_labels") = py::none(),
      py::arg("test_rows") = py::none(), py::arg("strategy") = "rand", py::arg("memory_budget") = 20000,
      py::arg("batch_size") = 10, py::arg("c_grid") = default_c_grid(), py::arg("validation_per_class") = 20,
      py::arg("seed") = 0, py::arg("external") = py::none(), py::arg("workers") = 1,
      "Run the incremental protocol in memory and return per-state reports.");

  m.def(
      "cli",
      [](std::vector<std::string> args) {
        args.insert(args.begin(), "negmem");
        std::vector<const char*> argv;
        for (const auto& a : args) argv.push_back(a.c_str());
        return run_cli(static_cast<int>(argv.size()), argv.data());
      },
      py::arg("args"), "Run the command line tool in-process; returns its exit code.");
}
