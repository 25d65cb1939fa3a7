// Python surface over the C++ core. Matrices cross as float64 numpy arrays.
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "bigsl/errors.hpp"
#include "bigsl/evaluation.hpp"
#include "bigsl/export.hpp"
#include "bigsl/fusion.hpp"
#include "bigsl/graph_network.hpp"
#include "bigsl/ingest.hpp"
#include "bigsl/synthetic.hpp"
#include "bigsl/trainer.hpp"

namespace py = pybind11;
using namespace bigsl;

namespace {

RunConfig config_from(const std::string& profile, const std::map<std::string, std::string>& overrides) {
  RunConfig rc = profile_defaults(profile);
  for (const auto& [k, v] : overrides) apply_setting(rc, k, v);
  rc.train = with_ablation(rc.train, rc.train.ablation);
  rc.train.validate();
  return rc;
}

py::dict metric_dict(const MetricSet& m) {
  py::dict d;
  d["sample_count"] = m.sample_count;
  d["defined"] = m.defined;
  if (m.defined) {
    for (std::size_t i = 0; i < kCutoffs.size(); ++i) d[py::str("acc@" + std::to_string(kCutoffs[i]))] = m.acc_at[i];
    d["mrr"] = m.mrr;
  }
  return d;
}

py::dict report_dict(const EvalReport& r) {
  py::dict d;
  d["run_id"] = r.run_id;
  d["variant"] = r.variant;
  d["all"] = metric_dict(r.all);
  d["next_new"] = metric_dict(r.next_new);
  return d;
}

py::dict epoch_dict(const EpochRecord& r) {
  py::dict d;
  d["epoch"] = r.epoch;
  d["loss"] = r.mean.total;
  d["ce"] = r.mean.ce;
  d["hsl"] = r.mean.hsl;
  d["sh"] = r.mean.sh;
  d["sp"] = r.mean.sp;
  d["grad_norm"] = r.grad_norm;
  return d;
}

std::vector<double> row_values(py::array_t<double, py::array::c_style | py::array::forcecast> a) {
  if (a.ndim() != 1) throw ShapeMismatch("expected a 1-d score vector");
  return std::vector<double>(a.data(), a.data() + a.size());
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "BiGSL next-POI recommender core";

  py::register_exception<Error>(m, "BigslError");

  // ingest
  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("num_users", &Dataset::num_users)
      .def_property_readonly("num_pois", &Dataset::num_pois)
      .def_property_readonly("num_checkins", &Dataset::num_checkins)
      .def_property_readonly("is_split", &Dataset::is_split)
      .def_property_readonly("poi_ids", [](const Dataset& d) {
        std::vector<std::string> out;
        for (const auto& p : d.pois) out.push_back(p.id);
        return out;
      })
      .def("sequence", [](const Dataset& d, std::size_t user) {
        if (user >= d.num_users()) throw py::index_error("user out of range");
        std::vector<int> pois;
        for (const auto& v : d.sequences[user].visits) pois.push_back(v.poi);
        return py::make_tuple(pois, d.sequences[user].train_len);
      });

  m.def("load_dataset", [](const std::string& path) { return load_dataset(path); }, py::arg("path"));
  m.def(
      "preprocess",
      [](const std::string& input, const std::string& output, const std::string& profile,
         const std::map<std::string, std::string>& overrides) {
        const RunConfig rc = config_from(profile, overrides);
        Dataset ds = filter_dataset(read_checkin_file(input), rc.filter);
        split_train_test(ds, rc.split_ratio);
        save_dataset(output, ds, rc.slots);
        return ds;
      },
      py::arg("input"), py::arg("output"), py::arg("profile") = "desk",
      py::arg("overrides") = std::map<std::string, std::string>{},
      "Filter, index and split a raw check-in file and write the preprocessed dataset.");
  m.def(
      "write_synthetic",
      [](const std::string& path, std::uint64_t seed, int users) {
        SyntheticSpec spec;
        spec.seed = seed;
        spec.users = users;
        write_file_atomic(path, serialize_checkins(generate_synthetic(spec).checkins));
      },
      py::arg("path"), py::arg("seed") = 7, py::arg("users") = 300);
  m.def("spatial_features", [](const Dataset& d) { return build_spatial_features(d).features; });
  m.def(
      "temporal_features", [](const Dataset& d, std::size_t slots) { return build_temporal_features(d, slots).features; },
      py::arg("dataset"), py::arg("slots") = kDefaultSlots);

  // config
  m.def("profile", [](const std::string& name) { return profile_defaults(name).to_map(); }, py::arg("name") = "desk");
  m.def("config_keys", &config_keys);

  // structure learning
  m.def(
      "structure_embed",
      [](const Matrix& x, const Matrix& w1, const Matrix& b1, const Matrix& w2, const Matrix& b2) {
        return structure_embed(x, GslTransform{w1, b1, w2, b2});
      },
      py::arg("x"), py::arg("w1"), py::arg("b1"), py::arg("w2"), py::arg("b2"));
  m.def("pairwise_adjacency", py::overload_cast<const Matrix&>(&pairwise_adjacency), py::arg("z"));
  m.def("sparsify_normalize", py::overload_cast<const Matrix&, double, int>(&sparsify_normalize), py::arg("s"),
        py::arg("epsilon"), py::arg("top_k"));
  m.def(
      "kmeans",
      [](const Matrix& z, int k, int rounds, std::uint64_t seed) {
        Rng rng(seed);
        PrototypeSet p = kmeans_init(k);
        for (int r = 0; r < rounds; ++r) p = kmeans_estep(z, p, rng);
        return py::make_tuple(p.assignments, p.centroids, within_cluster_ss(z, p));
      },
      py::arg("z"), py::arg("k"), py::arg("rounds") = 10, py::arg("seed") = 0,
      "Returns (assignments, centroids, within-cluster sum of squares).");
  m.def(
      "hsl_loss",
      [](const Matrix& z, const std::vector<int>& assignments, const Matrix& centroids, double tau1) {
        PrototypeSet p;
        p.k = static_cast<int>(centroids.rows());
        p.centroids = centroids;
        p.assignments = assignments;
        p.seeded = true;
        return hsl_loss(z, p, tau1);
      },
      py::arg("z"), py::arg("assignments"), py::arg("centroids"), py::arg("tau1") = 0.1);

  // fusion
  m.def("shared_representation", py::overload_cast<const std::vector<Matrix>&>(&shared_representation));
  m.def(
      "shared_loss",
      [](const std::vector<Matrix>& views, const Matrix& shared, double tau2) {
        return shared_loss(views, shared, tau2);
      },
      py::arg("views"), py::arg("shared"), py::arg("tau2") = 0.5);
  m.def("orthogonality_loss", py::overload_cast<const std::vector<Matrix>&>(&orthogonality_loss));
  m.def(
      "attentive_fuse",
      [](const Matrix& shared, const std::vector<Matrix>& specific, const Matrix& a2) {
        Matrix w;
        Matrix fused = attentive_fuse(shared, specific, a2, &w);
        return py::make_tuple(fused, w);
      },
      py::arg("shared"), py::arg("specific"), py::arg("a2"), "Returns (fused, per-POI part weights).");

  // evaluation
  m.def("rank_of", [](py::array_t<double> scores, int target) { return rank_of(row_values(scores), target); });
  m.def("acc_at_k", [](const Matrix& scores, const std::vector<int>& targets, int k) {
    return acc_at_k(scores, targets, k);
  });
  m.def("mrr", [](const Matrix& scores, const std::vector<int>& targets) { return mrr(scores, targets); });

  // export
  m.def("edge_list_text", &edge_list_text);
  m.def("matrix_file_text", &matrix_file_text, py::arg("m"), py::arg("label") = "");
  m.def("parse_matrix_file", &parse_matrix_file);

  // training and inference
  m.def(
      "train",
      [](const std::string& dataset_path, const std::string& checkpoint_path, const std::string& profile,
         const std::map<std::string, std::string>& overrides, const std::function<void(py::dict)>& on_epoch) {
        RunConfig rc = config_from(profile, overrides);
        std::size_t slots = rc.slots;
        const Dataset ds = load_dataset(dataset_path, &slots);
        rc.slots = slots;
        rc.dataset = dataset_path;
        Trainer tr(rc, ds, build_views(ds, rc.train, rc.slots));
        py::list log;
        {
          tr.train([&](const EpochRecord& r) {
            py::dict d = epoch_dict(r);
            log.append(d);
            if (on_epoch) on_epoch(d);
          });
        }
        save_checkpoint(checkpoint_path, tr.checkpoint());
        return log;
      },
      py::arg("dataset"), py::arg("checkpoint"), py::arg("profile") = "desk",
      py::arg("overrides") = std::map<std::string, std::string>{}, py::arg("on_epoch") = nullptr,
      "Train from a preprocessed dataset, write the checkpoint, and return the per-epoch records.");

  py::class_<Model>(m, "Model")
      .def_static(
          "load", [](const std::string& path) { return model_from_checkpoint(load_checkpoint(path)); }, py::arg("path"))
      .def_property_readonly("num_pois", &Model::num_pois)
      .def_property_readonly("num_users", &Model::num_users)
      .def_property_readonly("variant", [](const Model& m) { return to_string(m.config().ablation); })
      .def("parameter_names", [](const Model& m) { return m.params().names(); })
      .def("parameter", [](const Model& m, const std::string& name) { return m.params().value(name); })
      .def("enriched_embeddings", &Model::enriched_embeddings)
      .def("fused", [](const Model& m) { return m.representations().fused; })
      .def("graphs",
           [](const Model& m) {
             py::dict out;
             const auto graphs = m.view_graphs();
             for (std::size_t v = 0; v < graphs.size(); ++v) {
               py::dict g;
               g["a_poi"] = graphs[v].graph.a_poi;
               g["a_hier"] = graphs[v].graph.a_hier;
               g["a_proto"] = graphs[v].graph.a_proto;
               g["assignments"] = graphs[v].graph.prototypes.assignments;
               out[py::str(to_string(m.views()[v].view))] = g;
             }
             return out;
           })
      .def("predict_test", [](const Model& m, const Dataset& ds) { return m.predict(ds, test_samples(ds)); })
      .def(
          "evaluate", [](const Model& m, const Dataset& ds, const std::string& run_id) { return report_dict(evaluate(m, ds, run_id)); },
          py::arg("dataset"), py::arg("run_id") = "");
}
