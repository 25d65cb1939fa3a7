// Command-line front end: preprocess, train, evaluate, export, inspect, ablate, synth.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "bigsl/config.hpp"
#include "bigsl/errors.hpp"
#include "bigsl/evaluation.hpp"
#include "bigsl/export.hpp"
#include "bigsl/ingest.hpp"
#include "bigsl/synthetic.hpp"
#include "bigsl/trainer.hpp"

namespace fs = std::filesystem;
using namespace bigsl;

namespace {

struct Common {
  std::string config_path;
  std::string seed;
  std::string profile;
  std::string ablation;
  std::string estep;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config_path, "flat key = value config file");
  cmd->add_option("--seed", c.seed, "seed for every stochastic decision");
  cmd->add_option("--profile", c.profile, "built-in defaults")->check(CLI::IsMember({"paper", "desk"}));
  cmd->add_option("--ablation", c.ablation, "model variant")
      ->check(CLI::IsMember({"full", "no-hsl", "no-psl", "no-shar", "no-spec", "no-shar-spec", "backbone"}));
  cmd->add_option("--estep", c.estep, "k-means cadence")->check(CLI::IsMember({"epoch", "batch"}));
}

RunConfig resolve(const Common& c) {
  std::map<std::string, std::string> values;
  if (!c.config_path.empty()) {
    if (!fs::exists(c.config_path)) throw Error("config not found: " + c.config_path);
    values = parse_config_text(read_file(c.config_path));
  }
  RunConfig rc = resolve_run_config(values, c.profile);
  if (!c.seed.empty()) apply_setting(rc, "seed", c.seed);
  if (!c.estep.empty()) apply_setting(rc, "estep", c.estep);
  if (!c.ablation.empty()) rc.train.ablation = ablation_from_string(c.ablation);
  rc.train = with_ablation(rc.train, rc.train.ablation);
  rc.train.validate();
  return rc;
}

Dataset load_split_dataset(const std::string& path, std::size_t* slots) {
  if (path.empty()) throw ConfigError("no dataset given (--dataset or config key 'dataset')");
  if (!fs::exists(path)) throw Error("dataset not found: " + path);
  Dataset ds = load_dataset(path, slots);
  if (!ds.is_split()) throw ConfigError("dataset has no train/test split: " + path);
  return ds;
}

Checkpoint load_checkpoint_checked(const std::string& path) {
  if (!fs::exists(path)) throw Error("checkpoint not found: " + path);
  return load_checkpoint(path);
}

void ensure_parent(const std::string& path) {
  const fs::path p = fs::path(path).parent_path();
  if (!p.empty()) fs::create_directories(p);
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    return;
  }
  ensure_parent(path);
  write_file_atomic(path, text);
}

std::size_t view_index(const Model& m, const std::string& name) {
  const ViewId v = view_from_string(name);
  for (std::size_t i = 0; i < m.views().size(); ++i)
    if (m.views()[i].view == v) return i;
  throw ConfigError("checkpoint has no " + name + " view");
}

std::string eval_json(const EvalReport& r) {
  nlohmann::ordered_json j;
  for (std::size_t i = 0; i < kCutoffs.size(); ++i) j["test_acc@" + std::to_string(kCutoffs[i])] = r.all.acc_at[i];
  j["test_mrr"] = r.all.mrr;
  return j.dump();
}

int run(int argc, char** argv) {
  CLI::App app{"BiGSL next-POI recommender"};
  app.require_subcommand(1);

  Common common;

  std::string raw_in, data_out;
  auto* pre = app.add_subcommand("preprocess", "filter, index and split raw check-ins");
  add_common(pre, common);
  pre->add_option("--input", raw_in, "raw check-ins (tsv, optionally gzip)")->required();
  pre->add_option("--output", data_out, "preprocessed dataset file")->required();

  std::string synth_out;
  int synth_users = 300;
  auto* synth = app.add_subcommand("synth", "write a planted-structure check-in file");
  add_common(synth, common);
  synth->add_option("--output", synth_out, "raw check-in file")->required();
  synth->add_option("--users", synth_users, "number of users");

  std::string dataset, workdir, resume;
  int epochs = -1;
  auto* train = app.add_subcommand("train", "train and checkpoint a model");
  add_common(train, common);
  train->add_option("--dataset", dataset, "preprocessed dataset file");
  train->add_option("--workdir", workdir, "output directory");
  train->add_option("--resume", resume, "continue from this checkpoint");
  train->add_option("--epochs", epochs, "override the epoch budget");

  std::string ckpt, out_dir, run_id;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score the test split");
  add_common(evaluate_cmd, common);
  evaluate_cmd->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  evaluate_cmd->add_option("--dataset", dataset, "preprocessed dataset (default: the one trained on)");
  evaluate_cmd->add_option("--out-dir", out_dir, "report directory (default: checkpoint directory)");
  evaluate_cmd->add_option("--run-id", run_id, "report key");

  std::string view = "spatial", which = "poi", output;
  auto* export_graph = app.add_subcommand("export-graph", "write one adjacency as a sorted edge list");
  add_common(export_graph, common);
  export_graph->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  export_graph->add_option("--view", view, "spatial|temporal");
  export_graph->add_option("--which", which, "poi|hier|proto")->check(CLI::IsMember({"poi", "hier", "proto"}));
  export_graph->add_option("--output", output, "edge-list file (default: stdout)");

  auto* inspect = app.add_subcommand("inspect-clusters", "per-prototype membership summary");
  add_common(inspect, common);
  inspect->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  inspect->add_option("--view", view, "spatial|temporal");
  inspect->add_option("--output", output, "summary file (default: stdout)");

  std::string what = "fused";
  auto* export_emb = app.add_subcommand("export-embeddings", "write representations as a matrix file");
  add_common(export_emb, common);
  export_emb->add_option("--checkpoint", ckpt, "checkpoint file")->required();
  export_emb->add_option("--what", what, "fused|enriched|shared|spatial|temporal");
  export_emb->add_option("--output", output, "matrix file (default: stdout)");

  std::string variants;
  auto* ablate = app.add_subcommand("ablate", "train and compare the ablation variants");
  add_common(ablate, common);
  ablate->add_option("--dataset", dataset, "preprocessed dataset file");
  ablate->add_option("--workdir", workdir, "output directory");
  ablate->add_option("--variants", variants, "comma-separated variants (default: the six-row table)");

  CLI11_PARSE(app, argc, argv);

  if (pre->parsed()) {
    const RunConfig rc = resolve(common);
    if (!fs::exists(raw_in)) throw Error("input not found: " + raw_in);
    Dataset ds = filter_dataset(read_checkin_file(raw_in), rc.filter);
    split_train_test(ds, rc.split_ratio);
    ensure_parent(data_out);
    save_dataset(data_out, ds, rc.slots);
    const double density = static_cast<double>(ds.num_checkins()) /
                           (static_cast<double>(ds.num_users()) * static_cast<double>(ds.num_pois()));
    std::printf("users %zu\npois %zu\ncheckins %zu\ndensity %.6f\n", ds.num_users(), ds.num_pois(), ds.num_checkins(),
                density);
    return 0;
  }

  if (synth->parsed()) {
    const RunConfig rc = resolve(common);
    SyntheticSpec spec;
    spec.seed = rc.train.seed;
    spec.users = synth_users;
    write_output(synth_out, serialize_checkins(generate_synthetic(spec).checkins));
    return 0;
  }

  if (train->parsed()) {
    RunConfig rc = resolve(common);
    if (!dataset.empty()) rc.dataset = dataset;
    if (!workdir.empty()) rc.workdir = workdir;
    if (epochs >= 0) rc.train.epochs = epochs;
    std::size_t slots = rc.slots;
    const Dataset ds = load_split_dataset(rc.dataset, &slots);
    rc.slots = slots;
    fs::create_directories(rc.workdir);
    const std::string ckpt_path = (fs::path(rc.workdir) / "checkpoint.bin").string();
    const std::string log_path = (fs::path(rc.workdir) / "train_log.jsonl").string();

    std::optional<Trainer> trainer;
    if (!resume.empty()) {
      Checkpoint c = load_checkpoint_checked(resume);
      c.config.workdir = rc.workdir;
      if (epochs >= 0) c.config.train.epochs = epochs;
      trainer.emplace(c, ds);
    } else {
      trainer.emplace(rc, ds, build_views(ds, rc.train, rc.slots));
    }
    const int eval_every = trainer->config().eval_every;
    std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw Error("cannot write log: " + log_path);
    trainer->train([&](const EpochRecord& r) {
      std::string extra;
      if (eval_every > 0 && r.epoch % eval_every == 0) extra = eval_json(bigsl::evaluate(trainer->model(), ds));
      log << epoch_log_line(r, extra) << "\n";
      log.flush();
      save_checkpoint(ckpt_path, trainer->checkpoint());
      std::fprintf(stderr, "epoch %d loss %.6f ce %.6f (%.1fs)\n", r.epoch, r.mean.total, r.mean.ce, r.seconds);
    });
    save_checkpoint(ckpt_path, trainer->checkpoint());
    const RunConfig& used = trainer->config();
    const Model& m = trainer->model();
    if (used.export_graphs && m.uses_graph()) {
      const auto graphs = m.view_graphs();
      for (std::size_t v = 0; v < graphs.size(); ++v) {
        const fs::path base = fs::path(rc.workdir) / ("graph_" + to_string(m.views()[v].view));
        write_file_atomic(base.string() + "_poi.tsv", edge_list_text(graphs[v].graph.a_poi));
        if (m.uses_prototypes()) {
          write_file_atomic(base.string() + "_hier.tsv", edge_list_text(graphs[v].graph.a_hier));
          write_file_atomic(base.string() + "_proto.tsv", edge_list_text(graphs[v].graph.a_proto));
        }
      }
    }
    if (used.export_embeddings) {
      write_file_atomic((fs::path(rc.workdir) / "fused.txt").string(), matrix_file_text(m.representations().fused, "fused"));
    }
    std::printf("checkpoint %s\nepochs %d\n", ckpt_path.c_str(), trainer->epoch());
    return 0;
  }

  if (evaluate_cmd->parsed()) {
    const Checkpoint c = load_checkpoint_checked(ckpt);
    const std::string ds_path = dataset.empty() ? c.config.dataset : dataset;
    const Dataset ds = load_split_dataset(ds_path, nullptr);
    const Model m = model_from_checkpoint(c);
    if (ds.num_pois() != m.num_pois() || ds.num_users() != m.num_users()) {
      throw ShapeMismatch("dataset does not match the checkpoint's users/POIs");
    }
    const std::string id = !run_id.empty() ? run_id : !c.config.run_id.empty() ? c.config.run_id : to_string(c.config.train.ablation);
    const EvalReport r = bigsl::evaluate(m, ds, id);
    const fs::path dir = out_dir.empty() ? fs::path(ckpt).parent_path() : fs::path(out_dir);
    if (!dir.empty()) fs::create_directories(dir);
    write_file_atomic((dir / "report.txt").string(), report_text(r));
    merge_report_file((dir / "reports.json").string(), r);
    std::cout << report_text(r);
    return 0;
  }

  if (export_graph->parsed()) {
    const Model m = model_from_checkpoint(load_checkpoint_checked(ckpt));
    const std::size_t v = view_index(m, view);
    const BiLevelGraph g = m.view_graphs()[v].graph;
    if (which != "poi" && !m.uses_prototypes()) throw ConfigError("this model has no prototype level");
    const Matrix& a = which == "poi" ? g.a_poi : which == "hier" ? g.a_hier : g.a_proto;
    write_output(output, edge_list_text(a));
    return 0;
  }

  if (inspect->parsed()) {
    const Model m = model_from_checkpoint(load_checkpoint_checked(ckpt));
    if (!m.uses_prototypes()) throw ConfigError("this model has no prototype level");
    write_output(output, cluster_summary(m.prototypes()[view_index(m, view)]));
    return 0;
  }

  if (export_emb->parsed()) {
    const Model m = model_from_checkpoint(load_checkpoint_checked(ckpt));
    Matrix out;
    if (what == "enriched") {
      out = m.enriched_embeddings();
    } else {
      const ViewRepresentations r = m.representations();
      if (what == "fused") {
        out = r.fused;
      } else if (what == "shared") {
        if (r.shared.size() == 0) throw ConfigError("no shared representation (single view or no graph)");
        out = r.shared;
      } else {
        if (!m.uses_graph()) throw ConfigError("this model has no graph stage");
        out = r.per_view[view_index(m, what)];
      }
    }
    write_output(output, matrix_file_text(out, what));
    return 0;
  }

  if (ablate->parsed()) {
    RunConfig rc = resolve(common);
    if (!dataset.empty()) rc.dataset = dataset;
    if (!workdir.empty()) rc.workdir = workdir;
    std::size_t slots = rc.slots;
    const Dataset ds = load_split_dataset(rc.dataset, &slots);
    rc.slots = slots;
    std::vector<Ablation> list;
    if (variants.empty()) {
      list = ablation_table_variants();
    } else {
      std::stringstream ss(variants);
      std::string item;
      while (std::getline(ss, item, ',')) list.push_back(ablation_from_string(item));
    }
    if (rc.run_id.empty()) rc.run_id = "ablation";
    fs::create_directories(rc.workdir);
    const std::string reports = (fs::path(rc.workdir) / "reports.json").string();
    const auto rows = run_ablations(rc, ds, list, [&](const EvalReport& r) {
      merge_report_file(reports, r);
      std::fprintf(stderr, "%s done\n", r.variant.c_str());
    });
    const std::string table = ablation_table(rows);
    write_file_atomic((fs::path(rc.workdir) / "ablation.tsv").string(), table);
    std::cout << table;
    return 0;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& ch : msg)
      if (ch == '\n') ch = ' ';
    std::fprintf(stderr, "bigsl: error: %s\n", msg.c_str());
    return 1;
  }
}
