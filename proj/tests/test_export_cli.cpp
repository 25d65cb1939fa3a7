#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "bigsl/errors.hpp"
#include "bigsl/export.hpp"
#include "bigsl/trainer.hpp"
#include "json.hpp"
#include "support.hpp"

using namespace bigsl;
namespace fs = std::filesystem;

namespace {

struct CmdResult {
  int code = 0;
  std::string out;
  std::string err;
};

CmdResult run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
  const std::string cmd = std::string(BIGSL_CLI_PATH) + " " + args + " >" + out.string() + " 2>" + err.string();
  const int status = std::system(cmd.c_str());
  CmdResult r;
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out.string());
  r.err = read_file(err.string());
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST_CASE("edge lists") {
  Matrix a(3, 3);
  a << 0.5882, 0.4118, 0, 0, 1, 0, 0.1234567, 0, 0.8765433;
  CHECK(edge_list_text(a) == "0\t0\t0.588200\n0\t1\t0.411800\n1\t1\t1.000000\n2\t0\t0.123457\n2\t2\t0.876543\n");
  CHECK(edge_list_text(Matrix::Zero(2, 2)).empty());

  Rng rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix m = testing::random_matrix(6, 4, rng);
    for (Index i = 0; i < m.size(); ++i)
      if (m.data()[i] < 0) m.data()[i] = 0;
    const std::string text = edge_list_text(m);
    CHECK(text == edge_list_text(Matrix(m)));
    std::pair<long, long> prev{-1, -1};
    int count = 0;
    for (const auto& line : lines_of(text)) {
      long s = 0, d = 0;
      double w = 0;
      REQUIRE(std::sscanf(line.c_str(), "%ld\t%ld\t%lf", &s, &d, &w) == 3);
      const auto dot = line.rfind('.');
      CHECK(line.size() - dot - 1 == 6);
      CHECK(std::make_pair(s, d) > prev);
      prev = {s, d};
      CHECK(std::abs(w - m(s, d)) <= 5e-7);
      ++count;
    }
    CHECK(count == (m.array() != 0).count());
  }
}

TEST_CASE("matrix files") {
  Rng rng(2);
  Matrix m = testing::random_matrix(5, 3, rng);
  m(0, 0) = 1e-300;
  m(1, 1) = -0.0;
  const std::string text = matrix_file_text(m, "fused");
  CHECK(text.rfind("bigsl-matrix 5 3 fused\n", 0) == 0);
  Matrix back = parse_matrix_file(text);
  CHECK(back == m);
  CHECK(matrix_file_text(back, "fused") == text);
  CHECK(parse_matrix_file(matrix_file_text(Matrix(0, 4), "")).cols() == 4);
  CHECK_THROWS_AS(parse_matrix_file("bigsl-matrix 2 2 x\n1 2 3\n"), FormatError);
  CHECK_THROWS_AS(parse_matrix_file("matrix 1 1 x\n1\n"), FormatError);
  CHECK_THROWS_AS(parse_matrix_file("bigsl-matrix 1 1 x\nabc\n"), FormatError);
}

TEST_CASE("cluster summary") {
  PrototypeSet p;
  p.k = 3;
  p.assignments = {2, 0, 2, 1, 2};
  CHECK(cluster_summary(p) == "0\t1\t1\n1\t1\t3\n2\t3\t0,2,4\n");

  Dataset ds = testing::small_dataset(3);
  RunConfig rc = testing::tiny_config(3);
  Trainer tr(rc, ds, build_views(ds, rc.train, rc.slots));
  tr.run_epoch();
  for (std::size_t v = 0; v < tr.model().prototypes().size(); ++v) {
    const PrototypeSet& ps = tr.model().prototypes()[v];
    const Matrix hier = tr.model().view_graphs()[v].graph.a_hier;
    auto rows = lines_of(cluster_summary(ps));
    REQUIRE(rows.size() == static_cast<std::size_t>(ps.k));
    std::size_t total = 0;
    for (std::size_t c = 0; c < rows.size(); ++c) {
      std::size_t count = std::stoul(rows[c].substr(rows[c].find('\t') + 1));
      CHECK(static_cast<double>(count) == hier.col(static_cast<Index>(c)).sum());
      total += count;
    }
    CHECK(total == ds.num_pois());
  }
}

TEST_CASE("command line") {
  const fs::path dir = testing::temp_dir("cli");
  const std::string d = dir.string();
  auto expect_error = [&](const std::string& args) {
    CmdResult r = run_cli(args, dir);
    CHECK(r.code != 0);
    CHECK(r.err.rfind("bigsl: error: ", 0) == 0);
    CHECK(std::count(r.err.begin(), r.err.end(), '\n') == 1);
    return r;
  };

  CHECK(run_cli("--help", dir).code == 0);
  CHECK(run_cli("", dir).code != 0);
  CHECK(run_cli("train --profile huge", dir).code != 0);

  REQUIRE(run_cli("synth --seed 4 --users 60 --output " + d + "/raw.tsv", dir).code == 0);
  CmdResult pre = run_cli("preprocess --profile desk --seed 4 --input " + d + "/raw.tsv --output " + d + "/a.bigsl", dir);
  REQUIRE(pre.code == 0);
  CHECK(pre.out.find("users ") != std::string::npos);
  REQUIRE(run_cli("preprocess --profile desk --seed 4 --input " + d + "/raw.tsv --output " + d + "/b.bigsl", dir).code == 0);
  CHECK(read_file(d + "/a.bigsl") == read_file(d + "/b.bigsl"));
  expect_error("preprocess --input " + d + "/nope.tsv --output " + d + "/c.bigsl");
  write_file_atomic(d + "/bad.tsv", "u1\t2020-01-01T00:00:00Z\n");
  expect_error("preprocess --input " + d + "/bad.tsv --output " + d + "/c.bigsl");

  write_file_atomic(d + "/small.cfg", "profile = desk\nd2 = 8\nd3 = 8\nk = 3\nbatch_size = 128\nexport_graphs = true\n"
                                      "export_embeddings = true\neval_every = 1\n");
  const std::string common = "--config " + d + "/small.cfg --seed 4 --dataset " + d + "/a.bigsl";
  CmdResult tr = run_cli("train " + common + " --epochs 2 --workdir " + d + "/run", dir);
  REQUIRE(tr.code == 0);
  const std::string ckpt = d + "/run/checkpoint.bin";
  CHECK(fs::exists(ckpt));
  auto log = lines_of(read_file(d + "/run/train_log.jsonl"));
  REQUIRE(log.size() == 2);
  for (std::size_t e = 0; e < log.size(); ++e) {
    auto j = nlohmann::json::parse(log[e]);
    CHECK(j["epoch"] == static_cast<int>(e + 1));
    CHECK(j.contains("test_acc@5"));
  }
  CHECK(fs::exists(d + "/run/graph_spatial_hier.tsv"));
  CHECK(parse_matrix_file(read_file(d + "/run/fused.txt")).cols() == 8);

  // Same seed and config (the workdir is part of it), same bytes.
  const std::string first = read_file(ckpt);
  REQUIRE(run_cli("train " + common + " --epochs 2 --workdir " + d + "/run", dir).code == 0);
  CHECK(read_file(ckpt) == first);

  // Resuming continues the epoch counter and matches an uninterrupted run.
  REQUIRE(run_cli("train " + common + " --epochs 1 --workdir " + d + "/run", dir).code == 0);
  REQUIRE(run_cli("train " + common + " --epochs 2 --workdir " + d + "/run --resume " + ckpt, dir).code == 0);
  auto resumed = lines_of(read_file(d + "/run/train_log.jsonl"));
  REQUIRE(resumed.size() == 2);
  CHECK(nlohmann::json::parse(resumed[1])["epoch"] == 2);
  CHECK(read_file(ckpt) == first);
  expect_error("train " + common + " --workdir " + d + "/x --resume " + d + "/missing.bin");

  CmdResult ev = run_cli("evaluate --checkpoint " + ckpt + " --run-id first", dir);
  REQUIRE(ev.code == 0);
  CHECK(ev.out == read_file(d + "/run/report.txt"));
  for (const char* key : {"run_id first", "acc@1 ", "acc@5 ", "acc@10 ", "acc@20 ", "mrr ", "n2.sample_count "})
    CHECK(ev.out.find(key) != std::string::npos);
  REQUIRE(run_cli("evaluate --checkpoint " + ckpt + " --run-id second", dir).code == 0);
  auto reports = nlohmann::json::parse(read_file(d + "/run/reports.json"));
  CHECK(reports.contains("first"));
  CHECK(reports.contains("second"));
  CHECK(run_cli("evaluate --checkpoint " + ckpt + " --run-id first --out-dir " + d + "/ev2", dir).out == ev.out);
  expect_error("evaluate --checkpoint " + d + "/missing.bin");
  write_file_atomic(d + "/junk.bin", "not a checkpoint");
  expect_error("evaluate --checkpoint " + d + "/junk.bin");

  CmdResult hier = run_cli("export-graph --checkpoint " + ckpt + " --view spatial --which hier", dir);
  REQUIRE(hier.code == 0);
  const std::size_t n_pois = load_dataset(d + "/a.bigsl").num_pois();
  CHECK(lines_of(hier.out).size() == n_pois);
  CHECK(hier.out == read_file(d + "/run/graph_spatial_hier.tsv"));
  REQUIRE(run_cli("export-graph --checkpoint " + ckpt + " --view temporal --which poi --output " + d + "/e1.tsv", dir).code == 0);
  REQUIRE(run_cli("export-graph --checkpoint " + ckpt + " --view temporal --which poi --output " + d + "/e2.tsv", dir).code == 0);
  CHECK(read_file(d + "/e1.tsv") == read_file(d + "/e2.tsv"));
  CHECK(!read_file(d + "/e1.tsv").empty());
  expect_error("export-graph --checkpoint " + ckpt + " --view category");

  CmdResult clusters = run_cli("inspect-clusters --checkpoint " + ckpt + " --view temporal", dir);
  REQUIRE(clusters.code == 0);
  CHECK(lines_of(clusters.out).size() == 3);

  CmdResult emb = run_cli("export-embeddings --checkpoint " + ckpt + " --what fused --output " + d + "/f.txt", dir);
  REQUIRE(emb.code == 0);
  Matrix fused = parse_matrix_file(read_file(d + "/f.txt"));
  CHECK(fused.rows() == static_cast<Index>(n_pois));
  CHECK(read_file(d + "/f.txt") == read_file(d + "/run/fused.txt"));

  REQUIRE(run_cli("train " + common + " --ablation backbone --epochs 1 --workdir " + d + "/bb", dir).code == 0);
  expect_error("inspect-clusters --checkpoint " + d + "/bb/checkpoint.bin");
  expect_error("export-graph --checkpoint " + d + "/bb/checkpoint.bin --which hier");

  CmdResult abl = run_cli("ablate " + common + " --epochs 1 --variants full,backbone --workdir " + d + "/abl", dir);
  // ablate has no --epochs flag; use the config instead.
  CHECK(abl.code != 0);
  write_file_atomic(d + "/abl.cfg", read_file(d + "/small.cfg") + "epochs = 1\n");
  abl = run_cli("ablate --config " + d + "/abl.cfg --seed 4 --dataset " + d + "/a.bigsl --variants full,backbone --workdir " +
                    d + "/abl",
                dir);
  REQUIRE(abl.code == 0);
  CHECK(lines_of(abl.out).size() == 3);
  CHECK(nlohmann::json::parse(read_file(d + "/abl/reports.json")).size() == 2);

  fs::remove_all(dir);
}
