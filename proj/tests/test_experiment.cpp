#include <doctest.h>

#include "hgmn/experiment.hpp"

#include <filesystem>
#include <fstream>

using namespace hgmn;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

ExperimentSpec tiny_synth_spec(const std::string& out_dir) {
  ExperimentSpec spec;
  spec.mode = ExperimentSpec::Mode::Synthetic;
  spec.n = 20;
  spec.p = 0.25;
  spec.p_delete = 0.2;
  spec.replicates = 2;
  spec.train.m = 0;
  spec.train.epochs = 15;
  spec.train.seed = 11;
  spec.train.gnn.layers = 2;
  spec.train.gnn.hidden_dim = 12;
  spec.train.gnn.mlp_hidden = 10;
  spec.out_dir = out_dir;
  return spec;
}

json load_json(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return json::parse(in);
}

json schema(const char* name) {
  return load_json(fs::path(HGMN_SOURCE_DIR) / "schemas" / name);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const char* name) : path(fs::temp_directory_path() / name) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("spec json round trip") {
  ExperimentSpec spec = tiny_synth_spec("somewhere");
  spec.pd_sweep = {0.0, 0.1};
  spec.train.prune.degree_caps = {10, 5};
  spec.train.hierarchical = true;
  spec.train.m = 2;
  ExperimentSpec back = spec_from_json(spec_to_json(spec));
  CHECK(spec_to_json(back).dump() == spec_to_json(spec).dump());
  CHECK(config_hash(back) == config_hash(spec));
}

TEST_CASE("synthetic runs are reproducible and well formed") {
  TempDir dir("hgmn_test_synth");
  ExperimentSpec spec = tiny_synth_spec((dir.path / "a").string());
  SynthReport report = run_synth(spec);
  REQUIRE(report.points.size() == 1);
  REQUIRE(report.points[0].replicates.size() == 2);

  SUBCASE("rerun from the embedded config reproduces metrics bit-exactly") {
    json emitted = load_json(dir.path / "a" / "report.json");
    ExperimentSpec from_report = spec_from_json(emitted["config"]);
    from_report.out_dir = (dir.path / "b").string();
    SynthReport again = run_synth(from_report);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(again.points[0].replicates[i].p_at_1 == report.points[0].replicates[i].p_at_1);
      CHECK(again.points[0].replicates[i].final_loss ==
            report.points[0].replicates[i].final_loss);
    }
  }
  SUBCASE("csv headers are the documented schema") {
    std::ifstream reps(dir.path / "a" / "replicates.csv");
    std::string header;
    std::getline(reps, header);
    CHECK(header == kReplicateCsvHeader);
    std::ifstream summary(dir.path / "a" / "summary.csv");
    std::getline(summary, header);
    CHECK(header == kSummaryCsvHeader);
  }
  SUBCASE("report validates against the shipped schema") {
    std::string why;
    CHECK_MESSAGE(validate_against_schema(load_json(dir.path / "a" / "report.json"),
                                          schema("synth_report.schema.json"), &why),
                  why);
  }
  SUBCASE("worker pool width does not change results") {
    ExperimentSpec wide = spec;
    wide.out_dir = (dir.path / "wide").string();
    wide.threads = 4;
    SynthReport parallel = run_synth(wide);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(parallel.points[0].replicates[i].p_at_1 == report.points[0].replicates[i].p_at_1);
    }
  }
}

TEST_CASE("sweeps produce one point per value") {
  TempDir dir("hgmn_test_sweep");
  ExperimentSpec spec = tiny_synth_spec(dir.path.string());
  spec.replicates = 1;
  spec.train.epochs = 5;
  spec.pd_sweep = {0.0, 0.2, 0.4};
  spec.emit_svg = true;
  SynthReport report = run_synth(spec);
  CHECK(report.points.size() == 3);
  CHECK(report.points[1].parameter == "pd");
  CHECK(report.points[1].value == 0.2);
  CHECK(fs::exists(dir.path / "fig_pd.svg"));

  ExperimentSpec twice = spec;
  twice.alpha_sweep = {0.5};
  CHECK_THROWS_AS(run_synth(twice), ValidationError);
}

TEST_CASE("dataset experiment on a toy fixture pair") {
  TempDir dir("hgmn_test_dataset");
  // 10-node ring pair with sparse external ids (x10) and 7 anchors
  {
    std::ofstream src(dir.path / "src.edges");
    std::ofstream tgt(dir.path / "tgt.edges");
    for (int i = 0; i < 10; ++i) {
      src << i * 10 << " " << ((i + 1) % 10) * 10 << "\n";
      // drop two ring edges; every node keeps at least one incident edge
      if (i != 3 && i != 6) tgt << i * 10 << " " << ((i + 1) % 10) * 10 << "\n";
    }
    std::ofstream anchors(dir.path / "anchors.txt");
    for (int i = 0; i < 7; ++i) anchors << i * 10 << " " << i * 10 << "\n";
  }
  ExperimentSpec spec;
  spec.mode = ExperimentSpec::Mode::Dataset;
  spec.src_edges = (dir.path / "src.edges").string();
  spec.tgt_edges = (dir.path / "tgt.edges").string();
  spec.anchor_file = (dir.path / "anchors.txt").string();
  spec.out_dir = (dir.path / "out").string();
  spec.train.m = 1;
  spec.train.epochs = 10;
  spec.train.train_ratio = 0.3;
  spec.train.seed = 9;
  spec.train.gnn.layers = 2;
  spec.train.gnn.hidden_dim = 10;
  spec.train.gnn.mlp_hidden = 8;

  json metrics = run_dataset(spec);
  for (const char* k : {"1", "10", "30"}) {
    const double v = metrics["p_at"][k].get<double>();
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
  CHECK(fs::exists(dir.path / "out" / "metrics.json"));
  CHECK(fs::exists(dir.path / "out" / "metrics.csv"));
  CHECK(fs::exists(dir.path / "out" / "src_id_map.txt"));
  CHECK(fs::exists(dir.path / "out" / "correspondence.csv"));
  CHECK(fs::exists(dir.path / "out" / "correspondence_manifest.json"));

  std::string why;
  CHECK_MESSAGE(
      validate_against_schema(metrics, schema("metrics.schema.json"), &why), why);

  SUBCASE("train ratio 0.3 of 7 anchors trains on 2") {
    // round(0.3 * 7) = 2; the loss curve exists and the split is persisted in config
    CHECK(metrics["config"]["train"]["train_ratio"].get<double>() == 0.3);
  }
  SUBCASE("unknown anchor ids are validation errors") {
    ExperimentSpec bad = spec;
    std::ofstream anchors(dir.path / "bad_anchors.txt");
    anchors << "5 5\n";  // id 5 never appears in the edge lists
    anchors.close();
    bad.anchor_file = (dir.path / "bad_anchors.txt").string();
    CHECK_THROWS_AS(run_dataset(bad), ValidationError);
  }
  SUBCASE("missing files are validation errors") {
    ExperimentSpec bad = spec;
    bad.src_edges = (dir.path / "nope.edges").string();
    CHECK_THROWS_AS(run_dataset(bad), ValidationError);
  }
}

TEST_CASE("identical dataset pair with injective features matches itself") {
  TempDir dir("hgmn_test_selfmatch");
  {
    std::ofstream edges(dir.path / "g.edges");
    auto g = generate_erdos_renyi(12, 0.3, 3);
    write_edge_list(edges, g);
    std::ofstream anchors(dir.path / "anchors.txt");
    for (int i = 0; i < 12; ++i) anchors << i << " " << i << "\n";
    auto rng = make_rng(4, "inj");
    std::normal_distribution<double> normal(0.0, 1.0);
    std::ofstream feats(dir.path / "f.csv");
    for (int i = 0; i < 12; ++i) {
      for (int j = 0; j < 6; ++j) feats << normal(rng) << (j == 5 ? "\n" : ",");
    }
  }
  ExperimentSpec spec;
  spec.mode = ExperimentSpec::Mode::Dataset;
  spec.src_edges = (dir.path / "g.edges").string();
  spec.tgt_edges = (dir.path / "g.edges").string();
  spec.anchor_file = (dir.path / "anchors.txt").string();
  spec.src_features = (dir.path / "f.csv").string();
  spec.tgt_features = (dir.path / "f.csv").string();
  spec.out_dir = (dir.path / "out").string();
  spec.train.m = 0;
  spec.train.alpha = 0.0;
  spec.train.epochs = 40;
  spec.train.seed = 21;
  spec.train.gnn.layers = 2;
  spec.train.gnn.hidden_dim = 12;
  spec.train.gnn.mlp_hidden = 10;
  json metrics = run_dataset(spec);
  CHECK(metrics["p_at"]["1"].get<double>() == 1.0);
}

TEST_CASE("line graph tooling") {
  TempDir dir("hgmn_test_lg");
  {
    std::ofstream edges(dir.path / "c3.edges");
    edges << "0 1\n0 2\n1 2\n";
    std::ofstream p3(dir.path / "p3.edges");
    p3 << "0 1\n1 2\n";
    std::ofstream star(dir.path / "star.edges");
    star << "0 1\n0 2\n0 3\n";
  }
  SUBCASE("C3 keeps size three through two iterations") {
    json report = run_linegraph((dir.path / "c3.edges").string(), false, 2, PruneConfig{}, 0,
                                (dir.path / "out_c3").string());
    REQUIRE(report["levels"].size() == 3);
    for (int k = 0; k < 3; ++k) {
      CHECK(report["levels"][static_cast<std::size_t>(k)]["nodes"] == 3);
      CHECK(report["levels"][static_cast<std::size_t>(k)]["within_bound"] == true);
    }
    CHECK(fs::exists(dir.path / "out_c3" / "manifest.json"));
    CHECK(fs::exists(dir.path / "out_c3" / "size_report.json"));
  }
  SUBCASE("P3's line graph is a single edge") {
    json report = run_linegraph((dir.path / "p3.edges").string(), false, 1, PruneConfig{}, 0,
                                (dir.path / "out_p3").string());
    CHECK(report["levels"][1]["nodes"] == 2);
    CHECK(report["levels"][1]["edges"] == 1);
  }
  SUBCASE("the star's line graph is a triangle") {
    json report = run_linegraph((dir.path / "star.edges").string(), false, 1, PruneConfig{}, 0,
                                (dir.path / "out_star").string());
    CHECK(report["levels"][1]["nodes"] == 3);
    CHECK(report["levels"][1]["edges"] == 3);
  }
  SUBCASE("empty level surfaces with its index") {
    try {
      run_linegraph((dir.path / "p3.edges").string(), false, 3, PruneConfig{}, 0,
                    (dir.path / "out_fail").string());
      FAIL("expected empty level");
    } catch (const EmptyLevelError& e) {
      CHECK(e.level == 3);
    }
  }
}

TEST_CASE("schema validator subset") {
  json schema_doc = json::parse(R"({
    "type": "object",
    "required": ["a"],
    "properties": {
      "a": {"type": "number"},
      "b": {"type": "array", "items": {"type": "string"}},
      "c": {"enum": ["x", "y"]}
    }
  })");
  std::string why;
  CHECK(validate_against_schema(json::parse(R"({"a": 1})"), schema_doc, &why));
  CHECK(validate_against_schema(json::parse(R"({"a": 1, "b": ["s"], "c": "x"})"), schema_doc, &why));
  CHECK_FALSE(validate_against_schema(json::parse(R"({"b": []})"), schema_doc, &why));
  CHECK_FALSE(validate_against_schema(json::parse(R"({"a": "no"})"), schema_doc, &why));
  CHECK_FALSE(validate_against_schema(json::parse(R"({"a": 1, "b": [3]})"), schema_doc, &why));
  CHECK_FALSE(validate_against_schema(json::parse(R"({"a": 1, "c": "z"})"), schema_doc, &why));
}

TEST_CASE("check suite passes end to end") {
  CheckOutcome outcome = run_check_suite(7);
  CHECK(outcome.ok);
  CHECK(outcome.lemma_pass == 50);
  CHECK(outcome.lemma_total == 50);
  CHECK(outcome.op_gradient_worst < 1e-4);
  CHECK(outcome.pipeline_gradient_worst < 1e-3);
}
