#include "hgmn/experiment.hpp"

#include "hgmn/grad_check.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

namespace hgmn {

namespace fs = std::filesystem;
using nlohmann::json;

const char* kReplicateCsvHeader =
    "sweep,param_value,replicate,seed,variant,p_at_1,p_at_10,p_at_30,level0_p_at_1,final_loss";
const char* kSummaryCsvHeader =
    "sweep,param_value,variant,replicates,mean_p_at_1,std_p_at_1,mean_level0_p_at_1";

void ExperimentSpec::validate() const {
  if (replicates < 1) throw ValidationError("need at least one replicate");
  if (threads < 1) throw ValidationError("worker pool needs at least one thread");
  if (degree_cap < 0) throw ValidationError("degree cap must be >= 0");
  train.validate();
  if (mode == Mode::Synthetic) {
    if (n < 2) throw ValidationError("synthetic graphs need at least two nodes");
    if (p < 0.0 || p > 1.0) throw ValidationError("edge probability out of [0, 1]");
    if (p_delete < 0.0 || p_delete > 1.0) throw ValidationError("p_delete out of [0, 1]");
  } else {
    for (const auto* path : {&src_edges, &tgt_edges, &anchor_file}) {
      if (path->empty()) throw ValidationError("dataset mode needs edge and anchor files");
      if (!fs::exists(*path)) throw ValidationError("missing input file: " + *path);
    }
    for (const auto* path : {&src_features, &tgt_features}) {
      if (!path->empty() && !fs::exists(*path)) {
        throw ValidationError("missing feature file: " + *path);
      }
    }
  }
  const int sweeps = (pd_sweep.empty() ? 0 : 1) + (alpha_sweep.empty() ? 0 : 1) +
                     (layers_sweep.empty() ? 0 : 1) + (topk_sweep.empty() ? 0 : 1);
  if (sweeps > 1) throw ValidationError("at most one sweep per run");
}

json spec_to_json(const ExperimentSpec& spec) {
  const double col_tol = spec.train.sinkhorn_col_tol;
  json train{{"alpha", spec.train.alpha},
             {"m", spec.train.m},
             {"epochs", spec.train.epochs},
             {"lr", spec.train.lr},
             {"sinkhorn_iters", spec.train.sinkhorn_iters},
             {"sinkhorn_tau", spec.train.sinkhorn_tau},
             {"topk", spec.train.topk},
             {"train_ratio", spec.train.train_ratio},
             {"seed", spec.train.seed},
             {"hierarchical", spec.train.hierarchical},
             // JSON has no infinity; null stands for "check disabled"
             {"sinkhorn_col_tol", std::isfinite(col_tol) ? json(col_tol) : json(nullptr)},
             {"prune", spec.train.prune.degree_caps},
             {"gnn",
              {{"operator", gnn::operator_name(spec.train.gnn.op)},
               {"layers", spec.train.gnn.layers},
               {"hidden_dim", spec.train.gnn.hidden_dim},
               {"mlp_layers", spec.train.gnn.mlp_layers},
               {"mlp_hidden", spec.train.gnn.mlp_hidden},
               {"use_jk", spec.train.gnn.use_jk}}}};
  return json{{"mode", spec.mode == ExperimentSpec::Mode::Synthetic ? "synthetic" : "dataset"},
              {"n", spec.n},
              {"p", spec.p},
              {"p_delete", spec.p_delete},
              {"replicates", spec.replicates},
              {"src_edges", spec.src_edges},
              {"tgt_edges", spec.tgt_edges},
              {"anchor_file", spec.anchor_file},
              {"src_features", spec.src_features},
              {"tgt_features", spec.tgt_features},
              {"directed", spec.directed},
              {"degree_cap", spec.degree_cap},
              {"out_dir", spec.out_dir},
              {"threads", spec.threads},
              {"emit_svg", spec.emit_svg},
              {"pd_sweep", spec.pd_sweep},
              {"alpha_sweep", spec.alpha_sweep},
              {"layers_sweep", spec.layers_sweep},
              {"topk_sweep", spec.topk_sweep},
              {"train", train}};
}

ExperimentSpec spec_from_json(const json& doc) {
  ExperimentSpec spec;
  const std::string mode = doc.value("mode", "synthetic");
  if (mode == "synthetic") {
    spec.mode = ExperimentSpec::Mode::Synthetic;
  } else if (mode == "dataset") {
    spec.mode = ExperimentSpec::Mode::Dataset;
  } else {
    throw ValidationError("unknown mode: " + mode);
  }
  spec.n = doc.value("n", spec.n);
  spec.p = doc.value("p", spec.p);
  spec.p_delete = doc.value("p_delete", spec.p_delete);
  spec.replicates = doc.value("replicates", spec.replicates);
  spec.src_edges = doc.value("src_edges", spec.src_edges);
  spec.tgt_edges = doc.value("tgt_edges", spec.tgt_edges);
  spec.anchor_file = doc.value("anchor_file", spec.anchor_file);
  spec.src_features = doc.value("src_features", spec.src_features);
  spec.tgt_features = doc.value("tgt_features", spec.tgt_features);
  spec.directed = doc.value("directed", spec.directed);
  spec.degree_cap = doc.value("degree_cap", spec.degree_cap);
  spec.out_dir = doc.value("out_dir", spec.out_dir);
  spec.threads = doc.value("threads", spec.threads);
  spec.emit_svg = doc.value("emit_svg", spec.emit_svg);
  spec.pd_sweep = doc.value("pd_sweep", spec.pd_sweep);
  spec.alpha_sweep = doc.value("alpha_sweep", spec.alpha_sweep);
  spec.layers_sweep = doc.value("layers_sweep", spec.layers_sweep);
  spec.topk_sweep = doc.value("topk_sweep", spec.topk_sweep);
  if (doc.contains("train")) {
    const auto& t = doc["train"];
    spec.train.alpha = t.value("alpha", spec.train.alpha);
    spec.train.m = t.value("m", spec.train.m);
    spec.train.epochs = t.value("epochs", spec.train.epochs);
    spec.train.lr = t.value("lr", spec.train.lr);
    spec.train.sinkhorn_iters = t.value("sinkhorn_iters", spec.train.sinkhorn_iters);
    spec.train.sinkhorn_tau = t.value("sinkhorn_tau", spec.train.sinkhorn_tau);
    spec.train.topk = t.value("topk", spec.train.topk);
    spec.train.train_ratio = t.value("train_ratio", spec.train.train_ratio);
    spec.train.seed = t.value("seed", spec.train.seed);
    spec.train.hierarchical = t.value("hierarchical", spec.train.hierarchical);
    if (t.contains("sinkhorn_col_tol")) {
      spec.train.sinkhorn_col_tol = t["sinkhorn_col_tol"].is_null()
                                        ? std::numeric_limits<double>::infinity()
                                        : t["sinkhorn_col_tol"].get<double>();
    }
    if (t.contains("prune")) spec.train.prune.degree_caps = t["prune"].get<std::vector<int>>();
    if (t.contains("gnn")) {
      const auto& g = t["gnn"];
      spec.train.gnn.op = gnn::operator_from_name(
          g.value("operator", gnn::operator_name(spec.train.gnn.op)));
      spec.train.gnn.layers = g.value("layers", spec.train.gnn.layers);
      spec.train.gnn.hidden_dim = g.value("hidden_dim", spec.train.gnn.hidden_dim);
      spec.train.gnn.mlp_layers = g.value("mlp_layers", spec.train.gnn.mlp_layers);
      spec.train.gnn.mlp_hidden = g.value("mlp_hidden", spec.train.gnn.mlp_hidden);
      spec.train.gnn.use_jk = g.value("use_jk", spec.train.gnn.use_jk);
    }
  }
  return spec;
}

std::string config_hash(const ExperimentSpec& spec) {
  std::ostringstream out;
  out << std::hex << std::setw(16) << std::setfill('0') << fnv1a(spec_to_json(spec).dump());
  return out.str();
}

// ---------------------------------------------------------------------------
// Synthetic protocol

ReplicateMetrics run_synthetic_replicate(const ExperimentSpec& spec, int replicate_index) {
  const std::uint64_t rep_seed =
      substream_seed(spec.train.seed, "replicate", static_cast<std::uint64_t>(replicate_index));
  Graph src = generate_erdos_renyi(spec.n, spec.p, substream_seed(rep_seed, "er"));
  auto [tgt, anchors] = perturb_delete_edges(src, spec.p_delete, substream_seed(rep_seed, "perturb"),
                                             spec.train.train_ratio);
  auto [fs_src, fs_tgt] = joint_degree_onehot_features(src, tgt, spec.degree_cap);
  src.features = std::move(fs_src);
  tgt.features = std::move(fs_tgt);

  TrainConfig cfg = spec.train;
  cfg.seed = rep_seed;
  TrainResult result = cfg.hierarchical ? train_hierarchical(src, tgt, anchors, cfg)
                                        : train_khgmn(src, tgt, anchors, cfg);

  const auto test = anchors.test_pairs();
  ReplicateMetrics metrics;
  metrics.replicate = replicate_index;
  metrics.seed = rep_seed;
  metrics.p_at_1 = precision_at_k(result.final_correspondence, test, 1);
  metrics.p_at_10 = precision_at_k(result.final_correspondence, test, 10);
  metrics.p_at_30 = precision_at_k(result.final_correspondence, test, 30);
  metrics.final_loss = result.loss_curve.empty() ? 0.0 : result.loss_curve.back();
  if (cfg.hierarchical && !result.level_correspondences.empty()) {
    metrics.level0_p_at_1 = precision_at_k(result.level_correspondences.front(), test, 1);
  }
  return metrics;
}

namespace {

struct SweepValue {
  std::string parameter;
  double value;
};

std::vector<SweepValue> resolve_sweep(const ExperimentSpec& spec) {
  std::vector<SweepValue> values;
  if (!spec.pd_sweep.empty()) {
    for (double v : spec.pd_sweep) values.push_back({"pd", v});
  } else if (!spec.alpha_sweep.empty()) {
    for (double v : spec.alpha_sweep) values.push_back({"alpha", v});
  } else if (!spec.layers_sweep.empty()) {
    for (int v : spec.layers_sweep) values.push_back({"layers", static_cast<double>(v)});
  } else if (!spec.topk_sweep.empty()) {
    for (int v : spec.topk_sweep) values.push_back({"topk", static_cast<double>(v)});
  } else {
    values.push_back({"none", 0.0});
  }
  return values;
}

ExperimentSpec apply_sweep_value(ExperimentSpec spec, const SweepValue& sv) {
  if (sv.parameter == "pd") {
    spec.p_delete = sv.value;
  } else if (sv.parameter == "alpha") {
    spec.train.alpha = sv.value;
  } else if (sv.parameter == "layers") {
    spec.train.gnn.layers = static_cast<int>(sv.value);
  } else if (sv.parameter == "topk") {
    spec.train.topk = static_cast<int>(sv.value);
  }
  return spec;
}

std::vector<ReplicateMetrics> run_replicate_pool(const ExperimentSpec& spec) {
  std::vector<ReplicateMetrics> results(static_cast<std::size_t>(spec.replicates));
  std::atomic<int> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&]() {
    for (;;) {
      const int index = next.fetch_add(1);
      if (index >= spec.replicates) return;
      try {
        results[static_cast<std::size_t>(index)] = run_synthetic_replicate(spec, index);
      } catch (...) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  const int width = std::min(spec.threads, spec.replicates);
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(width));
  for (int i = 0; i < width; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

double mean_of(const std::vector<double>& xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  double acc = 0.0;
  for (double x : xs) acc += x;
  return acc / static_cast<double>(xs.size());
}

double std_of(const std::vector<double>& xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double acc = 0.0;
  for (double x : xs) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(xs.size() - 1));
}

void summarize(SweepPoint& point) {
  std::vector<double> p1, level0;
  for (const auto& r : point.replicates) {
    p1.push_back(r.p_at_1);
    if (std::isfinite(r.level0_p_at_1)) level0.push_back(r.level0_p_at_1);
  }
  point.mean_p_at_1 = mean_of(p1);
  point.std_p_at_1 = std_of(p1, point.mean_p_at_1);
  point.mean_level0_p_at_1 = level0.empty() ? std::numeric_limits<double>::quiet_NaN()
                                            : mean_of(level0);
}

std::string csv_double(double v) {
  if (!std::isfinite(v)) return "";
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

json metrics_to_json(const ReplicateMetrics& r) {
  json j{{"replicate", r.replicate}, {"seed", r.seed},           {"p_at_1", r.p_at_1},
         {"p_at_10", r.p_at_10},     {"p_at_30", r.p_at_30},     {"final_loss", r.final_loss}};
  if (std::isfinite(r.level0_p_at_1)) {
    j["level0_p_at_1"] = r.level0_p_at_1;
  } else {
    j["level0_p_at_1"] = nullptr;
  }
  return j;
}

// Minimal polyline chart, one series per named line.
void write_svg_chart(const std::string& path, const std::string& title,
                     const std::string& x_label,
                     const std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>>& series) {
  const double width = 640, height = 420, left = 60, right = 610, top = 40, bottom = 370;
  double xmin = 1e300, xmax = -1e300, ymin = 0.0, ymax = 1e-9;
  for (const auto& [name, points] : series) {
    for (const auto& [x, y] : points) {
      xmin = std::min(xmin, x);
      xmax = std::max(xmax, x);
      ymax = std::max(ymax, y);
    }
  }
  if (xmin >= xmax) xmax = xmin + 1.0;
  ymax = std::max(1.0, ymax);
  auto sx = [&](double x) { return left + (x - xmin) / (xmax - xmin) * (right - left); };
  auto sy = [&](double y) { return bottom - (y - ymin) / (ymax - ymin) * (bottom - top); };
  const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
  std::ofstream out(path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\""
      << height << "\" viewBox=\"0 0 " << width << " " << height << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">"
      << title << "</text>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << bottom << "\" x2=\"" << right << "\" y2=\""
      << bottom << "\" stroke=\"black\"/>\n";
  out << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << bottom
      << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 4.0;
    const double fy = ymin + (ymax - ymin) * i / 4.0;
    out << "<text x=\"" << sx(fx) << "\" y=\"" << bottom + 18
        << "\" text-anchor=\"middle\" font-size=\"11\">" << std::setprecision(3) << fx
        << "</text>\n";
    out << "<text x=\"" << left - 8 << "\" y=\"" << sy(fy) + 4
        << "\" text-anchor=\"end\" font-size=\"11\">" << std::setprecision(3) << fy
        << "</text>\n";
  }
  out << "<text x=\"" << (left + right) / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-size=\"12\">" << x_label << "</text>\n";
  out << "<text x=\"16\" y=\"" << (top + bottom) / 2
      << "\" font-size=\"12\" transform=\"rotate(-90 16 " << (top + bottom) / 2
      << ")\" text-anchor=\"middle\">P@1</text>\n";
  int color = 0;
  double legend_y = top + 6;
  for (const auto& [name, points] : series) {
    const char* stroke = palette[color % 6];
    out << "<polyline fill=\"none\" stroke=\"" << stroke << "\" stroke-width=\"2\" points=\"";
    for (const auto& [x, y] : points) out << sx(x) << "," << sy(y) << " ";
    out << "\"/>\n";
    for (const auto& [x, y] : points) {
      out << "<circle cx=\"" << sx(x) << "\" cy=\"" << sy(y) << "\" r=\"3\" fill=\"" << stroke
          << "\"/>\n";
    }
    out << "<text x=\"" << right - 150 << "\" y=\"" << legend_y
        << "\" font-size=\"12\" fill=\"" << stroke << "\">" << name << "</text>\n";
    legend_y += 16;
    ++color;
  }
  out << "</svg>\n";
}

}  // namespace

SynthReport run_synth(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.mode != ExperimentSpec::Mode::Synthetic) {
    throw ValidationError("run_synth needs a synthetic spec");
  }
  fs::create_directories(spec.out_dir);

  SynthReport report;
  report.spec = spec;
  for (const auto& sv : resolve_sweep(spec)) {
    const ExperimentSpec point_spec = apply_sweep_value(spec, sv);
    SweepPoint point;
    point.parameter = sv.parameter;
    point.value = sv.value;
    point.replicates = run_replicate_pool(point_spec);
    summarize(point);
    report.points.push_back(std::move(point));
  }

  const std::string hash = config_hash(spec);
  const std::string variant = variant_name(spec.train);

  {
    std::ofstream out(fs::path(spec.out_dir) / "replicates.csv");
    out << kReplicateCsvHeader << "\n";
    for (const auto& point : report.points) {
      for (const auto& r : point.replicates) {
        out << point.parameter << "," << csv_double(point.value) << "," << r.replicate << ","
            << r.seed << "," << variant << "," << csv_double(r.p_at_1) << ","
            << csv_double(r.p_at_10) << "," << csv_double(r.p_at_30) << ","
            << csv_double(r.level0_p_at_1) << "," << csv_double(r.final_loss) << "\n";
      }
    }
  }
  {
    std::ofstream out(fs::path(spec.out_dir) / "summary.csv");
    out << kSummaryCsvHeader << "\n";
    for (const auto& point : report.points) {
      out << point.parameter << "," << csv_double(point.value) << "," << variant << ","
          << point.replicates.size() << "," << csv_double(point.mean_p_at_1) << ","
          << csv_double(point.std_p_at_1) << "," << csv_double(point.mean_level0_p_at_1) << "\n";
    }
  }
  {
    json doc;
    doc["config"] = spec_to_json(spec);
    doc["config_hash"] = hash;
    doc["variant"] = variant;
    json points = json::array();
    for (const auto& point : report.points) {
      json p{{"parameter", point.parameter},
             {"value", point.value},
             {"mean_p_at_1", point.mean_p_at_1},
             {"std_p_at_1", point.std_p_at_1}};
      p["mean_level0_p_at_1"] = std::isfinite(point.mean_level0_p_at_1)
                                    ? json(point.mean_level0_p_at_1)
                                    : json(nullptr);
      json reps = json::array();
      for (const auto& r : point.replicates) reps.push_back(metrics_to_json(r));
      p["replicates"] = std::move(reps);
      points.push_back(std::move(p));
    }
    doc["points"] = std::move(points);
    std::ofstream out(fs::path(spec.out_dir) / "report.json");
    out << doc.dump(2) << "\n";
  }
  if (spec.emit_svg && report.points.size() > 1) {
    std::vector<std::pair<double, double>> final_series, level0_series;
    for (const auto& point : report.points) {
      final_series.emplace_back(point.value, point.mean_p_at_1);
      if (std::isfinite(point.mean_level0_p_at_1)) {
        level0_series.emplace_back(point.value, point.mean_level0_p_at_1);
      }
    }
    std::vector<std::pair<std::string, std::vector<std::pair<double, double>>>> series;
    series.emplace_back(variant, final_series);
    if (!level0_series.empty()) series.emplace_back("0-HGMN", level0_series);
    const std::string param = report.points.front().parameter;
    write_svg_chart((fs::path(spec.out_dir) / ("fig_" + param + ".svg")).string(),
                    "P@1 vs " + param, param, series);
  }
  return report;
}

// ---------------------------------------------------------------------------
// Dataset experiments

namespace {

void write_id_map(const std::string& path, const std::vector<std::int64_t>& ids) {
  std::ofstream out(path);
  out << "# dense_id external_id\n";
  for (std::size_t i = 0; i < ids.size(); ++i) out << i << " " << ids[i] << "\n";
}

int remap_id(const std::vector<std::int64_t>& ids, std::int64_t external, const char* side) {
  auto it = std::lower_bound(ids.begin(), ids.end(), external);
  if (it == ids.end() || *it != external) {
    throw ValidationError(std::string("anchor references unknown ") + side + " node " +
                          std::to_string(external));
  }
  return static_cast<int>(it - ids.begin());
}

}  // namespace

json run_dataset(const ExperimentSpec& spec) {
  spec.validate();
  if (spec.mode != ExperimentSpec::Mode::Dataset) {
    throw ValidationError("run_dataset needs a dataset spec");
  }
  fs::create_directories(spec.out_dir);

  LoadedGraph src = load_edge_list_file(spec.src_edges, spec.directed);
  LoadedGraph tgt = load_edge_list_file(spec.tgt_edges, spec.directed);

  // Anchors arrive in external ids; bring them into the dense ranges.
  AnchorSet raw_anchors = load_anchor_list_file(spec.anchor_file, spec.train.train_ratio,
                                                substream_seed(spec.train.seed, "anchor_split"));
  AnchorSet anchors;
  for (const auto& p : raw_anchors.pairs) {
    anchors.pairs.push_back({remap_id(src.original_ids, p.src, "source"),
                             remap_id(tgt.original_ids, p.tgt, "target"), p.train});
  }

  if (!spec.src_features.empty()) {
    src.graph.features = load_feature_csv_file(spec.src_features);
    tgt.graph.features = load_feature_csv_file(spec.tgt_features);
    if (src.graph.features.rows() != src.graph.num_nodes ||
        tgt.graph.features.rows() != tgt.graph.num_nodes) {
      throw ValidationError("feature row count does not match node count");
    }
  } else {
    auto [fs_src, fs_tgt] = joint_degree_onehot_features(src.graph, tgt.graph, spec.degree_cap);
    src.graph.features = std::move(fs_src);
    tgt.graph.features = std::move(fs_tgt);
  }

  TrainResult result = spec.train.hierarchical
                           ? train_hierarchical(src.graph, tgt.graph, anchors, spec.train)
                           : train_khgmn(src.graph, tgt.graph, anchors, spec.train);

  const auto test = anchors.test_pairs();
  json metrics;
  metrics["p_at"] = {{"1", precision_at_k(result.final_correspondence, test, 1)},
                     {"10", precision_at_k(result.final_correspondence, test, 10)},
                     {"30", precision_at_k(result.final_correspondence, test, 30)}};
  metrics["loss_curve"] = result.loss_curve;
  metrics["config"] = spec_to_json(spec);
  metrics["config_hash"] = config_hash(spec);
  metrics["variant"] = variant_name(spec.train);
  metrics["seed"] = spec.train.seed;

  {
    std::ofstream out(fs::path(spec.out_dir) / "metrics.json");
    out << metrics.dump(2) << "\n";
  }
  {
    std::ofstream out(fs::path(spec.out_dir) / "metrics.csv");
    out << "k,p_at_k\n";
    for (int k : {1, 10, 30}) {
      out << k << "," << csv_double(precision_at_k(result.final_correspondence, test, k)) << "\n";
    }
  }
  write_id_map((fs::path(spec.out_dir) / "src_id_map.txt").string(), src.original_ids);
  write_id_map((fs::path(spec.out_dir) / "tgt_id_map.txt").string(), tgt.original_ids);

  Correspondence to_export = result.final_correspondence;
  if (spec.train.topk > 0) {
    to_export = sparsify_topk(result.final_correspondence, spec.train.topk);
  }
  export_correspondence(to_export, spec.out_dir, config_hash(spec), spec.train.seed);
  return metrics;
}

json run_linegraph(const std::string& edge_file, bool directed, int m, const PruneConfig& prune,
                   std::uint64_t seed, const std::string& out_dir) {
  LoadedGraph loaded = load_edge_list_file(edge_file, directed);
  IlgStack stack = build_ilg_stack(loaded.graph, m, prune, seed);
  fs::create_directories(out_dir);
  export_stack(stack, out_dir, seed, prune);
  write_id_map((fs::path(out_dir) / "id_map.txt").string(), loaded.original_ids);

  const auto bounds = level_size_bounds(stack);
  json report;
  report["order"] = stack.order();
  json levels = json::array();
  for (int k = 0; k <= stack.order(); ++k) {
    const Graph& g = stack.level_graph(k);
    json level{{"order", k}, {"nodes", g.num_nodes}, {"edges", g.num_edges()}};
    if (k < static_cast<int>(bounds.size())) {
      level["size_bound"] = bounds[static_cast<std::size_t>(k)];
      level["within_bound"] = static_cast<double>(g.num_nodes) <=
                              bounds[static_cast<std::size_t>(k)] + 1e-9;
    }
    levels.push_back(std::move(level));
  }
  report["levels"] = std::move(levels);
  std::ofstream out(fs::path(out_dir) / "size_report.json");
  out << report.dump(2) << "\n";
  return report;
}

// ---------------------------------------------------------------------------
// Check suite

CheckOutcome run_check_suite(std::uint64_t seed) {
  CheckOutcome outcome;
  std::ostringstream log;

  // Incidence-pattern oracle over seeded ER graphs, orders 1 and 2. The
  // identity needs every component to carry >= m edges, so seeds outside
  // that domain are skipped deterministically.
  auto rng = make_rng(seed, "check_graphs");
  std::uniform_int_distribution<int> size(5, 30);
  int produced = 0;
  std::uint64_t graph_seed = 0;
  while (produced < 50) {
    const int n = size(rng);
    const Graph g = generate_erdos_renyi(n, 0.3, substream_seed(seed, "check_er", graph_seed));
    ++graph_seed;
    if (!lemma1_domain_ok(g, 2)) continue;
    bool ok = lemma1_check(g, 1) && lemma1_check(g, 2);
    ++produced;
    ++outcome.lemma_total;
    if (ok) ++outcome.lemma_pass;
  }
  log << "lemma1: " << outcome.lemma_pass << "/" << outcome.lemma_total << " pass\n";

  // Gradient suite: representative op problems plus the full matching
  // pipeline on a small pair.
  using ad::GradCheckProblem;
  auto rng_pt = make_rng(seed, "check_grad");
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_matrix = [&](Eigen::Index r, Eigen::Index c) {
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i) {
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = normal(rng_pt);
    }
    return m;
  };

  double worst_op = 0.0;
  {
    GradCheckProblem quadratic{
        [](ad::Tape&, const std::vector<ad::Var>& p) {
          return ad::sum(ad::elementwise_mul(p[0], p[0]));
        },
        {random_matrix(3, 4)}};
    worst_op = std::max(worst_op, ad::grad_check(quadratic));
  }
  {
    Graph p3 = make_graph(false, 3, {{0, 1}, {1, 2}});
    const SpMat norm_adj = normalized_adjacency(p3);
    GradCheckProblem gcn{
        [norm_adj](ad::Tape& tape, const std::vector<ad::Var>& p) {
          ad::Var z = ad::spmm(norm_adj, ad::matmul(p[0], p[1]));
          ad::Var s = ad::row_softmax(ad::matmul(z, ad::transpose(z)));
          Matrix mask = Matrix::Zero(3, 3);
          mask(0, 0) = mask(1, 1) = 1.0;
          return ad::scalar_mul(
              ad::sum(ad::elementwise_mul(ad::log_clamped(s), tape.constant(mask))), -1.0);
        },
        {random_matrix(3, 2), random_matrix(2, 3)}};
    worst_op = std::max(worst_op, ad::grad_check(gcn));
  }
  {
    GradCheckProblem softmax_norm{
        [](ad::Tape&, const std::vector<ad::Var>& p) {
          return ad::sum(ad::elementwise_mul(
              ad::col_normalize(ad::row_normalize(ad::exp(p[0]))), p[1]));
        },
        {random_matrix(4, 5), random_matrix(4, 5)}};
    worst_op = std::max(worst_op, ad::grad_check(softmax_norm));
  }
  {
    GradCheckProblem bn{
        [](ad::Tape&, const std::vector<ad::Var>& p) {
          return ad::sum(ad::elementwise_mul(ad::batch_feature_normalize(p[0]), p[1]));
        },
        {random_matrix(6, 3), random_matrix(6, 3)}};
    worst_op = std::max(worst_op, ad::grad_check(bn));
  }
  outcome.op_gradient_worst = worst_op;
  log << "op gradients: max rel err " << std::scientific << worst_op << "\n";

  // Full pipeline: two 5-node graphs, one-layer encoders, fused similarity,
  // sinkhorn and the anchor loss, differentiated in every parameter.
  {
    const Graph gs = generate_erdos_renyi(5, 0.6, substream_seed(seed, "pipe", 0));
    const Graph gt = generate_erdos_renyi(5, 0.6, substream_seed(seed, "pipe", 1));
    const SpMat adj_s = adjacency_matrix(gs);
    const SpMat adj_t = adjacency_matrix(gt);
    const Matrix xs = random_matrix(5, 3);
    const Matrix xt = random_matrix(5, 3);
    std::vector<AnchorPair> train_anchors{{0, 0, true}, {1, 1, true}, {2, 2, true}};
    SinkhornConfig sk{10, 1.0, 1e-2};
    GradCheckProblem pipeline{
        [=](ad::Tape& tape, const std::vector<ad::Var>& p) {
          ad::Var zs_high = ad::relu(ad::matmul(ad::spmm(adj_s, tape.constant(xs)), p[0]));
          ad::Var zt_high = ad::relu(ad::matmul(ad::spmm(adj_t, tape.constant(xt)), p[0]));
          ad::Var high = high_order_similarity(sparse_identity(5), zs_high, zt_high,
                                               sparse_identity(5));
          ad::Var zs_local = ad::relu(ad::matmul(ad::spmm(adj_s, tape.constant(xs)), p[1]));
          ad::Var zt_local = ad::relu(ad::matmul(ad::spmm(adj_t, tape.constant(xt)), p[1]));
          ad::Var local = ad::matmul(zs_local, ad::transpose(zt_local));
          ad::Var fused = fuse_similarity(0.7, high, local);
          ad::Var s = sinkhorn_normalize_on_tape(fused, sk);
          return matching_loss_on_tape(s, train_anchors);
        },
        {random_matrix(3, 4), random_matrix(3, 4)}};
    outcome.pipeline_gradient_worst = ad::grad_check(pipeline);
    log << "pipeline gradient: max rel err " << std::scientific
        << outcome.pipeline_gradient_worst << "\n";
  }

  outcome.ok = outcome.lemma_pass == outcome.lemma_total && outcome.op_gradient_worst < 1e-4 &&
               outcome.pipeline_gradient_worst < 1e-3;
  outcome.log = log.str();
  return outcome;
}

// ---------------------------------------------------------------------------
// JSON schema subset

namespace {

bool type_matches(const json& value, const std::string& type) {
  if (type == "object") return value.is_object();
  if (type == "array") return value.is_array();
  if (type == "string") return value.is_string();
  if (type == "number") return value.is_number();
  if (type == "integer") return value.is_number_integer();
  if (type == "boolean") return value.is_boolean();
  if (type == "null") return value.is_null();
  return false;
}

bool validate_node(const json& value, const json& schema, const std::string& where,
                   std::string* why) {
  if (schema.contains("type")) {
    const auto& type = schema["type"];
    bool ok = false;
    if (type.is_array()) {
      for (const auto& t : type) ok = ok || type_matches(value, t.get<std::string>());
    } else {
      ok = type_matches(value, type.get<std::string>());
    }
    if (!ok) {
      if (why) *why = where + ": expected type " + type.dump() + ", got " + value.dump().substr(0, 40);
      return false;
    }
  }
  if (schema.contains("enum")) {
    bool ok = false;
    for (const auto& option : schema["enum"]) ok = ok || option == value;
    if (!ok) {
      if (why) *why = where + ": value not in enum";
      return false;
    }
  }
  if (value.is_object()) {
    if (schema.contains("required")) {
      for (const auto& key : schema["required"]) {
        if (!value.contains(key.get<std::string>())) {
          if (why) *why = where + ": missing required key " + key.get<std::string>();
          return false;
        }
      }
    }
    if (schema.contains("properties")) {
      for (const auto& [key, sub] : schema["properties"].items()) {
        if (value.contains(key) && !validate_node(value[key], sub, where + "." + key, why)) {
          return false;
        }
      }
    }
  }
  if (value.is_array() && schema.contains("items")) {
    int index = 0;
    for (const auto& item : value) {
      if (!validate_node(item, schema["items"], where + "[" + std::to_string(index) + "]", why)) {
        return false;
      }
      ++index;
    }
  }
  return true;
}

}  // namespace

bool validate_against_schema(const json& doc, const json& schema, std::string* why) {
  return validate_node(doc, schema, "$", why);
}

}  // namespace hgmn
