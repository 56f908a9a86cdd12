#pragma once

#include "hgmn/train.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace hgmn {

/// Fully resolved description of one experiment run; everything a report
/// needs to reproduce its metrics bit-exactly.
struct ExperimentSpec {
  enum class Mode { Synthetic, Dataset };
  Mode mode = Mode::Synthetic;

  // Synthetic protocol: ER source, edge-deleted target, identity anchors.
  int n = 100;
  double p = 0.1;
  double p_delete = 0.3;
  int replicates = 1;

  // Dataset files.
  std::string src_edges;
  std::string tgt_edges;
  std::string anchor_file;
  std::string src_features;  // CSV; empty = degree one-hot
  std::string tgt_features;
  bool directed = false;

  TrainConfig train;
  int degree_cap = 64;  // one-hot degree bucket cap
  std::string out_dir = "out";
  int threads = 1;
  bool emit_svg = false;

  // At most one sweep; each value overrides the matching field per run.
  std::vector<double> pd_sweep;
  std::vector<double> alpha_sweep;
  std::vector<int> layers_sweep;
  std::vector<int> topk_sweep;

  void validate() const;
};

nlohmann::json spec_to_json(const ExperimentSpec& spec);
ExperimentSpec spec_from_json(const nlohmann::json& doc);
std::string config_hash(const ExperimentSpec& spec);

struct ReplicateMetrics {
  int replicate = 0;
  std::uint64_t seed = 0;
  double p_at_1 = 0.0;
  double p_at_10 = 0.0;
  double p_at_30 = 0.0;
  /// P@1 of the level-0 stage for hierarchical runs (NaN otherwise); the
  /// paired baseline for the high-order comparison.
  double level0_p_at_1 = std::numeric_limits<double>::quiet_NaN();
  double final_loss = 0.0;
};

struct SweepPoint {
  std::string parameter;  // "pd", "alpha", "layers", "topk" or "none"
  double value = 0.0;
  std::vector<ReplicateMetrics> replicates;
  double mean_p_at_1 = 0.0;
  double std_p_at_1 = 0.0;
  double mean_level0_p_at_1 = std::numeric_limits<double>::quiet_NaN();
};

struct SynthReport {
  ExperimentSpec spec;
  std::vector<SweepPoint> points;
};

/// One synthetic replicate: generate the pair, train the configured variant,
/// evaluate P@k on the test anchors. Deterministic in (spec, index).
ReplicateMetrics run_synthetic_replicate(const ExperimentSpec& spec, int replicate_index);

/// Whole synthetic protocol: sweep x replicates over a worker pool, rows
/// aggregated in replicate order; writes CSV + JSON (+ optional SVG) under
/// spec.out_dir.
SynthReport run_synth(const ExperimentSpec& spec);

/// Dataset experiment from files; writes metrics JSON/CSV and the
/// correspondence export. Returns the metrics document.
nlohmann::json run_dataset(const ExperimentSpec& spec);

/// Line-graph tooling: build + export a stack, report level sizes and the
/// size-bound check.
nlohmann::json run_linegraph(const std::string& edge_file, bool directed, int m,
                             const PruneConfig& prune, std::uint64_t seed,
                             const std::string& out_dir);

struct CheckOutcome {
  int lemma_pass = 0;
  int lemma_total = 0;
  double op_gradient_worst = 0.0;
  double pipeline_gradient_worst = 0.0;
  bool ok = false;
  std::string log;
};

/// Diagnostics behind the `check` subcommand: the incidence-pattern oracle
/// over seeded ER graphs plus the gradient suite.
CheckOutcome run_check_suite(std::uint64_t seed);

/// Minimal JSON-schema subset validator (type/required/properties/items/enum);
/// fills `why` with the first violation.
bool validate_against_schema(const nlohmann::json& doc, const nlohmann::json& schema,
                             std::string* why);

/// Column header shared by every per-replicate CSV this tool emits.
extern const char* kReplicateCsvHeader;
extern const char* kSummaryCsvHeader;

}  // namespace hgmn
