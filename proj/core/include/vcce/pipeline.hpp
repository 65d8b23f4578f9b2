#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vcce/cohort.hpp"
#include "vcce/counterfactual.hpp"
#include "vcce/gbdt.hpp"
#include "vcce/signal_prep.hpp"
#include "vcce/visualize.hpp"

namespace vcce::pipe {

enum class Stage { kIngest, kSegment, kFeatures, kTrain, kRank, kCurve, kExplain, kRender, kEvaluate };

const char* stage_name(Stage s);
Stage stage_from_name(const std::string& name);
std::vector<Stage> all_stages();

struct PipelineConfig {
  // [paths]
  std::string records_dir;
  std::string manifest;
  std::string workdir = "work";
  std::string clinician_labels;  // optional CSV of expert annotations
  std::string clinical_weights;  // optional CSV overriding the built-in table
  std::string signal_config;     // optional key-value file
  std::string layout_config;     // optional key-value file
  std::string cohort_rules;      // optional key-value file

  uint64_t seed = 42;
  int workers = 2;

  model::TrainParams train;  // [train]

  // [rank]
  int rfe_keep = 97;
  int rfe_step = 1;
  int rfe_trees = 50;

  // [curve]
  int curve_trees = 60;
  double curve_tolerance = 0.02;

  // [explain]
  std::vector<int> cf_feature_sizes = {5, 10, 15, 20};
  bool add_clinician_features = true;  // extra set: top 20 + V2_T,V3_T,V4_T,V6_T
  int cf_k = 3;
  int cf_queries_per_direction = 50;
  cf::SearchParams search;

  // [render]
  int render_feature_count = 24;

  static PipelineConfig defaults() { return {}; }
  static PipelineConfig from_file(const std::string& path);
  std::string dump() const;

  sig::SignalConfig load_signal_config() const;
  viz::ReportLayout load_layout() const;
  io::FilterRules load_cohort_rules() const;
  std::map<std::string, double> load_clinical_weights() const;
};

// Runs one stage: checks upstream artifacts (naming the stage to run first
// when one is missing), skips when the run manifest proves inputs unchanged,
// writes outputs atomically and records the manifest entry.
// Returns true when work was done, false when the stage was skipped.
bool run_stage(Stage stage, const PipelineConfig& cfg);

void run_all(const PipelineConfig& cfg);

// Collects reports, per-beat counterfactual tables and metric CSVs under
// workdir/bundle. Byte-identical on re-creation.
std::string make_report_bundle(const std::string& workdir);

// Artifact names inside the workdir.
namespace artifact {
inline constexpr const char* kCohort = "cohort.jsonl";
inline constexpr const char* kRPeaks = "rpeaks.jsonl";
inline constexpr const char* kFiducials = "fiducials.jsonl";
inline constexpr const char* kFeatures = "features.csv";
inline constexpr const char* kFeaturesMeta = "features_meta.json";
inline constexpr const char* kModel = "model.json";
inline constexpr const char* kTrainReport = "train_report.csv";
inline constexpr const char* kRanking = "rfe_ranking.csv";
inline constexpr const char* kCurve = "curve.csv";
inline constexpr const char* kCurveSummary = "curve_summary.json";
inline constexpr const char* kCounterfactuals = "counterfactuals.jsonl";
inline constexpr const char* kAlterations = "alterations.csv";
inline constexpr const char* kAlterationCounts = "alteration_counts.csv";
inline constexpr const char* kMarkings = "markings.jsonl";
inline constexpr const char* kReportsDir = "reports";
inline constexpr const char* kMetricsDir = "metrics";
inline constexpr const char* kRunManifest = "run_manifest.json";
inline constexpr const char* kLogsDir = "logs";
}  // namespace artifact

// Serialization helpers shared with tests.
std::string fiducials_to_jsonl(const std::string& record_id, const FiducialSet& set);
std::string rpeaks_to_json(const std::string& record_id, double fs, int reference_lead,
                           const std::vector<int64_t>& r_peaks);

}  // namespace vcce::pipe
