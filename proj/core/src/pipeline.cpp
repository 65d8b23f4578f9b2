#include "vcce/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "vcce/csv.hpp"
#include "vcce/errors.hpp"
#include "vcce/features.hpp"
#include "vcce/kv_config.hpp"
#include "vcce/metrics.hpp"
#include "vcce/parallel.hpp"
#include "vcce/rfe.hpp"
#include "vcce/rng.hpp"
#include "vcce/stats.hpp"
#include "vcce/text.hpp"
#include "vcce/wfdb.hpp"

namespace vcce::pipe {

namespace fs = std::filesystem;
using nlohmann::json;

const char* stage_name(Stage s) {
  switch (s) {
    case Stage::kIngest: return "ingest";
    case Stage::kSegment: return "segment";
    case Stage::kFeatures: return "features";
    case Stage::kTrain: return "train";
    case Stage::kRank: return "rank";
    case Stage::kCurve: return "curve";
    case Stage::kExplain: return "explain";
    case Stage::kRender: return "render";
    case Stage::kEvaluate: return "evaluate";
  }
  return "?";
}

Stage stage_from_name(const std::string& name) {
  for (Stage s : all_stages()) {
    if (name == stage_name(s)) return s;
  }
  throw PreconditionError("unknown stage: " + name);
}

std::vector<Stage> all_stages() {
  return {Stage::kIngest, Stage::kSegment, Stage::kFeatures, Stage::kTrain, Stage::kRank,
          Stage::kCurve,  Stage::kExplain, Stage::kRender,   Stage::kEvaluate};
}

PipelineConfig PipelineConfig::from_file(const std::string& path) {
  const KvConfig kv = KvConfig::from_file(path);
  PipelineConfig c;
  c.records_dir = kv.get("paths.records_dir", c.records_dir);
  c.manifest = kv.get("paths.manifest", c.manifest);
  c.workdir = kv.get("paths.workdir", c.workdir);
  c.clinician_labels = kv.get("paths.clinician_labels", c.clinician_labels);
  c.clinical_weights = kv.get("paths.clinical_weights", c.clinical_weights);
  c.signal_config = kv.get("paths.signal_config", c.signal_config);
  c.layout_config = kv.get("paths.layout_config", c.layout_config);
  c.cohort_rules = kv.get("paths.cohort_rules", c.cohort_rules);
  c.seed = static_cast<uint64_t>(kv.get_int("seed", static_cast<long long>(c.seed)));
  c.workers = static_cast<int>(kv.get_int("workers", c.workers));

  c.train.n_trees = static_cast<int>(kv.get_int("train.n_trees", c.train.n_trees));
  c.train.max_depth = static_cast<int>(kv.get_int("train.max_depth", c.train.max_depth));
  c.train.learning_rate = kv.get_double("train.learning_rate", c.train.learning_rate);
  c.train.min_child_weight = kv.get_double("train.min_child_weight", c.train.min_child_weight);
  c.train.lambda = kv.get_double("train.lambda", c.train.lambda);
  c.train.subsample = kv.get_double("train.subsample", c.train.subsample);
  c.train.seed = c.seed;

  c.rfe_keep = static_cast<int>(kv.get_int("rank.keep", c.rfe_keep));
  c.rfe_step = static_cast<int>(kv.get_int("rank.step", c.rfe_step));
  c.rfe_trees = static_cast<int>(kv.get_int("rank.n_trees", c.rfe_trees));
  c.curve_trees = static_cast<int>(kv.get_int("curve.n_trees", c.curve_trees));
  c.curve_tolerance = kv.get_double("curve.tolerance", c.curve_tolerance);

  if (kv.has("explain.feature_sizes")) {
    c.cf_feature_sizes.clear();
    for (const auto& v : kv.get_list("explain.feature_sizes")) {
      c.cf_feature_sizes.push_back(static_cast<int>(parse_int(v).value_or(0)));
    }
  }
  c.add_clinician_features = kv.get_bool("explain.add_clinician_features", c.add_clinician_features);
  c.cf_k = static_cast<int>(kv.get_int("explain.k", c.cf_k));
  c.cf_queries_per_direction = static_cast<int>(kv.get_int("explain.queries_per_direction",
                                                           c.cf_queries_per_direction));
  c.search.population = static_cast<int>(kv.get_int("explain.population", c.search.population));
  c.search.max_generations = static_cast<int>(kv.get_int("explain.max_generations", c.search.max_generations));
  c.search.stable_generations =
      static_cast<int>(kv.get_int("explain.stable_generations", c.search.stable_generations));
  c.search.margin = kv.get_double("explain.margin", c.search.margin);
  c.search.w_proximity = kv.get_double("explain.w_proximity", c.search.w_proximity);
  c.search.w_diversity = kv.get_double("explain.w_diversity", c.search.w_diversity);
  c.search.sparsify = kv.get_bool("explain.sparsify", c.search.sparsify);

  c.render_feature_count = static_cast<int>(kv.get_int("render.feature_count", c.render_feature_count));
  return c;
}

std::string PipelineConfig::dump() const {
  KvConfig kv;
  kv.set("seed", std::to_string(seed));
  kv.set("workers", std::to_string(workers));
  kv.set("paths.records_dir", records_dir);
  kv.set("paths.manifest", manifest);
  kv.set("paths.workdir", workdir);
  kv.set("paths.clinician_labels", clinician_labels);
  kv.set("paths.clinical_weights", clinical_weights);
  kv.set("paths.signal_config", signal_config);
  kv.set("paths.layout_config", layout_config);
  kv.set("paths.cohort_rules", cohort_rules);
  kv.set("train.n_trees", std::to_string(train.n_trees));
  kv.set("train.max_depth", std::to_string(train.max_depth));
  kv.set("train.learning_rate", format_double(train.learning_rate));
  kv.set("train.min_child_weight", format_double(train.min_child_weight));
  kv.set("train.lambda", format_double(train.lambda));
  kv.set("train.subsample", format_double(train.subsample));
  kv.set("rank.keep", std::to_string(rfe_keep));
  kv.set("rank.step", std::to_string(rfe_step));
  kv.set("rank.n_trees", std::to_string(rfe_trees));
  kv.set("curve.n_trees", std::to_string(curve_trees));
  kv.set("curve.tolerance", format_double(curve_tolerance));
  std::string sizes;
  for (size_t i = 0; i < cf_feature_sizes.size(); ++i) {
    sizes += (i ? ", " : "") + std::to_string(cf_feature_sizes[i]);
  }
  kv.set("explain.feature_sizes", sizes);
  kv.set("explain.add_clinician_features", add_clinician_features ? "on" : "off");
  kv.set("explain.k", std::to_string(cf_k));
  kv.set("explain.queries_per_direction", std::to_string(cf_queries_per_direction));
  kv.set("explain.population", std::to_string(search.population));
  kv.set("explain.max_generations", std::to_string(search.max_generations));
  kv.set("explain.stable_generations", std::to_string(search.stable_generations));
  kv.set("explain.margin", format_double(search.margin));
  kv.set("explain.w_proximity", format_double(search.w_proximity));
  kv.set("explain.w_diversity", format_double(search.w_diversity));
  kv.set("explain.sparsify", search.sparsify ? "on" : "off");
  kv.set("render.feature_count", std::to_string(render_feature_count));
  return kv.dump();
}

sig::SignalConfig PipelineConfig::load_signal_config() const {
  return signal_config.empty() ? sig::SignalConfig::defaults() : sig::SignalConfig::from_file(signal_config);
}

viz::ReportLayout PipelineConfig::load_layout() const {
  return layout_config.empty() ? viz::ReportLayout::defaults() : viz::ReportLayout::from_file(layout_config);
}

io::FilterRules PipelineConfig::load_cohort_rules() const {
  return cohort_rules.empty() ? io::FilterRules::defaults() : io::FilterRules::from_file(cohort_rules);
}

std::map<std::string, double> PipelineConfig::load_clinical_weights() const {
  if (clinical_weights.empty()) return metrics::MetricWeights::default_clinical_weights();
  return metrics::MetricWeights::clinical_weights_from_csv(read_text_file(clinical_weights));
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

namespace {

std::string file_hash_hex(const std::string& path) {
  const std::string content = read_text_file(path);
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(content.data(), content.size())));
  return buf;
}

std::string config_hash_hex(const PipelineConfig& cfg) {
  // The workdir is an artifact location, not semantic configuration; leaving
  // it out keeps runs into fresh directories byte-comparable.
  PipelineConfig hashed = cfg;
  hashed.workdir.clear();
  const std::string dump = hashed.dump();
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a64(dump.data(), dump.size())));
  return buf;
}

// Manifest keys for workdir-internal artifacts are workdir-relative.
std::string manifest_key(const PipelineConfig& cfg, const std::string& path) {
  const std::string prefix = (fs::path(cfg.workdir) / "").string();
  if (path.size() > prefix.size() && path.compare(0, prefix.size(), prefix) == 0) {
    return path.substr(prefix.size());
  }
  return path;
}

struct StagePlan {
  // input path -> stage that produces it (empty = external input)
  std::vector<std::pair<std::string, std::string>> inputs;
  std::vector<std::string> outputs;
};

StagePlan plan_for(Stage stage, const PipelineConfig& cfg) {
  const fs::path w(cfg.workdir);
  auto in = [&](const char* name, const char* producer) {
    return std::make_pair((w / name).string(), std::string(producer));
  };
  StagePlan p;
  switch (stage) {
    case Stage::kIngest:
      p.inputs.push_back({cfg.manifest, ""});
      p.outputs = {(w / artifact::kCohort).string()};
      break;
    case Stage::kSegment:
      p.inputs.push_back(in(artifact::kCohort, "ingest"));
      p.outputs = {(w / artifact::kRPeaks).string(), (w / artifact::kFiducials).string()};
      break;
    case Stage::kFeatures:
      p.inputs.push_back(in(artifact::kCohort, "ingest"));
      p.inputs.push_back(in(artifact::kRPeaks, "segment"));
      p.inputs.push_back(in(artifact::kFiducials, "segment"));
      p.outputs = {(w / artifact::kFeatures).string(), (w / artifact::kFeaturesMeta).string()};
      break;
    case Stage::kTrain:
      p.inputs.push_back(in(artifact::kFeatures, "features"));
      p.inputs.push_back(in(artifact::kFeaturesMeta, "features"));
      p.outputs = {(w / artifact::kModel).string(), (w / artifact::kTrainReport).string()};
      break;
    case Stage::kRank:
      p.inputs.push_back(in(artifact::kFeatures, "features"));
      p.inputs.push_back(in(artifact::kFeaturesMeta, "features"));
      p.outputs = {(w / artifact::kRanking).string()};
      break;
    case Stage::kCurve:
      p.inputs.push_back(in(artifact::kFeatures, "features"));
      p.inputs.push_back(in(artifact::kRanking, "rank"));
      p.outputs = {(w / artifact::kCurve).string(), (w / artifact::kCurveSummary).string()};
      break;
    case Stage::kExplain:
      p.inputs.push_back(in(artifact::kFeatures, "features"));
      p.inputs.push_back(in(artifact::kFeaturesMeta, "features"));
      p.inputs.push_back(in(artifact::kModel, "train"));
      p.inputs.push_back(in(artifact::kRanking, "rank"));
      p.outputs = {(w / artifact::kCounterfactuals).string(), (w / artifact::kAlterations).string(),
                   (w / artifact::kAlterationCounts).string()};
      break;
    case Stage::kRender:
      p.inputs.push_back(in(artifact::kCohort, "ingest"));
      p.inputs.push_back(in(artifact::kRPeaks, "segment"));
      p.inputs.push_back(in(artifact::kFiducials, "segment"));
      p.inputs.push_back(in(artifact::kFeatures, "features"));
      p.inputs.push_back(in(artifact::kCounterfactuals, "explain"));
      p.outputs = {(w / artifact::kMarkings).string()};  // plus one SVG per record
      break;
    case Stage::kEvaluate:
      p.inputs.push_back(in(artifact::kFeatures, "features"));
      p.inputs.push_back(in(artifact::kFeaturesMeta, "features"));
      p.inputs.push_back(in(artifact::kModel, "train"));
      p.inputs.push_back(in(artifact::kCounterfactuals, "explain"));
      p.inputs.push_back(in(artifact::kMarkings, "render"));
      p.outputs = {(w / artifact::kMetricsDir / "classification.csv").string(),
                   (w / artifact::kMetricsDir / "sparsity.csv").string()};
      break;
  }
  return p;
}

json load_run_manifest(const std::string& workdir) {
  const fs::path path = fs::path(workdir) / artifact::kRunManifest;
  if (!fs::exists(path)) return json::object();
  json j = json::parse(read_text_file(path.string()), nullptr, false);
  return j.is_discarded() ? json::object() : j;
}

void save_run_manifest(const std::string& workdir, const json& manifest) {
  write_text_file_atomic((fs::path(workdir) / artifact::kRunManifest).string(), manifest.dump(1) + "\n");
}

void append_timing(const PipelineConfig& cfg, const std::vector<std::string>& lines) {
  if (lines.empty()) return;
  const fs::path dir = fs::path(cfg.workdir) / artifact::kLogsDir;
  fs::create_directories(dir);
  const fs::path path = dir / "timing.txt";
  std::string content;
  if (fs::exists(path)) content = read_text_file(path.string());
  for (const auto& line : lines) {
    content += line;
    content += '\n';
  }
  write_text_file(path.string(), content);
}

// ---------------------------------------------------------------------------
// Shared stage helpers
// ---------------------------------------------------------------------------

struct LoadedCohort {
  io::Cohort cohort;
  std::map<std::string, std::string> path_of;     // record_id -> file path
  std::map<std::string, std::string> patient_of;  // record_id -> patient
};

LoadedCohort load_cohort_with_paths(const PipelineConfig& cfg) {
  LoadedCohort out;
  out.cohort = io::cohort_from_jsonl(read_text_file((fs::path(cfg.workdir) / artifact::kCohort).string()));
  if (!cfg.manifest.empty() && fs::exists(cfg.manifest)) {
    const auto manifest = io::load_manifest(cfg.manifest);
    for (const auto& row : manifest.rows) out.path_of[row.record_id] = row.path;
  }
  for (const auto& rec : out.cohort.records) out.patient_of[rec.record_id] = rec.patient_id;
  return out;
}

std::string resolve_record_path(const PipelineConfig& cfg, const LoadedCohort& c, const std::string& record_id) {
  std::string rel;
  auto it = c.path_of.find(record_id);
  if (it != c.path_of.end() && !it->second.empty()) rel = it->second;
  fs::path base(cfg.records_dir);
  if (!rel.empty()) {
    fs::path p = base / rel;
    if (fs::exists(p) || fs::exists(p.string() + ".hea")) return p.string();
  }
  for (const char* ext : {".csv", ".hea"}) {
    fs::path p = base / (record_id + ext);
    if (fs::exists(p)) return p.string();
  }
  throw PreconditionError("record file not found for " + record_id + " under " + cfg.records_dir);
}

struct SegmentedRecord {
  std::string record_id;
  EcgRecord denoised;
  FiducialSet fiducials;
  std::vector<int64_t> r_peaks;
  int label = 0;
  std::string split;
};

// Loads, denoises and (re)uses persisted fiducials for every cohort record.
std::vector<SegmentedRecord> load_segmented(const PipelineConfig& cfg, const LoadedCohort& c) {
  const auto sig_cfg = cfg.load_signal_config();
  // Parse persisted r-peaks and fiducials.
  std::map<std::string, std::pair<int, std::vector<int64_t>>> rpeaks;  // record -> (ref lead, peaks)
  for (const auto& line : split(read_text_file((fs::path(cfg.workdir) / artifact::kRPeaks).string()), '\n')) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    auto& entry = rpeaks[j.at("record_id").get<std::string>()];
    entry.first = j.at("reference_lead").get<int>();
    entry.second = j.at("r_peaks").get<std::vector<int64_t>>();
  }
  std::map<std::string, std::map<int, std::array<LeadFiducials, kNumLeads>>> fid;  // record -> beat -> leads
  std::map<std::string, std::map<int, int64_t>> beat_r;
  for (const auto& line : split(read_text_file((fs::path(cfg.workdir) / artifact::kFiducials).string()), '\n')) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    const auto rec = j.at("record_id").get<std::string>();
    const int beat = j.at("beat").get<int>();
    const int lead = lead_index(j.at("lead").get<std::string>());
    if (lead < 0) throw ParseError("fiducials jsonl: bad lead");
    LeadFiducials lf;
    const auto& jf = j.at("fiducials");
    for (int f = 0; f < kNumFiducials; ++f) {
      const auto it = jf.find(fiducial_name(static_cast<Fiducial>(f)));
      if (it != jf.end() && !it->is_null()) lf.set(static_cast<Fiducial>(f), it->get<int64_t>());
    }
    fid[rec][beat][lead] = lf;
    beat_r[rec][beat] = j.at("r_peak_global").get<int64_t>();
  }

  std::vector<SegmentedRecord> out(c.cohort.records.size());
  parallel_for(c.cohort.records.size(), cfg.workers, [&](size_t i) {
    const auto& rec = c.cohort.records[i];
    SegmentedRecord sr;
    sr.record_id = rec.record_id;
    sr.label = rec.label.cls == DiagnosisClass::kMi ? 1 : 0;
    sr.split = rec.split;
    const auto raw = io::load_record(resolve_record_path(cfg, c, rec.record_id));
    sr.denoised = sig::denoise(raw, sig_cfg);
    const auto rp = rpeaks.find(rec.record_id);
    if (rp == rpeaks.end()) throw PreconditionError("no r-peaks for record " + rec.record_id + "; run segment first");
    sr.r_peaks = rp->second.second;
    sr.fiducials.reference_lead = rp->second.first;
    const auto frec = fid.find(rec.record_id);
    if (frec != fid.end()) {
      for (const auto& [beat, leads] : frec->second) {
        BeatFiducials bf;
        bf.beat_index = beat;
        bf.r_peak_global = beat_r[rec.record_id][beat];
        bf.leads = leads;
        sr.fiducials.beats.push_back(bf);
      }
    }
    out[i] = std::move(sr);
  });
  return out;
}

feat::FeatureMatrix load_features(const PipelineConfig& cfg) {
  return feat::feature_matrix_from_csv(read_text_file((fs::path(cfg.workdir) / artifact::kFeatures).string()));
}

std::vector<double> load_imputation_means(const PipelineConfig& cfg) {
  const json meta = json::parse(read_text_file((fs::path(cfg.workdir) / artifact::kFeaturesMeta).string()));
  return meta.at("imputation_means").get<std::vector<double>>();
}

struct Ranking {
  std::vector<int> ordered;  // survivors by importance, then eliminated by rank
  std::vector<int> survivors;
};

Ranking load_ranking(const PipelineConfig& cfg) {
  const auto csv = read_csv_file((fs::path(cfg.workdir) / artifact::kRanking).string());
  const int fcol = csv.column("feature");
  const int rcol = csv.column("rank");
  if (fcol < 0 || rcol < 0) throw ParseError("rfe_ranking.csv: missing columns");
  Ranking r;
  for (const auto& row : csv.rows) {
    const int idx = feat::feature_index(row[fcol]);
    if (idx < 0) throw ParseError("rfe_ranking.csv: unknown feature " + row[fcol]);
    r.ordered.push_back(idx);
    if (parse_int(row[rcol]).value_or(0) == 1) r.survivors.push_back(idx);
  }
  return r;
}

// The named counterfactual feature sets: "5", "10", ... plus the clinician
// augmented "24" (top 20 + the four expert T waves).
std::vector<std::pair<std::string, std::vector<int>>> cf_feature_sets(const PipelineConfig& cfg,
                                                                      const Ranking& ranking) {
  std::vector<std::pair<std::string, std::vector<int>>> sets;
  for (int size : cfg.cf_feature_sizes) {
    if (size <= 0 || size > static_cast<int>(ranking.survivors.size())) {
      throw PreconditionError("explain: feature set size " + std::to_string(size) + " exceeds ranked survivors");
    }
    sets.emplace_back(std::to_string(size),
                      std::vector<int>(ranking.survivors.begin(), ranking.survivors.begin() + size));
  }
  if (cfg.add_clinician_features) {
    const int base = std::min<int>(20, static_cast<int>(ranking.survivors.size()));
    std::vector<int> ext(ranking.survivors.begin(), ranking.survivors.begin() + base);
    for (const char* name : {"V2_T", "V3_T", "V4_T", "V6_T"}) {
      const int idx = feat::feature_index(name);
      if (std::find(ext.begin(), ext.end(), idx) == ext.end()) ext.push_back(idx);
    }
    sets.emplace_back(std::to_string(ext.size()), std::move(ext));
  }
  return sets;
}

uint64_t derive_seed(uint64_t base, const std::string& tag) {
  uint64_t h = fnv1a64(tag.data(), tag.size());
  h = fnv1a64(&base, sizeof(base), h);
  return h;
}

}  // namespace

std::string fiducials_to_jsonl(const std::string& record_id, const FiducialSet& set) {
  std::string out;
  for (const auto& beat : set.beats) {
    for (int lead = 0; lead < kNumLeads; ++lead) {
      json j;
      j["record_id"] = record_id;
      j["beat"] = beat.beat_index;
      j["lead"] = kLeadNames[lead];
      j["r_peak_global"] = beat.r_peak_global;
      json jf = json::object();
      for (int f = 0; f < kNumFiducials; ++f) {
        const auto v = beat.leads[lead].get(static_cast<Fiducial>(f));
        if (v) jf[fiducial_name(static_cast<Fiducial>(f))] = *v;
      }
      j["fiducials"] = std::move(jf);
      out += j.dump();
      out += '\n';
    }
  }
  return out;
}

std::string rpeaks_to_json(const std::string& record_id, double fs, int reference_lead,
                           const std::vector<int64_t>& r_peaks) {
  json j;
  j["record_id"] = record_id;
  j["fs"] = fs;
  j["reference_lead"] = reference_lead;
  j["r_peaks"] = r_peaks;
  return j.dump();
}

// ---------------------------------------------------------------------------
// Stage bodies
// ---------------------------------------------------------------------------

namespace {

void stage_ingest(const PipelineConfig& cfg) {
  if (cfg.manifest.empty() || !fs::exists(cfg.manifest)) {
    throw PreconditionError("ingest: manifest file not found: " + cfg.manifest);
  }
  const auto manifest = io::load_manifest(cfg.manifest);
  auto cohort = io::filter_cohort(manifest, cfg.load_cohort_rules());
  io::balanced_split(cohort, cfg.seed);
  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kCohort).string(), io::cohort_to_jsonl(cohort));
}

void stage_segment(const PipelineConfig& cfg) {
  const auto c = load_cohort_with_paths(cfg);
  const auto sig_cfg = cfg.load_signal_config();

  struct Result {
    std::string rpeaks_line;
    std::string fiducials_block;
  };
  std::vector<Result> results(c.cohort.records.size());
  parallel_for(c.cohort.records.size(), cfg.workers, [&](size_t i) {
    const auto& rec = c.cohort.records[i];
    const auto raw = io::load_record(resolve_record_path(cfg, c, rec.record_id));
    const auto denoised = sig::denoise(raw, sig_cfg);
    const auto [ref_lead, r_peaks] = sig::detect_reference_r_peaks(denoised, raw, sig_cfg);
    const auto fiducials = sig::delineate(denoised, r_peaks, ref_lead, sig_cfg);
    results[i].rpeaks_line = rpeaks_to_json(rec.record_id, raw.fs(), ref_lead, r_peaks);
    results[i].fiducials_block = fiducials_to_jsonl(rec.record_id, fiducials);
  });

  std::string rpeaks_out, fiducials_out;
  for (const auto& r : results) {
    rpeaks_out += r.rpeaks_line;
    rpeaks_out += '\n';
    fiducials_out += r.fiducials_block;
  }
  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kRPeaks).string(), rpeaks_out);
  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kFiducials).string(), fiducials_out);
}

void stage_features(const PipelineConfig& cfg) {
  const auto c = load_cohort_with_paths(cfg);
  const auto segmented = load_segmented(cfg, c);

  std::vector<feat::RecordFeatureInput> inputs;
  inputs.reserve(segmented.size());
  for (const auto& sr : segmented) {
    feat::RecordFeatureInput in;
    in.record_id = sr.record_id;
    in.denoised = &sr.denoised;
    in.fiducials = &sr.fiducials;
    in.r_peaks = sr.r_peaks;
    in.label = sr.label;
    in.split = sr.split;
    inputs.push_back(std::move(in));
  }
  const auto matrix = feat::build_feature_matrix(inputs);
  const auto means = feat::imputation_means(matrix);

  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kFeatures).string(),
                         feat::feature_matrix_to_csv(matrix));
  json meta;
  meta["columns"] = matrix.names;
  meta["imputation_means"] = means;
  meta["fs"] = segmented.empty() ? 0.0 : segmented.front().denoised.fs();
  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kFeaturesMeta).string(), meta.dump(1) + "\n");
}

struct SplitRows {
  std::vector<uint32_t> train;
  std::vector<uint32_t> test;
};

SplitRows split_rows(const feat::FeatureMatrix& m) {
  SplitRows s;
  for (size_t r = 0; r < m.n_rows(); ++r) {
    (m.splits[r] == "test" ? s.test : s.train).push_back(static_cast<uint32_t>(r));
  }
  return s;
}

std::string classification_row(const std::string& name, std::span<const int> truth, std::span<const int> pred) {
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    if (pred[i] == 1 && truth[i] == 1) ++tp;
    else if (pred[i] == 1) ++fp;
    else if (truth[i] == 1) ++fn;
    else ++tn;
  }
  const auto m = metrics::prf1(tp, fp, fn);
  const double acc = truth.empty() ? 0.0 : static_cast<double>(tp + tn) / static_cast<double>(truth.size());
  return name + "," + format_double(m.precision) + "," + format_double(m.recall) + "," + format_double(m.f1) +
         "," + format_double(acc) + "," + std::to_string(tp) + "," + std::to_string(fp) + "," +
         std::to_string(fn) + "," + std::to_string(tn) + "\n";
}

void stage_train(const PipelineConfig& cfg) {
  auto matrix = load_features(cfg);
  const auto means = load_imputation_means(cfg);
  feat::impute(matrix, means);
  const auto rows = split_rows(matrix);

  std::vector<int> train_labels;
  for (uint32_t r : rows.train) train_labels.push_back(matrix.labels[r]);
  std::vector<int> all_features(matrix.n_cols());
  std::iota(all_features.begin(), all_features.end(), 0);
  const auto sub = model::gather_columns(matrix.values, matrix.n_cols(), all_features, rows.train);

  auto params = cfg.train;
  params.seed = cfg.seed;
  auto gbdt = model::train(sub, matrix.n_cols(), train_labels, params, matrix.names);
  gbdt.imputation_means = means;
  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kModel).string(), gbdt.to_json() + "\n");

  std::string report = "split,precision,recall,f1,accuracy,tp,fp,fn,tn\n";
  for (const auto& [name, rws] : {std::pair{std::string("train"), rows.train}, {std::string("test"), rows.test}}) {
    std::vector<int> truth, pred;
    for (uint32_t r : rws) {
      truth.push_back(matrix.labels[r]);
      pred.push_back(gbdt.predict_class(std::span(matrix.row(r), matrix.n_cols())));
    }
    report += classification_row(name, truth, pred);
  }
  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kTrainReport).string(), report);
}

void stage_rank(const PipelineConfig& cfg) {
  auto matrix = load_features(cfg);
  feat::impute(matrix, load_imputation_means(cfg));
  const auto rows = split_rows(matrix);

  std::vector<int> train_labels;
  for (uint32_t r : rows.train) train_labels.push_back(matrix.labels[r]);
  std::vector<int> all_features(matrix.n_cols());
  std::iota(all_features.begin(), all_features.end(), 0);
  const auto sub = model::gather_columns(matrix.values, matrix.n_cols(), all_features, rows.train);

  auto params = cfg.train;
  params.n_trees = cfg.rfe_trees;
  params.seed = cfg.seed;
  const auto result = model::rfe_rank(sub, matrix.n_cols(), train_labels, params, cfg.rfe_keep, matrix.names,
                                      cfg.rfe_step);

  // Survivors first (importance order), then the eliminated by ascending rank.
  std::string csv = "feature,rank,importance\n";
  for (size_t i = 0; i < result.survivors.size(); ++i) {
    csv += matrix.names[result.survivors[i]] + ",1," + format_double(result.survivor_importance[i]) + "\n";
  }
  std::vector<int> eliminated;
  for (size_t f = 0; f < result.ranks.size(); ++f) {
    if (result.ranks[f] != 1) eliminated.push_back(static_cast<int>(f));
  }
  std::sort(eliminated.begin(), eliminated.end(),
            [&](int a, int b) { return result.ranks[a] != result.ranks[b] ? result.ranks[a] < result.ranks[b] : a < b; });
  for (int f : eliminated) {
    csv += matrix.names[f] + "," + std::to_string(result.ranks[f]) + ",\n";
  }
  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kRanking).string(), csv);
}

void stage_curve(const PipelineConfig& cfg) {
  auto matrix = load_features(cfg);
  feat::impute(matrix, load_imputation_means(cfg));
  const auto rows = split_rows(matrix);
  const auto ranking = load_ranking(cfg);

  model::EvalSplit split{rows.train, rows.test};
  auto params = cfg.train;
  params.n_trees = cfg.curve_trees;
  params.seed = cfg.seed;
  const auto curve = model::incremental_curve(matrix.values, matrix.n_cols(), matrix.labels, ranking.survivors,
                                              split, params, matrix.names);

  std::string csv = "feature_count,f1\n";
  for (const auto& p : curve) csv += std::to_string(p.feature_count) + "," + format_double(p.f1) + "\n";
  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kCurve).string(), csv);

  json summary;
  summary["tolerance"] = cfg.curve_tolerance;
  summary["minimal_feature_count"] = model::tolerance_minimal_k(curve, cfg.curve_tolerance);
  double best = 0;
  for (const auto& p : curve) best = std::max(best, p.f1);
  summary["best_f1"] = best;
  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kCurveSummary).string(), summary.dump(1) + "\n");
}

void stage_explain(const PipelineConfig& cfg) {
  auto matrix = load_features(cfg);
  const auto means = load_imputation_means(cfg);
  feat::impute(matrix, means);
  const auto rows = split_rows(matrix);
  const auto ranking = load_ranking(cfg);
  const auto sets = cf_feature_sets(cfg, ranking);

  std::vector<int> train_labels;
  for (uint32_t r : rows.train) train_labels.push_back(matrix.labels[r]);

  const auto all_ranges = [&] {
    std::vector<int> all(matrix.n_cols());
    std::iota(all.begin(), all.end(), 0);
    const auto train_matrix = model::gather_columns(matrix.values, matrix.n_cols(), all, rows.train);
    return cf::derive_ranges(train_matrix, matrix.n_cols());
  }();

  std::string cf_jsonl;
  std::string alter_csv = "direction,feature_set,pred,true,counterfactuals,rank,feature,count\n";
  std::string counts_csv = "direction,feature_set,feature,count,counterfactuals\n";
  std::vector<std::string> timing_lines;

  for (const auto& [label, features] : sets) {
    // Submodel restricted to this feature set.
    const auto train_sub = model::gather_columns(matrix.values, matrix.n_cols(), features, rows.train);
    std::vector<std::string> names;
    for (int f : features) names.push_back(matrix.names[f]);
    auto params = cfg.train;
    params.seed = derive_seed(cfg.seed, "submodel-" + label);
    auto sub_model = model::train(train_sub, features.size(), train_labels, params, names);
    std::vector<double> sub_means;
    for (int f : features) sub_means.push_back(means[f]);
    sub_model.imputation_means = sub_means;
    write_text_file_atomic((fs::path(cfg.workdir) / ("submodel_" + label + ".json")).string(),
                           sub_model.to_json() + "\n");

    std::vector<cf::FeatureRange> ranges;
    for (int f : features) ranges.push_back(all_ranges[f]);

    const auto test_sub = model::gather_columns(matrix.values, matrix.n_cols(), features, rows.test);
    std::vector<int> test_labels;
    for (uint32_t r : rows.test) test_labels.push_back(matrix.labels[r]);

    for (const int target : {1, 0}) {
      const std::string direction = target == 1 ? "NORM_to_MI" : "MI_to_NORM";
      const int source = target == 1 ? 0 : 1;
      // Sample the beat pool first, then drop misdiagnosed beats, so the
      // pred/true ratio reads correct-vs-sampled.
      std::vector<uint32_t> pool;
      for (uint32_t i = 0; i < test_labels.size(); ++i) {
        if (test_labels[i] == source) pool.push_back(i);
      }
      if (static_cast<int>(pool.size()) > cfg.cf_queries_per_direction) {
        pool.resize(cfg.cf_queries_per_direction);
      }
      std::vector<int> pool_labels;
      std::vector<double> pool_matrix;
      for (uint32_t i : pool) {
        pool_labels.push_back(test_labels[i]);
        pool_matrix.insert(pool_matrix.end(), test_sub.begin() + i * features.size(),
                           test_sub.begin() + (i + 1) * features.size());
      }
      const auto correct = cf::filter_correct(sub_model, pool_matrix, features.size(), pool_labels);
      std::vector<uint32_t> queries;
      for (uint32_t i : correct.rows) queries.push_back(pool[i]);
      const int64_t source_total = static_cast<int64_t>(pool.size());

      struct QueryResult {
        std::string jsonl;
        std::optional<cf::CounterfactualSet> set;
        double seconds = 0;
        std::string id;
      };
      std::vector<QueryResult> results(queries.size());
      parallel_for(queries.size(), cfg.workers, [&](size_t qi) {
        const uint32_t row = queries[qi];
        const uint32_t global_row = rows.test[row];
        const auto& prov = matrix.provenance[global_row];
        std::vector<double> original(test_sub.begin() + row * features.size(),
                                     test_sub.begin() + (row + 1) * features.size());
        auto query = cf::make_query(std::move(original), target, cfg.cf_k, ranges, {}, names);
        auto search = cfg.search;
        search.seed = derive_seed(cfg.seed, "cf-" + label + "-" + direction + "-" + prov.record_id + "#" +
                                                std::to_string(prov.beat_index));
        const auto t0 = std::chrono::steady_clock::now();
        QueryResult qr;
        qr.id = prov.record_id + "#" + std::to_string(prov.beat_index);
        try {
          auto set = cf::generate(sub_model, query, search);
          json j;
          j["feature_set"] = label;
          j["direction"] = direction;
          j["record_id"] = prov.record_id;
          j["beat"] = prov.beat_index;
          j["target"] = target;
          j["features"] = names;
          j["original"] = query.original;
          json cfs = json::array();
          for (const auto& item : set.items) {
            json jc;
            jc["values"] = item.values;
            jc["p_target"] = item.p_target;
            jc["proximity"] = item.proximity;
            jc["sparsity"] = item.sparsity_count;
            json changed = json::object();
            for (const auto& [nm, oldnew] : item.changed) changed[nm] = {oldnew.first, oldnew.second};
            jc["changed"] = std::move(changed);
            cfs.push_back(std::move(jc));
          }
          j["counterfactuals"] = std::move(cfs);
          qr.jsonl = j.dump() + "\n";
          qr.set = std::move(set);
        } catch (const Error& e) {
          json j;
          j["feature_set"] = label;
          j["direction"] = direction;
          j["record_id"] = prov.record_id;
          j["beat"] = prov.beat_index;
          j["error"] = e.what();
          qr.jsonl = j.dump() + "\n";
        }
        qr.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        results[qi] = std::move(qr);
      });

      std::vector<cf::CounterfactualSet> ok_sets;
      for (auto& qr : results) {
        cf_jsonl += qr.jsonl;
        if (qr.set) ok_sets.push_back(std::move(*qr.set));
        timing_lines.push_back("explain " + label + " " + direction + " " + qr.id + " " +
                               format_fixed(qr.seconds, 3) + "s");
      }
      const auto stats = cf::alteration_stats(ok_sets);
      const std::string pred_true = std::to_string(queries.size()) + "/" + std::to_string(source_total);
      int rank = 1;
      for (const auto& [feature, count] : stats.top(3)) {
        alter_csv += direction + "," + label + "," + std::to_string(queries.size()) + "," +
                     std::to_string(source_total) + "," + std::to_string(stats.total_counterfactuals) + "," +
                     std::to_string(rank++) + "," + feature + "," + std::to_string(count) + "\n";
      }
      for (const auto& [feature, count] : stats.ranking) {
        counts_csv += direction + "," + label + "," + feature + "," + std::to_string(count) + "," +
                      std::to_string(stats.total_counterfactuals) + "\n";
      }
    }
  }

  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kCounterfactuals).string(), cf_jsonl);
  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kAlterations).string(), alter_csv);
  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kAlterationCounts).string(), counts_csv);
  append_timing(cfg, timing_lines);
}

struct CfRecord {
  std::string record_id;
  int beat = 0;
  cf::CounterfactualSet set;
  std::string direction;
};

std::vector<CfRecord> load_counterfactuals(const PipelineConfig& cfg, const std::string& wanted_set) {
  std::vector<CfRecord> out;
  for (const auto& line :
       split(read_text_file((fs::path(cfg.workdir) / artifact::kCounterfactuals).string()), '\n')) {
    if (trim(line).empty()) continue;
    const json j = json::parse(line);
    if (j.contains("error")) continue;
    if (j.at("feature_set").get<std::string>() != wanted_set) continue;
    CfRecord r;
    r.record_id = j.at("record_id").get<std::string>();
    r.beat = j.at("beat").get<int>();
    r.direction = j.at("direction").get<std::string>();
    r.set.query.original = j.at("original").get<std::vector<double>>();
    r.set.query.target_class = j.at("target").get<int>();
    r.set.query.feature_names = j.at("features").get<std::vector<std::string>>();
    r.set.query.features_to_vary.resize(r.set.query.feature_names.size());
    std::iota(r.set.query.features_to_vary.begin(), r.set.query.features_to_vary.end(), 0);
    for (const auto& jc : j.at("counterfactuals")) {
      cf::CounterfactualItem item;
      item.values = jc.at("values").get<std::vector<double>>();
      item.p_target = jc.at("p_target").get<double>();
      item.proximity = jc.at("proximity").get<double>();
      item.sparsity_count = jc.at("sparsity").get<int>();
      for (const auto& [name, oldnew] : jc.at("changed").items()) {
        item.changed[name] = {oldnew[0].get<double>(), oldnew[1].get<double>()};
      }
      r.set.items.push_back(std::move(item));
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string render_set_label(const PipelineConfig& cfg) { return std::to_string(cfg.render_feature_count); }

void stage_render(const PipelineConfig& cfg) {
  const auto c = load_cohort_with_paths(cfg);
  const auto segmented = load_segmented(cfg, c);
  const auto matrix = load_features(cfg);
  const auto layout = cfg.load_layout();
  auto cf_records = load_counterfactuals(cfg, render_set_label(cfg));

  std::map<std::string, std::vector<const CfRecord*>> by_record;
  for (const auto& r : cf_records) by_record[r.record_id].push_back(&r);

  const fs::path reports = fs::path(cfg.workdir) / artifact::kReportsDir;
  fs::create_directories(reports);

  std::string markings_jsonl;
  std::vector<std::string> skipped_all;
  // Records render in cohort order; only those with counterfactuals get files.
  for (const auto& sr : segmented) {
    const auto it = by_record.find(sr.record_id);
    if (it == by_record.end()) continue;
    std::vector<viz::BeatCfSet> beat_sets;
    for (const CfRecord* r : it->second) beat_sets.push_back({r->record_id, r->beat, &r->set});
    const auto combined = viz::prepare_data(beat_sets, matrix);
    const auto bundle = viz::build_markings(combined, sr.denoised, sr.fiducials, cfg.render_feature_count);

    const std::string svg = viz::render_report(sr.denoised, bundle.markings, layout);
    write_text_file_atomic((reports / (sr.record_id + ".svg")).string(), svg);

    for (const auto& m : bundle.markings) {
      json j;
      j["record_id"] = sr.record_id;
      j["lead"] = kLeadNames[m.lead];
      j["beat"] = m.beat_index;
      j["feature"] = m.feature_name;
      j["count"] = m.frequency_count;
      j["out_of"] = m.out_of;
      j["emphasis"] = m.emphasis;
      markings_jsonl += j.dump() + "\n";
    }
    for (const auto& s : bundle.skipped) skipped_all.push_back(sr.record_id + ": " + s);
  }
  write_text_file_atomic((fs::path(cfg.workdir) / artifact::kMarkings).string(), markings_jsonl);
  if (!skipped_all.empty()) {
    std::string log;
    for (const auto& s : skipped_all) log += s + "\n";
    const fs::path dir = fs::path(cfg.workdir) / artifact::kLogsDir;
    fs::create_directories(dir);
    write_text_file((dir / "render_skipped.txt").string(), log);
  }
}

void stage_evaluate(const PipelineConfig& cfg) {
  auto matrix = load_features(cfg);
  feat::impute(matrix, load_imputation_means(cfg));
  const auto rows = split_rows(matrix);
  const auto full_model =
      model::GbdtModel::from_json(read_text_file((fs::path(cfg.workdir) / artifact::kModel).string()));

  const fs::path mdir = fs::path(cfg.workdir) / artifact::kMetricsDir;
  fs::create_directories(mdir);

  // Classification metrics: full model and the render-set submodel.
  std::vector<int> truth;
  std::vector<int> pred_full;
  for (uint32_t r : rows.test) {
    truth.push_back(matrix.labels[r]);
    pred_full.push_back(full_model.predict_class(std::span(matrix.row(r), matrix.n_cols())));
  }
  std::string cls_csv = "model,precision,recall,f1,accuracy,tp,fp,fn,tn\n";
  cls_csv += classification_row("full_194", truth, pred_full);

  const std::string sub_label = render_set_label(cfg);
  const fs::path sub_path = fs::path(cfg.workdir) / ("submodel_" + sub_label + ".json");
  std::vector<int> pred_sub;
  if (fs::exists(sub_path)) {
    const auto sub_model = model::GbdtModel::from_json(read_text_file(sub_path.string()));
    std::vector<int> sub_features;
    for (const auto& name : sub_model.feature_names) sub_features.push_back(feat::feature_index(name));
    const auto test_sub = model::gather_columns(matrix.values, matrix.n_cols(), sub_features, rows.test);
    for (size_t i = 0; i < rows.test.size(); ++i) {
      pred_sub.push_back(
          sub_model.predict_class(std::span(test_sub.data() + i * sub_features.size(), sub_features.size())));
    }
    cls_csv += classification_row("top_" + sub_label, truth, pred_sub);
  }
  write_text_file_atomic((mdir / "classification.csv").string(), cls_csv);

  if (!pred_sub.empty()) {
    const auto mc = metrics::mcnemar_counts(truth, pred_full, pred_sub);
    std::string mc_csv = "both_correct,full_only,sub_only,both_wrong\n";
    mc_csv += std::to_string(mc.both_correct) + "," + std::to_string(mc.a_only) + "," + std::to_string(mc.b_only) +
              "," + std::to_string(mc.both_wrong) + "\n";
    write_text_file_atomic((mdir / "mcnemar.csv").string(), mc_csv);
  }

  // Sparsity comparison on the rendered counterfactual set.
  const auto c = load_cohort_with_paths(cfg);
  auto cf_records = load_counterfactuals(cfg, sub_label);
  std::string sparsity_csv = "scheme,mean,std,n\n";
  if (!cf_records.empty()) {
    // Ranges: the generation-time ranges are not persisted; rebuild from the
    // training rows so the normalization matches derive_ranges exactly.
    std::vector<int> set_features;
    for (const auto& name : cf_records.front().set.query.feature_names) {
      set_features.push_back(feat::feature_index(name));
    }
    const auto train_sub = model::gather_columns(matrix.values, matrix.n_cols(), set_features, rows.train);
    auto ranges = cf::derive_ranges(train_sub, set_features.size());
    std::vector<cf::CounterfactualSet> sets;
    std::vector<std::string> patients;
    for (auto& r : cf_records) {
      r.set.query.ranges = ranges;
      for (size_t i = 0; i < r.set.query.original.size(); ++i) {
        r.set.query.ranges[i].lo = std::min(r.set.query.ranges[i].lo, r.set.query.original[i]);
        r.set.query.ranges[i].hi = std::max(r.set.query.ranges[i].hi, r.set.query.original[i]);
      }
      sets.push_back(r.set);
      auto pit = c.patient_of.find(r.record_id);
      patients.push_back(pit == c.patient_of.end() ? r.record_id : pit->second);
    }

    // Clinical weights: features outside the expert table carry zero weight.
    auto clinical = cfg.load_clinical_weights();
    const auto sub_model = model::GbdtModel::from_json(read_text_file(sub_path.string()));
    std::map<std::string, double> model_w;
    for (size_t i = 0; i < sub_model.feature_names.size(); ++i) {
      model_w[sub_model.feature_names[i]] = sub_model.gain_importance[i];
    }
    for (const auto& name : cf_records.front().set.query.feature_names) {
      if (!clinical.count(name)) clinical[name] = 0.0;
      if (!model_w.count(name)) model_w[name] = 0.0;
    }

    const auto cmp = metrics::compare_sparsity(sets, clinical, model_w, patients);
    sparsity_csv += "clinical," + format_double(cmp.clinical.mean) + "," + format_double(cmp.clinical.std_dev) +
                    "," + std::to_string(cmp.clinical.per_counterfactual.size()) + "\n";
    sparsity_csv += "model," + format_double(cmp.model.mean) + "," + format_double(cmp.model.std_dev) + "," +
                    std::to_string(cmp.model.per_counterfactual.size()) + "\n";
    sparsity_csv += "# " + cmp.paired_line() + "\n";

    std::string box_csv = "patient,scheme,min,q1,median,q3,max\n";
    for (const auto& [pid, v] : cmp.clinical_by_patient) {
      box_csv += pid + ",clinical," + format_double(v[0]) + "," + format_double(v[1]) + "," + format_double(v[2]) +
                 "," + format_double(v[3]) + "," + format_double(v[4]) + "\n";
    }
    for (const auto& [pid, v] : cmp.model_by_patient) {
      box_csv += pid + ",model," + format_double(v[0]) + "," + format_double(v[1]) + "," + format_double(v[2]) +
                 "," + format_double(v[3]) + "," + format_double(v[4]) + "\n";
    }
    write_text_file_atomic((mdir / "sparsity_boxplot.csv").string(), box_csv);
  }
  write_text_file_atomic((mdir / "sparsity.csv").string(), sparsity_csv);

  // Interpretability aggregation, when clinician labels are available.
  if (!cfg.clinician_labels.empty() && fs::exists(cfg.clinician_labels)) {
    const auto labels = metrics::clinician_labels_from_csv(read_text_file(cfg.clinician_labels));
    const auto report = metrics::aggregate_interpretability(labels);

    // Marked leads per record, from the render stage.
    std::map<std::string, std::set<std::string>> marked;
    for (const auto& line :
         split(read_text_file((fs::path(cfg.workdir) / artifact::kMarkings).string()), '\n')) {
      if (trim(line).empty()) continue;
      const json j = json::parse(line);
      marked[j.at("record_id").get<std::string>()].insert(j.at("lead").get<std::string>());
    }

    std::string csv = "section,key,count,mean,std\n";
    for (const auto& [tier, s] : report.by_tier) {
      csv += "vvs_tier," + tier + "," + std::to_string(s.count) + "," + format_double(s.vvs_mean) + "," +
             format_double(s.vvs_std) + "\n";
    }
    for (const auto& [reason, s] : report.excluded_by_reason) {
      csv += "vvs_excluded," + reason + "," + std::to_string(s.count) + "," + format_double(s.vvs_mean) + "," +
             format_double(s.vvs_std) + "\n";
    }
    // Alignment per tier over non-excluded labeled reports with markings.
    std::map<std::string, std::vector<double>> align_by_tier;
    for (const auto& l : labels) {
      if (!l.exclusion.empty()) continue;
      const auto it = marked.find(l.record_id);
      const std::vector<std::string> marked_leads =
          it == marked.end() ? std::vector<std::string>{} : std::vector<std::string>(it->second.begin(),
                                                                                     it->second.end());
      align_by_tier[l.tier].push_back(metrics::alignment_score(l.important_leads, marked_leads));
    }
    for (const auto& [tier, scores] : align_by_tier) {
      csv += "alignment," + tier + "," + std::to_string(scores.size()) + "," + format_double(mean(scores)) + "," +
             format_double(stddev_pop(scores)) + "\n";
    }
    write_text_file_atomic((mdir / "interpretability.csv").string(), csv);
  }
}

}  // namespace

bool run_stage(Stage stage, const PipelineConfig& cfg) {
  fs::create_directories(cfg.workdir);
  const auto plan = plan_for(stage, cfg);

  for (const auto& [path, producer] : plan.inputs) {
    if (!fs::exists(path)) {
      if (producer.empty()) throw PreconditionError(stage_name(stage) + std::string(": missing input ") + path);
      throw PreconditionError(std::string("run ") + producer + " first");
    }
  }

  json manifest = load_run_manifest(cfg.workdir);
  const std::string cfg_hash = config_hash_hex(cfg);
  json inputs = json::object();
  for (const auto& [path, producer] : plan.inputs) inputs[manifest_key(cfg, path)] = file_hash_hex(path);

  const auto it = manifest.find(stage_name(stage));
  if (it != manifest.end() && (*it)["config_hash"] == cfg_hash && (*it)["inputs"] == inputs) {
    bool outputs_ok = true;
    for (const auto& out : plan.outputs) {
      if (!fs::exists(out)) {
        outputs_ok = false;
        break;
      }
    }
    if (outputs_ok) return false;  // up to date
  }

  const auto t0 = std::chrono::steady_clock::now();
  switch (stage) {
    case Stage::kIngest: stage_ingest(cfg); break;
    case Stage::kSegment: stage_segment(cfg); break;
    case Stage::kFeatures: stage_features(cfg); break;
    case Stage::kTrain: stage_train(cfg); break;
    case Stage::kRank: stage_rank(cfg); break;
    case Stage::kCurve: stage_curve(cfg); break;
    case Stage::kExplain: stage_explain(cfg); break;
    case Stage::kRender: stage_render(cfg); break;
    case Stage::kEvaluate: stage_evaluate(cfg); break;
  }
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  append_timing(cfg, {std::string("stage ") + stage_name(stage) + " " + format_fixed(seconds, 3) + "s"});

  json entry;
  entry["config_hash"] = cfg_hash;
  entry["inputs"] = inputs;
  json outputs = json::array();
  for (const auto& out : plan.outputs) outputs.push_back(manifest_key(cfg, out));
  entry["outputs"] = outputs;
  entry["version"] = "0.1.0";
  manifest[stage_name(stage)] = entry;
  save_run_manifest(cfg.workdir, manifest);
  return true;
}

void run_all(const PipelineConfig& cfg) {
  for (Stage s : all_stages()) run_stage(s, cfg);
}

std::string make_report_bundle(const std::string& workdir) {
  const fs::path w(workdir);
  const fs::path reports = w / artifact::kReportsDir;
  if (!fs::exists(reports) || fs::is_empty(reports)) {
    throw PreconditionError("bundle: no reports under " + reports.string() + "; run render first");
  }
  const fs::path bundle = w / "bundle";
  fs::remove_all(bundle);
  fs::create_directories(bundle);

  // Per-beat counterfactual tables grouped by record.
  std::map<std::string, std::string> cf_table;  // record -> csv body
  const fs::path cf_path = w / artifact::kCounterfactuals;
  if (fs::exists(cf_path)) {
    for (const auto& line : split(read_text_file(cf_path.string()), '\n')) {
      if (trim(line).empty()) continue;
      const json j = json::parse(line);
      if (j.contains("error")) continue;
      const auto rec = j.at("record_id").get<std::string>();
      auto& body = cf_table[rec];
      const auto names = j.at("features").get<std::vector<std::string>>();
      int cf_index = 0;
      for (const auto& jc : j.at("counterfactuals")) {
        for (const auto& [name, oldnew] : jc.at("changed").items()) {
          body += j.at("feature_set").get<std::string>() + "," + j.at("direction").get<std::string>() + "," +
                  std::to_string(j.at("beat").get<int>()) + "," + std::to_string(cf_index) + "," + name + "," +
                  format_double(oldnew[0].get<double>()) + "," + format_double(oldnew[1].get<double>()) + "\n";
        }
        ++cf_index;
      }
    }
  }

  std::vector<fs::path> svgs;
  for (const auto& e : fs::directory_iterator(reports)) {
    if (e.path().extension() == ".svg") svgs.push_back(e.path());
  }
  std::sort(svgs.begin(), svgs.end());
  for (const auto& svg : svgs) {
    const std::string record_id = svg.stem().string();
    const fs::path dir = bundle / record_id;
    fs::create_directories(dir);
    fs::copy_file(svg, dir / "report.svg");
    std::string csv = "feature_set,direction,beat,cf,feature,old,new\n";
    const auto it = cf_table.find(record_id);
    if (it != cf_table.end()) csv += it->second;
    write_text_file((dir / "cf_table.csv").string(), csv);
  }

  const fs::path mdir = w / artifact::kMetricsDir;
  if (fs::exists(mdir)) {
    std::vector<fs::path> metric_files;
    for (const auto& e : fs::directory_iterator(mdir)) metric_files.push_back(e.path());
    std::sort(metric_files.begin(), metric_files.end());
    for (const auto& f : metric_files) fs::copy_file(f, bundle / f.filename());
  }
  for (const char* name : {artifact::kAlterations, artifact::kAlterationCounts}) {
    if (fs::exists(w / name)) fs::copy_file(w / name, bundle / name);
  }
  return bundle.string();
}

}  // namespace vcce::pipe
