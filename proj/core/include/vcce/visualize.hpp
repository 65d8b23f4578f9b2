#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vcce/counterfactual.hpp"
#include "vcce/ecg.hpp"
#include "vcce/feature_names.hpp"
#include "vcce/features.hpp"

namespace vcce::viz {

// One renderable counterfactual clue on a lead trace.
struct Marking {
  int lead = 0;
  int beat_index = 0;
  feat::AmplitudeKind kind = feat::AmplitudeKind::kR;
  feat::RenderKind render = feat::RenderKind::kPeak;
  int64_t anchor_a = -1;  // peak sample / pair start / segment start
  int64_t anchor_b = -1;  // pair end / segment end (exclusive)
  double emphasis = 0.0;  // selection frequency, in (0, 1]
  int64_t frequency_count = 0;
  int64_t out_of = 0;  // counterfactuals generated for this beat
  std::optional<double> value_overlay;  // measured mV difference for pair kinds
  std::string feature_name;
};

struct BeatCfSet {
  std::string record_id;
  int beat_index = 0;
  const cf::CounterfactualSet* set = nullptr;
};

struct CombinedRow {
  std::string record_id;
  int beat_index = 0;
  std::string feature;
  int64_t change_count = 0;  // counterfactuals that altered the feature
  int64_t out_of = 0;
};

// Joins counterfactual deltas with beat provenance. Features never changed
// are absent. Throws when a set references a beat the matrix does not know.
std::vector<CombinedRow> prepare_data(std::span<const BeatCfSet> sets, const feat::FeatureMatrix& matrix);

struct MarkingsBundle {
  int feature_count = 0;
  std::vector<Marking> markings;
  std::vector<std::string> skipped;  // human-readable log of unplottable rows
};

// Decompresses changed feature names into per-beat markings on the record.
// Temporal features are skipped; beats lacking a required fiducial are
// skipped and logged.
MarkingsBundle build_markings(std::span<const CombinedRow> combined, const EcgRecord& denoised,
                              const FiducialSet& fiducials, int feature_count);

struct ReportLayout {
  int rows = 12;
  int cols = 1;
  double mm_per_mv = 10.0;
  double mm_per_second = 25.0;
  double row_height_mm = 28.0;
  double margin_mm = 12.0;
  bool grid = true;
  std::string color_trace = "#202020";
  std::string color_marking = "#d62728";
  std::string color_grid = "#f3cdc2";
  std::string color_text = "#303030";

  static ReportLayout defaults() { return {}; }
  static ReportLayout from_file(const std::string& path);
  std::string dump() const;
};

// Deterministic SVG document: millimetre grid, 12 lead traces, markings per
// kind (circle / dashed pair line with its distance value / translucent
// segment band) and a legend of marked features. Byte-identical output for
// identical inputs.
std::string render_report(const EcgRecord& record, std::span<const Marking> markings, const ReportLayout& layout);

}  // namespace vcce::viz
