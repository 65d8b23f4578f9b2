#pragma once

#include <array>
#include <string>
#include <vector>

#include "vcce/ecg.hpp"

namespace vcce::feat {

inline constexpr int kNumTemporal = 14;
inline constexpr int kNumAmplitude = 15;
inline constexpr int kNumFeatures = kNumTemporal + kNumAmplitude * kNumLeads;  // 194

enum class TemporalKind : int {
  kRrPrev = 0,
  kRrNext,
  kRrRate,
  kPrInterval,
  kPrSegment,
  kQrs,
  kPWave,
  kTWave,
  kTLeft,
  kQt,
  kQtc,
  kSt,
  kPt,
  kPs,
};

enum class AmplitudeKind : int {
  kR = 0,
  kP,
  kQ,
  kS,
  kT,
  kPq,
  kQr,
  kRs,
  kSt,
  kPs,
  kPt,
  kQs,
  kQt,
  kStMean,
  kStStd,
};

// How an amplitude feature renders on a report.
enum class RenderKind { kPeak, kPairLine, kSegment };

struct DecodedFeature {
  bool temporal = false;
  int lead = -1;                                  // kLeadNames index, -1 for temporal
  TemporalKind temporal_kind = TemporalKind::kRrPrev;
  AmplitudeKind amplitude_kind = AmplitudeKind::kR;

  bool operator==(const DecodedFeature&) const = default;
};

const std::array<const char*, kNumTemporal>& temporal_kind_names();
const std::array<const char*, kNumAmplitude>& amplitude_kind_names();

// The fixed 194-name registry: 14 temporal names, then 15 amplitude names per
// lead in kLeadNames order ("II_R", "V3_ST", "aVF_ST_mean", ...).
const std::vector<std::string>& feature_registry();

// Index in the registry, -1 for unknown names.
int feature_index(const std::string& name);

// Throws on names outside the registry.
DecodedFeature decode_feature_name(const std::string& name);
std::string encode_feature_name(const DecodedFeature& decoded);

bool is_renderable(const DecodedFeature& decoded);          // amplitude features only
RenderKind render_kind(AmplitudeKind kind);
// Peak anchors of a pairwise amplitude feature (e.g. kSt -> {S, T}).
std::pair<Fiducial, Fiducial> pair_anchors(AmplitudeKind kind);

}  // namespace vcce::feat
